#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "xphase/control.hpp"
#include "xphase/error.hpp"
#include "xphase/model.hpp"
#include "xphase/sensitivity.hpp"
#include "xphase/solver.hpp"
#include "xphase/version.hpp"

namespace xphase {

/// Fixed CSV number format: six significant digits, locale-independent.
inline std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

/// FNV-1a 64-bit hash; deterministic across platforms, no seeding.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV renderers. All iterate containers in deterministic (sorted or
// file-given) order so a rerun reproduces every byte.
// ---------------------------------------------------------------------------

/// Per-phase voltage table: one row per bus and phase.
inline std::string voltage_table_csv(const PowerFlowResult& result) {
  std::ostringstream out;
  out << "bus,phase,v_volts,v_pu,angle_deg\n";
  for (const auto& [bus, v] : result.phasors.bus_voltage) {
    for (Phase p : abc_phases()) {
      const Complex vp = v(phase_index(p));
      out << bus << ',' << phase_letter(p) << ',' << g6(std::abs(vp)) << ','
          << g6(std::abs(vp) / result.v_base) << ','
          << g6(phase_angle_deg(vp)) << '\n';
    }
  }
  return out.str();
}

inline std::string violations_csv(const ViolationReport& report) {
  std::ostringstream out;
  out << "bus,phase,v_pu,limit_pu,kind\n";
  for (const Violation& v : report.entries)
    out << v.bus << ',' << phase_letter(v.phase) << ',' << g6(v.v_pu) << ','
        << g6(v.limit) << ',' << (v.over ? "over" : "under") << '\n';
  return out.str();
}

/// Sensitivity matrix: rows labeled `bus.phase`, columns `pv:<id>`.
inline std::string sensitivity_csv(const SensitivityMatrix& sm) {
  std::ostringstream out;
  out << "node";
  for (const std::string& id : sm.pv_ids) out << ",pv:" << id;
  out << '\n';
  for (std::size_t i = 0; i < sm.rows.size(); ++i) {
    out << sm.rows[i].bus << '.' << phase_letter(sm.rows[i].phase);
    for (std::size_t j = 0; j < sm.pv_ids.size(); ++j)
      out << ',' << g6(sm.values(static_cast<int>(i), static_cast<int>(j)));
    out << '\n';
  }
  return out.str();
}

/// Phasor endpoints for external plotting: magnitude/angle plus cartesian
/// components per phase and per decomposition term.
inline std::string phasor_csv(const PhasorReport& report) {
  std::ostringstream out;
  out << "phase,component,magnitude_v,angle_deg,re_v,im_v\n";
  static constexpr const char* kComponents[] = {"base", "perturbed",
                                                "dv_earth", "dv_mut"};
  for (Phase p : abc_phases()) {
    const auto& e = report.phases[phase_index(p)];
    const Phasor* parts[] = {&e.base, &e.perturbed, &e.dv_earth, &e.dv_mut};
    for (int k = 0; k < 4; ++k) {
      const double rad = parts[k]->angle_deg * std::numbers::pi / 180.0;
      out << phase_letter(p) << ',' << kComponents[k] << ','
          << g6(parts[k]->magnitude) << ',' << g6(parts[k]->angle_deg) << ','
          << g6(parts[k]->magnitude * std::cos(rad)) << ','
          << g6(parts[k]->magnitude * std::sin(rad)) << '\n';
    }
  }
  return out.str();
}

/// Controller round trace: violations seen per round and the action taken.
inline std::string trace_csv(const ControlPlan& plan) {
  std::ostringstream out;
  out << "round,violations,worst_bus,worst_phase,worst_v_pu,action_pv,"
         "action_dq_kvar\n";
  for (const TraceRound& tr : plan.trace) {
    std::string wb, wp, wv;
    if (!tr.violations.empty()) {
      const TraceViolation* worst = &tr.violations.front();
      for (const TraceViolation& v : tr.violations)
        if (v.excess_pu() > worst->excess_pu()) worst = &v;
      wb = worst->bus;
      wp = std::string(1, phase_letter(worst->phase));
      wv = g6(worst->v_pu);
    }
    out << tr.round << ',' << tr.violations.size() << ',' << wb << ',' << wp
        << ',' << wv << ',' << tr.action_pv << ','
        << (tr.action_pv.empty() ? std::string() : g6(tr.action_dq_kvar))
        << '\n';
  }
  return out.str();
}

/// One comparison row as CSV lines (strategy per line).
inline std::string comparison_rows_csv(const ComparisonRow& row,
                                       bool with_header) {
  std::ostringstream out;
  if (with_header)
    out << "instance,strategy,violations,max_v_pu,total_q_kvar,iterations,"
           "cleared,error\n";
  const std::pair<const char*, const StrategyOutcome*> cells[] = {
      {"upf", &row.upf}, {"per-phase", &row.per_phase}, {"full", &row.full}};
  for (const auto& [name, s] : cells)
    out << row.instance << ',' << name << ',' << s->violations << ','
        << g6(s->max_v_pu) << ',' << g6(s->total_q_kvar) << ','
        << s->iterations << ',' << (s->cleared ? 1 : 0) << ',' << s->error
        << '\n';
  return out.str();
}

inline std::string comparison_summary_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "instance,strategy,violations,max_v_pu,total_q_kvar,iterations,"
         "cleared,error\n";
  for (const ComparisonRow& row : report.rows)
    out << comparison_rows_csv(row, false);
  return out.str();
}

/// Staged addition study, one row per step.
inline std::string study_csv(const AdditionStudy& study) {
  std::ostringstream out;
  out << "step,added_pv,upf_violations,upf_a,upf_b,upf_c,upf_max_v_pu,"
         "greedy_rounds,residual,flip_phases,flip_action,cleared,"
         "total_q_kvar\n";
  for (const AdditionStep& s : study.steps) {
    std::string flips;
    for (Phase p : s.flip_phases) flips += phase_letter(p);
    out << s.step << ',' << s.added_pv << ',' << s.upf_violations << ','
        << s.upf_by_phase[0] << ',' << s.upf_by_phase[1] << ','
        << s.upf_by_phase[2] << ',' << g6(s.upf_max_v_pu) << ','
        << s.plan.iterations << ',' << s.residual_count << ',' << flips << ','
        << (s.flip_action ? 1 : 0) << ',' << (s.ok ? 1 : 0) << ','
        << g6(s.plan.total_q_kvar) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// JSON renderers (full precision).
// ---------------------------------------------------------------------------

inline nlohmann::json complex_json(Complex v) {
  return nlohmann::json{{"re", v.real()}, {"im", v.imag()}};
}

inline nlohmann::json matrix_json(const Eigen::MatrixXcd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(complex_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json powerflow_json(const PowerFlowResult& result) {
  nlohmann::json j;
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["v_base_v"] = result.v_base;
  j["source_bus"] = result.source_bus;
  nlohmann::json volts;
  for (const auto& [bus, v] : result.phasors.bus_voltage) {
    nlohmann::json rec;
    for (Phase p : abc_phases()) {
      const Complex vp = v(phase_index(p));
      rec[std::string(1, phase_letter(p))] = {
          {"magnitude_v", std::abs(vp)},
          {"angle_deg", phase_angle_deg(vp)},
          {"pu", std::abs(vp) / result.v_base}};
    }
    volts[bus] = std::move(rec);
  }
  j["voltages"] = std::move(volts);
  nlohmann::json src = nlohmann::json::array();
  for (Phase p : abc_phases())
    src.push_back(complex_json(result.source_power_va(phase_index(p))));
  j["source_power_va"] = std::move(src);
  j["total_loss_va"] = complex_json(result.total_loss_va);
  j["total_load_va"] = complex_json(result.total_load_va);
  j["total_pv_injection_va"] = complex_json(result.total_pv_injection_va);
  j["total_cap_injection_va"] = complex_json(result.total_cap_injection_va);
  return j;
}

inline nlohmann::json violations_json(const ViolationReport& report) {
  nlohmann::json j;
  j["total"] = report.total();
  j["per_phase"] = {{"A", report.count_per_phase[0]},
                    {"B", report.count_per_phase[1]},
                    {"C", report.count_per_phase[2]}};
  j["max_v_pu"] = report.max_v_pu;
  nlohmann::json list = nlohmann::json::array();
  for (const Violation& v : report.entries)
    list.push_back({{"bus", v.bus},
                    {"phase", std::string(1, phase_letter(v.phase))},
                    {"v_pu", v.v_pu},
                    {"limit_pu", v.limit},
                    {"kind", v.over ? "over" : "under"}});
  j["entries"] = std::move(list);
  return j;
}

inline nlohmann::json phasor_json(const Phasor& p) {
  return {{"magnitude_v", p.magnitude}, {"angle_deg", p.angle_deg}};
}

inline nlohmann::json phasor_report_json(const PhasorReport& report) {
  nlohmann::json j;
  for (Phase p : abc_phases()) {
    const auto& e = report.phases[phase_index(p)];
    j["phases"][std::string(1, phase_letter(p))] = {
        {"base", phasor_json(e.base)},
        {"perturbed", phasor_json(e.perturbed)},
        {"dv_earth", phasor_json(e.dv_earth)},
        {"dv_mut", phasor_json(e.dv_mut)}};
  }
  j["closure_error_v"] = report.closure_error_v;
  return j;
}

inline nlohmann::json plan_json(const ControlPlan& plan) {
  nlohmann::json j;
  nlohmann::json actions = nlohmann::json::array();
  for (const ControlAction& a : plan.actions)
    actions.push_back({{"pv", a.pv}, {"q_set_kvar", a.q_set_kvar}});
  j["actions"] = std::move(actions);
  j["q_final_kvar"] = plan.q_final_kvar;
  j["total_q_kvar"] = plan.total_q_kvar;
  j["iterations"] = plan.iterations;
  j["cleared"] = plan.cleared;
  j["structurally_infeasible"] = plan.structurally_infeasible;
  j["fallback_used"] = plan.fallback_used;
  j["max_v_pu"] = plan.max_v_pu;
  j["note"] = plan.note;
  j["residual"] = violations_json(plan.residual);
  return j;
}

inline nlohmann::json study_json(const AdditionStudy& study) {
  nlohmann::json j;
  nlohmann::json steps = nlohmann::json::array();
  for (const AdditionStep& s : study.steps) {
    nlohmann::json js;
    js["step"] = s.step;
    js["added_pv"] = s.added_pv;
    js["upf_violations"] = s.upf_violations;
    js["upf_by_phase"] = {{"A", s.upf_by_phase[0]},
                          {"B", s.upf_by_phase[1]},
                          {"C", s.upf_by_phase[2]}};
    js["upf_max_v_pu"] = s.upf_max_v_pu;
    std::string flips;
    for (Phase p : s.flip_phases) flips += phase_letter(p);
    js["flip_phases"] = flips;
    js["flip_round"] = s.flip_round;
    js["flip_action"] = s.flip_action;
    js["residual"] = s.residual_count;
    js["cleared"] = s.ok;
    if (s.step > 0) js["plan"] = plan_json(s.plan);
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  j["last_clean_step"] = study.last_clean_step;
  j["aborted"] = study.aborted;
  if (study.aborted) j["error"] = study.error;
  return j;
}

// ---------------------------------------------------------------------------
// Run manifest and bundle emission.
// ---------------------------------------------------------------------------

/// Reproducibility record embedded in every output bundle. Contains no
/// timestamps or machine identifiers: a rerun with identical inputs writes
/// byte-identical files.
struct RunManifest {
  std::string subcommand;
  std::string feeder_path;
  std::string profile_path;               ///< empty when no profile was used
  std::vector<std::string> instances;     ///< instance labels in run order
  std::string strategy;                   ///< control/compare runs
  std::map<std::string, std::string> parameters;  ///< stringified knobs
  std::string feeder_hash;   ///< FNV-1a 64 of the feeder file bytes
  std::string profile_hash;  ///< FNV-1a 64 of the profile file bytes
};

inline nlohmann::json manifest_json(
    const RunManifest& m,
    const std::vector<std::pair<std::string, std::string>>& outputs) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["tool"] = {{"name", "xphase"}, {"version", version()}};
  j["subcommand"] = m.subcommand;
  j["inputs"]["feeder"] = {{"path", m.feeder_path},
                           {"fnv1a64", m.feeder_hash}};
  if (!m.profile_path.empty())
    j["inputs"]["profile"] = {{"path", m.profile_path},
                              {"fnv1a64", m.profile_hash}};
  j["instances"] = m.instances;
  if (!m.strategy.empty()) j["strategy"] = m.strategy;
  j["parameters"] = m.parameters;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, hash] : outputs)
    files.push_back({{"name", name}, {"fnv1a64", hash}});
  j["outputs"] = std::move(files);
  return j;
}

/// An ordered set of named report files, rendered in memory before writing.
struct ReportBundle {
  std::vector<std::pair<std::string, std::string>> files;  ///< name → content

  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }
};

/// Writes every bundle file plus `manifest.json` into `out_dir` (created if
/// missing) and returns the file names written, manifest last. File contents
/// and names are fully determined by the run inputs.
inline std::vector<std::string> emit_reports(const ReportBundle& results,
                                             const RunManifest& manifest,
                                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw Error(ErrorKind::io,
                "cannot create output directory '" + out_dir + "': " +
                    ec.message());

  const auto write_file = [&](const std::string& name,
                              const std::string& content) {
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io, "cannot open '" + path.string() +
                                           "' for writing");
    f << content;
    if (!f) throw Error(ErrorKind::io, "write failed for '" + path.string() +
                                           "'");
  };

  std::vector<std::string> written;
  std::vector<std::pair<std::string, std::string>> hashes;
  for (const auto& [name, content] : results.files) {
    write_file(name, content);
    written.push_back(name);
    hashes.emplace_back(name, hex64(fnv1a64(content)));
  }
  write_file("manifest.json", manifest_json(manifest, hashes).dump(2) + "\n");
  written.push_back("manifest.json");
  return written;
}

/// Hashes a file's bytes for the manifest; io error when unreadable.
inline std::string hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return hex64(fnv1a64(buf.str()));
}

}  // namespace xphase
