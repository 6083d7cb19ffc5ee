// xphase command-line front end: feeder ingestion, power flow, sensitivity,
// decomposition, and reactive-power control studies with reproducible,
// machine-readable output bundles.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xphase/xphase.hpp"

namespace {

using nlohmann::json;
using namespace xphase;

constexpr const char* kSignNote =
    "Reactive setpoints are absorption-positive: q_set > 0 absorbs "
    "(inductive, +jQ), q_set < 0 injects (capacitive).";

struct CommonOpts {
  std::string feeder;
  std::string profile;
  std::string instance;
  std::string out;
  std::string config;
};

json load_config_json(const std::string& path) {
  if (path.empty()) return json::object();
  const json cfg = detail::parse_json_file(path);
  if (!cfg.is_object())
    throw Error(ErrorKind::usage, "config file '" + path +
                                      "' must hold a JSON object");
  return cfg;
}

/// Applies a config-file value to `var` unless the flag was given on the
/// command line (flags always win).
template <typename T>
void config_fill(const json& cfg, const char* key, const CLI::Option* opt,
                 T& var) {
  if (opt != nullptr && opt->count() > 0) return;
  if (!cfg.contains(key)) return;
  try {
    var = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::usage, std::string("config key '") + key +
                                      "' has the wrong type");
  }
}

InstanceScaling resolve_scaling(const Feeder& feeder, const CommonOpts& o,
                                TimeSeriesProfile* profile_out = nullptr) {
  if (o.profile.empty()) {
    if (!o.instance.empty())
      throw Error(ErrorKind::usage,
                  "--instance requires --profile to resolve against");
    return {};
  }
  const TimeSeriesProfile profile = load_profile(o.profile, feeder);
  if (profile_out != nullptr) *profile_out = profile;
  if (o.instance.empty()) return {};
  return instance_scaling(profile, o.instance);
}

RunManifest make_manifest(const std::string& subcommand, const CommonOpts& o,
                          const std::vector<std::string>& instances,
                          const std::string& strategy,
                          const std::map<std::string, std::string>& params) {
  RunManifest m;
  m.subcommand = subcommand;
  m.feeder_path = o.feeder;
  m.profile_path = o.profile;
  m.instances = instances;
  m.strategy = strategy;
  m.parameters = params;
  m.feeder_hash = hash_file(o.feeder);
  if (!o.profile.empty()) m.profile_hash = hash_file(o.profile);
  return m;
}

std::string dnum(double v) { return json(v).dump(); }

ControlConfig control_config_from(const VoltageLimits& limits, double step_q,
                                  int max_rounds, double delta_q,
                                  double margin, int max_outer,
                                  double tolerance) {
  ControlConfig cfg;
  cfg.limits = limits;
  cfg.step_q_kvar = step_q;
  cfg.max_rounds = max_rounds;
  cfg.sm_delta_q_kvar = delta_q;
  cfg.limit_margin_pu = margin;
  cfg.max_outer_rounds = max_outer;
  cfg.sm_refresh_threshold_kvar = 5.0 * step_q;
  cfg.solver.tolerance_pu = tolerance;
  return cfg;
}

std::map<std::string, std::string> control_params(const ControlConfig& cfg) {
  return {{"v_min", dnum(cfg.limits.v_min)},
          {"v_max", dnum(cfg.limits.v_max)},
          {"step_q_kvar", dnum(cfg.step_q_kvar)},
          {"max_rounds", std::to_string(cfg.max_rounds)},
          {"sm_delta_q_kvar", dnum(cfg.sm_delta_q_kvar)},
          {"limit_margin_pu", dnum(cfg.limit_margin_pu)},
          {"max_outer_rounds", std::to_string(cfg.max_outer_rounds)},
          {"tolerance_pu", dnum(cfg.solver.tolerance_pu)}};
}

VoltageLimits limits_from(const std::vector<double>& v) {
  if (v.size() != 2 || v[0] >= v[1])
    throw Error(ErrorKind::usage,
                "--limits needs two ascending values: vmin,vmax");
  return {v[0], v[1]};
}

// ---------------------------------------------------------------------------

int run_impedance(const CommonOpts& o, const std::string& segment_id) {
  const Feeder f = load_feeder(o.feeder);
  std::vector<const LineSegment*> segments;
  if (segment_id.empty())
    for (const LineSegment& s : f.segments) segments.push_back(&s);
  else
    segments.push_back(&f.segment(segment_id));

  json bundle = json::object();
  for (const LineSegment* seg : segments) {
    const PrimitiveImpedance prim = build_primitive(f, *seg);
    const ImpedanceDecomposition dec = decompose(prim);
    const Eigen::Matrix3cd phase = segment_phase_impedance(f, *seg);

    std::cout << "segment " << seg->id << " (" << seg->from_bus << " -> "
              << seg->to_bus << ", " << g6(seg->length_miles)
              << " mi, geometry " << seg->geometry << ")\n";
    const auto print_matrix = [](const char* name,
                                 const Eigen::MatrixXcd& m) {
      std::cout << "  " << name << " [ohm]:\n";
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::cout << "   ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          const Complex z = m(i, j);
          std::cout << "  " << g6(z.real()) << (z.imag() < 0 ? "-j" : "+j")
                    << g6(std::abs(z.imag()));
        }
        std::cout << '\n';
      }
    };
    print_matrix("Z_prim", prim.z);
    print_matrix("Z_earth", dec.z_earth);
    print_matrix("Z_mut", dec.z_mut);
    print_matrix("Z_phase (Kron)", phase);
    std::cout << '\n';

    json js;
    js["from_bus"] = seg->from_bus;
    js["to_bus"] = seg->to_bus;
    js["length_miles"] = seg->length_miles;
    js["geometry"] = seg->geometry;
    json labels = json::array();
    for (Phase p : prim.labels)
      labels.push_back(std::string(1, phase_letter(p)));
    js["conductors"] = std::move(labels);
    js["z_prim_ohm"] = matrix_json(prim.z);
    js["z_earth_ohm"] = matrix_json(dec.z_earth);
    js["z_mut_ohm"] = matrix_json(dec.z_mut);
    js["z_phase_ohm"] = matrix_json(phase);
    bundle[seg->id] = std::move(js);
  }

  if (!o.out.empty()) {
    ReportBundle rb;
    rb.add("impedance.json", bundle.dump(2) + "\n");
    emit_reports(rb, make_manifest("impedance", o, {}, "", {}), o.out);
  }
  return 0;
}

int run_powerflow(const CommonOpts& o, const std::string& model,
                  double tolerance, int max_iterations,
                  const VoltageLimits& limits) {
  const Feeder f = load_feeder(o.feeder);
  const InstanceScaling scaling = resolve_scaling(f, o);
  ConvergenceConfig cfg;
  cfg.tolerance_pu = tolerance;
  cfg.max_iterations = max_iterations;

  const bool two_bus_shape = f.segments.size() == 1 && f.buses().size() == 2;
  PowerFlowResult result;
  if (model == "two-bus" || (model == "auto" && two_bus_shape)) {
    result = solve_two_bus(f, cfg, scaling);
  } else if (model == "radial" || model == "auto") {
    result = solve_radial(f, cfg, scaling);
  } else {
    throw Error(ErrorKind::usage, "unknown model '" + model + "'");
  }
  const ViolationReport violations = check_violations(result, limits);

  std::cout << voltage_table_csv(result);
  std::cout << "# converged=" << (result.converged ? "yes" : "no")
            << " iterations=" << result.iterations
            << " violations=" << violations.total()
            << " max_v_pu=" << g6(violations.max_v_pu) << '\n';

  if (!o.out.empty()) {
    const std::string tag = o.instance.empty() ? "" : "_" + o.instance;
    ReportBundle rb;
    rb.add("powerflow" + tag + "_voltages.csv", voltage_table_csv(result));
    rb.add("powerflow" + tag + "_violations.csv", violations_csv(violations));
    json summary = powerflow_json(result);
    summary["violations"] = violations_json(violations);
    rb.add("powerflow" + tag + "_summary.json", summary.dump(2) + "\n");
    const std::vector<std::string> labels =
        o.instance.empty() ? std::vector<std::string>{}
                           : std::vector<std::string>{o.instance};
    emit_reports(rb,
                 make_manifest("powerflow", o, labels, "",
                               {{"model", model},
                                {"tolerance_pu", dnum(tolerance)},
                                {"max_iterations",
                                 std::to_string(max_iterations)}}),
                 o.out);
  }
  return 0;
}

int run_sensitivity(const CommonOpts& o, double delta_q,
                    const std::vector<std::string>& pvs, double tolerance) {
  const Feeder f = load_feeder(o.feeder);
  const InstanceScaling scaling = resolve_scaling(f, o);
  std::vector<std::string> pv_ids = pvs;
  if (pv_ids.empty())
    for (const PVSpec& pv : f.pvs) pv_ids.push_back(pv.id);
  ConvergenceConfig cfg;
  cfg.tolerance_pu = tolerance;

  const SensitivityMatrix sm =
      build_vqsm(f, monitored_node_phases(f), pv_ids, delta_q, cfg, scaling,
                 o.instance);
  std::cout << sensitivity_csv(sm);

  if (!o.out.empty()) {
    const std::string tag = o.instance.empty() ? "" : "_" + o.instance;
    ReportBundle rb;
    rb.add("sensitivity" + tag + ".csv", sensitivity_csv(sm));
    const std::vector<std::string> labels =
        o.instance.empty() ? std::vector<std::string>{}
                           : std::vector<std::string>{o.instance};
    emit_reports(rb,
                 make_manifest("sensitivity", o, labels, "",
                               {{"delta_q_kvar", dnum(delta_q)},
                                {"tolerance_pu", dnum(tolerance)}}),
                 o.out);
  }
  return 0;
}

int run_decompose(const CommonOpts& o, const std::string& perturb,
                  double tolerance) {
  const auto colon = perturb.rfind(':');
  if (colon == std::string::npos || colon == 0 ||
      colon + 1 == perturb.size())
    throw Error(ErrorKind::usage,
                "--perturb wants <pv_id>:<delta_kvar> (e.g. pvA:+100)");
  const std::string pv_id = perturb.substr(0, colon);
  double dq = 0.0;
  try {
    std::size_t used = 0;
    dq = std::stod(perturb.substr(colon + 1), &used);
    if (used != perturb.size() - colon - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw Error(ErrorKind::usage,
                "--perturb delta '" + perturb.substr(colon + 1) +
                    "' is not a number");
  }

  const Feeder base = load_feeder(o.feeder);
  const InstanceScaling scaling = resolve_scaling(base, o);
  Feeder pert = base;
  bool found = false;
  for (PVSpec& pv : pert.pvs)
    if (pv.id == pv_id) {
      pv.q_set_kvar += dq;
      found = true;
      break;
    }
  if (!found)
    throw Error(ErrorKind::validation,
                "feeder has no PV named '" + pv_id + "'");

  ConvergenceConfig cfg;
  cfg.tolerance_pu = tolerance;
  const PowerFlowResult r0 = solve_two_bus(base, cfg, scaling);
  const PowerFlowResult r1 = solve_two_bus(pert, cfg, scaling);
  const DeltaDecomposition dec = decompose_delta(base, pert, cfg, scaling);
  const std::string load_bus = base.segments.front().from_bus ==
                                       base.source_bus
                                   ? base.segments.front().to_bus
                                   : base.segments.front().from_bus;
  const PhasorReport report = phasor_report(dec, r0, r1, load_bus);

  json out = phasor_report_json(report);
  out["perturbed_pv"] = pv_id;
  out["delta_q_kvar"] = dq;
  std::cout << out.dump(2) << '\n';

  if (!o.out.empty()) {
    ReportBundle rb;
    rb.add("decompose.json", out.dump(2) + "\n");
    rb.add("decompose_phasors.csv", phasor_csv(report));
    emit_reports(rb,
                 make_manifest("decompose", o, {}, "",
                               {{"perturb", perturb},
                                {"tolerance_pu", dnum(tolerance)}}),
                 o.out);
  }
  return 0;
}

int run_control(const CommonOpts& o, const std::string& strategy,
                const ControlConfig& cfg) {
  const Feeder f = load_feeder(o.feeder);
  const InstanceScaling scaling = resolve_scaling(f, o);

  ControlPlan plan;
  if (strategy == "greedy") {
    std::vector<std::string> ids;
    for (const PVSpec& pv : f.pvs) ids.push_back(pv.id);
    const SensitivityMatrix sm =
        build_vqsm(f, monitored_node_phases(f), ids, cfg.sm_delta_q_kvar,
                   cfg.solver, scaling, o.instance);
    plan = prioritized_q_intervention(f, sm, cfg, scaling);
  } else if (strategy == "lp-full" || strategy == "lp-perphase") {
    std::vector<std::string> ids;
    for (const PVSpec& pv : f.pvs) ids.push_back(pv.id);
    const SensitivityMatrix sm =
        build_vqsm(f, monitored_node_phases(f), ids, cfg.sm_delta_q_kvar,
                   cfg.solver, scaling, o.instance);
    plan = lp_min_q(f, sm,
                    strategy == "lp-full" ? PartitionScheme::full
                                          : PartitionScheme::per_phase,
                    cfg, scaling);
  } else if (strategy == "iterative" || strategy == "iterative-perphase") {
    plan = iterative_control(f,
                             strategy == "iterative"
                                 ? PartitionScheme::full
                                 : PartitionScheme::per_phase,
                             cfg, scaling);
  } else {
    throw Error(ErrorKind::usage, "unknown strategy '" + strategy + "'");
  }

  std::cout << plan_json(plan).dump(2) << '\n';

  if (!o.out.empty()) {
    const std::string tag = o.instance.empty() ? "" : "_" + o.instance;
    ReportBundle rb;
    rb.add("control" + tag + "_plan.json", plan_json(plan).dump(2) + "\n");
    rb.add("control" + tag + "_trace.csv", trace_csv(plan));
    rb.add("control" + tag + "_residual.csv", violations_csv(plan.residual));
    const std::vector<std::string> labels =
        o.instance.empty() ? std::vector<std::string>{}
                           : std::vector<std::string>{o.instance};
    emit_reports(
        rb, make_manifest("control", o, labels, strategy, control_params(cfg)),
        o.out);
  }
  return 0;
}

int run_compare(const CommonOpts& o, std::vector<std::string> instances,
                const ControlConfig& cfg) {
  const Feeder f = load_feeder(o.feeder);
  if (o.profile.empty())
    throw Error(ErrorKind::usage, "compare requires --profile");
  const TimeSeriesProfile profile = load_profile(o.profile, f);
  if (instances.empty()) instances = profile.instances;

  const ComparisonReport report =
      compare_controllers(f, profile, instances, cfg);
  std::cout << comparison_summary_csv(report);

  if (!o.out.empty()) {
    ReportBundle rb;
    for (const ComparisonRow& row : report.rows)
      rb.add("compare_" + row.instance + ".csv",
             comparison_rows_csv(row, true));
    rb.add("compare_summary.csv", comparison_summary_csv(report));
    emit_reports(rb,
                 make_manifest("compare", o, instances, "all",
                               control_params(cfg)),
                 o.out);
  }
  return 0;
}

int run_addition_study(const CommonOpts& o, const ControlConfig& cfg) {
  const Feeder f = load_feeder(o.feeder);
  const InstanceScaling scaling = resolve_scaling(f, o);
  const AdditionStudy study = pv_addition_study(f, cfg, scaling);

  std::cout << study_csv(study);
  std::cout << "# last_clean_step=" << study.last_clean_step
            << (study.aborted ? " aborted: " + study.error : std::string())
            << '\n';

  if (!o.out.empty()) {
    const std::string tag = o.instance.empty() ? "" : "_" + o.instance;
    ReportBundle rb;
    rb.add("addition_study" + tag + ".csv", study_csv(study));
    rb.add("addition_study" + tag + ".json", study_json(study).dump(2) + "\n");
    const std::vector<std::string> labels =
        o.instance.empty() ? std::vector<std::string>{}
                           : std::vector<std::string>{o.instance};
    emit_reports(rb,
                 make_manifest("addition-study", o, labels, "greedy",
                               control_params(cfg)),
                 o.out);
  }
  if (study.aborted)
    throw Error(ErrorKind::convergence, "study aborted: " + study.error);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      std::string("xphase — unbalanced distribution feeder simulator and "
                  "reactive-power control toolkit.\n") +
      kSignNote};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  CommonOpts o;
  const auto add_common = [&](CLI::App* sub, bool with_instance = true) {
    sub->add_option("--feeder", o.feeder, "feeder JSON path")->required();
    sub->add_option("--out", o.out,
                    "directory for the report bundle (created if missing)");
    sub->add_option("--config", o.config,
                    "JSON config file; command-line flags take precedence");
    if (with_instance) {
      sub->add_option("--profile", o.profile, "time-series profile CSV");
      sub->add_option("--instance", o.instance,
                      "instance label within --profile");
    }
  };

  // impedance ---------------------------------------------------------------
  auto* imp = app.add_subcommand(
      "impedance", std::string("print per-segment impedance matrices "
                               "(primitive, earth, mutual, Kron). ") +
                       kSignNote);
  std::string segment_id;
  add_common(imp, false);
  imp->add_option("--segment", segment_id,
                  "segment id (default: every segment)");

  // powerflow ---------------------------------------------------------------
  auto* pf = app.add_subcommand(
      "powerflow",
      std::string("solve the feeder and print the voltage table. ") +
          kSignNote);
  std::string model = "auto";
  double pf_tol = 1e-9;
  int pf_maxit = 100;
  std::vector<double> pf_limits{0.95, 1.05};
  add_common(pf);
  auto* pf_model = pf->add_option(
      "--model", model, "solver: auto | two-bus | radial (default auto)");
  auto* pf_tol_opt =
      pf->add_option("--tolerance", pf_tol, "convergence tolerance, p.u.");
  auto* pf_maxit_opt =
      pf->add_option("--max-iterations", pf_maxit, "iteration budget");
  auto* pf_lim = pf->add_option("--limits", pf_limits,
                                "voltage band vmin,vmax in p.u.")
                     ->delimiter(',')
                     ->expected(2);

  // sensitivity ---------------------------------------------------------------
  auto* sens = app.add_subcommand(
      "sensitivity",
      std::string("build the voltage/reactive-power sensitivity matrix "
                  "(V/kVAr) by perturbation. ") +
          kSignNote);
  double delta_q = 100.0;
  std::vector<std::string> pv_list;
  double sens_tol = 1e-9;
  add_common(sens);
  auto* sens_dq = sens->add_option(
      "--delta-q", delta_q, "probe size, kVAr (default 100; absorption)");
  sens->add_option("--pvs", pv_list, "subset of PV ids (default: all)")
      ->delimiter(',');
  auto* sens_tol_opt =
      sens->add_option("--tolerance", sens_tol, "convergence tolerance, p.u.");

  // decompose ---------------------------------------------------------------
  auto* dec = app.add_subcommand(
      "decompose",
      std::string("split a two-bus voltage change into earth-return and "
                  "mutual components. ") +
          kSignNote);
  std::string perturb;
  double dec_tol = 1e-9;
  add_common(dec);
  dec->add_option("--perturb", perturb,
                  "perturbation as <pv_id>:<delta_kvar>, e.g. pvA:+100")
      ->required();
  auto* dec_tol_opt =
      dec->add_option("--tolerance", dec_tol, "convergence tolerance, p.u.");

  // control -------------------------------------------------------------------
  auto* ctl = app.add_subcommand(
      "control",
      std::string("compute a reactive-power dispatch that clears voltage "
                  "violations. ") +
          kSignNote);
  std::string strategy = "iterative";
  std::vector<double> limits_v{0.95, 1.05};
  double step_q = 10.0, ctl_delta_q = 50.0, margin = 0.001, ctl_tol = 1e-9;
  int max_rounds = 200, max_outer = 5;
  add_common(ctl);
  auto* ctl_strat = ctl->add_option(
      "--strategy", strategy,
      "greedy | lp-full | lp-perphase | iterative | iterative-perphase");
  auto* ctl_lim = ctl->add_option("--limits", limits_v,
                                  "voltage band vmin,vmax in p.u.")
                      ->delimiter(',')
                      ->expected(2);
  auto* ctl_step = ctl->add_option("--step-q", step_q,
                                   "greedy increment, kVAr (default 10)");
  auto* ctl_rounds = ctl->add_option("--max-rounds", max_rounds,
                                     "greedy round budget (default 200)");
  auto* ctl_dq = ctl->add_option(
      "--delta-q", ctl_delta_q,
      "sensitivity probe size, kVAr (default 50 for controllers)");
  auto* ctl_margin = ctl->add_option(
      "--margin", margin, "LP guard band inside the limits, p.u.");
  auto* ctl_outer = ctl->add_option("--max-outer", max_outer,
                                    "iterative outer-round budget");
  auto* ctl_tol_opt =
      ctl->add_option("--tolerance", ctl_tol, "convergence tolerance, p.u.");

  // compare -------------------------------------------------------------------
  auto* cmp = app.add_subcommand(
      "compare",
      std::string("compare unity-PF vs per-phase vs cross-phase control "
                  "over profile instances. ") +
          kSignNote);
  std::vector<std::string> cmp_instances;
  std::vector<double> cmp_limits{0.95, 1.05};
  double cmp_delta_q = 50.0, cmp_margin = 0.001, cmp_tol = 1e-9;
  int cmp_outer = 5;
  add_common(cmp);
  cmp->add_option("--instances", cmp_instances,
                  "instance labels (default: all in the profile)")
      ->delimiter(',');
  auto* cmp_lim = cmp->add_option("--limits", cmp_limits,
                                  "voltage band vmin,vmax in p.u.")
                      ->delimiter(',')
                      ->expected(2);
  auto* cmp_dq = cmp->add_option("--delta-q", cmp_delta_q,
                                 "sensitivity probe size, kVAr");
  auto* cmp_margin_opt = cmp->add_option(
      "--margin", cmp_margin, "LP guard band inside the limits, p.u.");
  auto* cmp_outer_opt =
      cmp->add_option("--max-outer", cmp_outer, "iterative outer budget");
  auto* cmp_tol_opt =
      cmp->add_option("--tolerance", cmp_tol, "convergence tolerance, p.u.");

  // addition-study ------------------------------------------------------------
  auto* stu = app.add_subcommand(
      "addition-study",
      std::string("staged interconnection study over the feeder's pv_pool "
                  "with greedy control at each step. ") +
          kSignNote);
  std::vector<double> stu_limits{0.95, 1.05};
  double stu_step = 10.0, stu_dq = 50.0, stu_tol = 1e-9;
  int stu_rounds = 200;
  add_common(stu);
  auto* stu_lim = stu->add_option("--limits", stu_limits,
                                  "voltage band vmin,vmax in p.u.")
                      ->delimiter(',')
                      ->expected(2);
  auto* stu_step_opt = stu->add_option("--step-q", stu_step,
                                       "greedy increment, kVAr (default 10)");
  auto* stu_rounds_opt = stu->add_option("--max-rounds", stu_rounds,
                                         "greedy round budget (default 200)");
  auto* stu_dq_opt = stu->add_option("--delta-q", stu_dq,
                                     "sensitivity probe size, kVAr");
  auto* stu_tol_opt =
      stu->add_option("--tolerance", stu_tol, "convergence tolerance, p.u.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    const json cfg_json = load_config_json(o.config);

    if (imp->parsed()) {
      config_fill(cfg_json, "segment", nullptr, segment_id);
      return run_impedance(o, segment_id);
    }
    if (pf->parsed()) {
      config_fill(cfg_json, "model", pf_model, model);
      config_fill(cfg_json, "tolerance", pf_tol_opt, pf_tol);
      config_fill(cfg_json, "max_iterations", pf_maxit_opt, pf_maxit);
      config_fill(cfg_json, "limits", pf_lim, pf_limits);
      return run_powerflow(o, model, pf_tol, pf_maxit,
                           limits_from(pf_limits));
    }
    if (sens->parsed()) {
      config_fill(cfg_json, "delta_q", sens_dq, delta_q);
      config_fill(cfg_json, "tolerance", sens_tol_opt, sens_tol);
      return run_sensitivity(o, delta_q, pv_list, sens_tol);
    }
    if (dec->parsed()) {
      config_fill(cfg_json, "tolerance", dec_tol_opt, dec_tol);
      return run_decompose(o, perturb, dec_tol);
    }
    if (ctl->parsed()) {
      config_fill(cfg_json, "strategy", ctl_strat, strategy);
      config_fill(cfg_json, "limits", ctl_lim, limits_v);
      config_fill(cfg_json, "step_q", ctl_step, step_q);
      config_fill(cfg_json, "max_rounds", ctl_rounds, max_rounds);
      config_fill(cfg_json, "delta_q", ctl_dq, ctl_delta_q);
      config_fill(cfg_json, "margin", ctl_margin, margin);
      config_fill(cfg_json, "max_outer", ctl_outer, max_outer);
      config_fill(cfg_json, "tolerance", ctl_tol_opt, ctl_tol);
      return run_control(o, strategy,
                         control_config_from(limits_from(limits_v), step_q,
                                             max_rounds, ctl_delta_q, margin,
                                             max_outer, ctl_tol));
    }
    if (cmp->parsed()) {
      config_fill(cfg_json, "limits", cmp_lim, cmp_limits);
      config_fill(cfg_json, "delta_q", cmp_dq, cmp_delta_q);
      config_fill(cfg_json, "margin", cmp_margin_opt, cmp_margin);
      config_fill(cfg_json, "max_outer", cmp_outer_opt, cmp_outer);
      config_fill(cfg_json, "tolerance", cmp_tol_opt, cmp_tol);
      return run_compare(o, cmp_instances,
                         control_config_from(limits_from(cmp_limits), 10.0,
                                             200, cmp_delta_q, cmp_margin,
                                             cmp_outer, cmp_tol));
    }
    if (stu->parsed()) {
      config_fill(cfg_json, "limits", stu_lim, stu_limits);
      config_fill(cfg_json, "step_q", stu_step_opt, stu_step);
      config_fill(cfg_json, "max_rounds", stu_rounds_opt, stu_rounds);
      config_fill(cfg_json, "delta_q", stu_dq_opt, stu_dq);
      config_fill(cfg_json, "tolerance", stu_tol_opt, stu_tol);
      return run_addition_study(
          o, control_config_from(limits_from(stu_limits), stu_step,
                                 stu_rounds, stu_dq, 0.001, 5, stu_tol));
    }
    return 2;  // unreachable: require_subcommand(1)
  } catch (const Error& e) {
    const json err = {{"error", {{"type", to_string(e.kind())},
                                 {"message", e.what()}}}};
    std::cerr << err.dump() << '\n';
    return e.kind() == ErrorKind::usage ? 2 : 1;
  } catch (const std::exception& e) {
    const json err = {
        {"error", {{"type", "internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
}
