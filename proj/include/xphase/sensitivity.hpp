#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xphase/carson.hpp"
#include "xphase/error.hpp"
#include "xphase/model.hpp"
#include "xphase/solver.hpp"

namespace xphase {

/// One monitored quantity: the voltage magnitude of a phase at a bus.
struct NodePhase {
  std::string bus;
  Phase phase = Phase::A;

  friend bool operator==(const NodePhase&, const NodePhase&) = default;
  friend bool operator<(const NodePhase& a, const NodePhase& b) {
    return a.bus != b.bus ? a.bus < b.bus
                          : phase_index(a.phase) < phase_index(b.phase);
  }
};

/// All non-source bus phases of a feeder, in deterministic order — the
/// default monitored set for sensitivity builds and controllers.
inline std::vector<NodePhase> monitored_node_phases(const Feeder& f) {
  std::vector<NodePhase> out;
  for (const auto& bus : f.buses()) {
    if (bus == f.source_bus) continue;
    for (Phase ph : abc_phases()) out.push_back({bus, ph});
  }
  return out;
}

/// Voltage–reactive-power sensitivity matrix: rows are monitored node
/// phases, columns are controllable PVs, entries in V/kVAr (signed;
/// absorption that lowers a voltage produces a negative same-phase entry).
struct SensitivityMatrix {
  Eigen::MatrixXd values;          ///< V/kVAr
  std::vector<NodePhase> rows;
  std::vector<std::string> pv_ids;     ///< per column
  std::vector<Phase> pv_phases;        ///< per column
  std::vector<double> delta_q_used;    ///< per column, kVAr actually applied
  double delta_q = 0.0;                ///< requested perturbation, kVAr
  std::string base_instance;           ///< scenario label

  int row_index(const NodePhase& np) const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i] == np) return static_cast<int>(i);
    return -1;
  }
  int col_index(const std::string& pv_id) const {
    for (std::size_t j = 0; j < pv_ids.size(); ++j)
      if (pv_ids[j] == pv_id) return static_cast<int>(j);
    return -1;
  }
};

/// Complex voltage-change split for one perturbation study on the two-bus
/// system: the earth-return share (identical across phases), the
/// mutual/self share, and their sum.
struct DeltaDecomposition {
  Eigen::Vector4cd delta_i_l;   ///< ΔI on A, B, C and the return path, A
  Eigen::Vector3cd dv_earth;    ///< volts, same value on every phase
  Eigen::Vector3cd dv_mut;      ///< volts
  Eigen::Vector3cd dv_total;    ///< dv_earth + dv_mut
};

/// Magnitude/angle pair for plotting.
struct Phasor {
  double magnitude = 0.0;
  double angle_deg = 0.0;
};

inline Phasor to_phasor(Complex v) {
  return {std::abs(v), phase_angle_deg(v)};
}

/// Phasor-diagram data for one perturbation study: per phase, the base and
/// perturbed voltages plus both decomposition components.
struct PhasorReport {
  struct Entry {
    Phasor base, perturbed, dv_earth, dv_mut;
  };
  std::array<Entry, kNumPhases> phases;
  double closure_error_v = 0.0;  ///< max |V0 + dv_total − V1| over phases
};

/// Builds the VQ-SM by one-sided forward perturbation: each column solves
/// one extra power flow with that PV's setpoint raised by delta_q kVAr
/// (clamped to the inverter's remaining capability; a fully loaded inverter
/// yields a zero column). Entries are (|v|_pert − |v|_base) / Δq.
inline SensitivityMatrix build_vqsm(const Feeder& f,
                                    const std::vector<NodePhase>& monitored,
                                    const std::vector<std::string>& pv_ids,
                                    double delta_q_kvar,
                                    const ConvergenceConfig& cfg = {},
                                    const InstanceScaling& scaling = {},
                                    const std::string& instance_label = "") {
  if (delta_q_kvar == 0.0)
    throw Error(ErrorKind::usage, "build_vqsm: delta_q must be non-zero");

  SensitivityMatrix sm;
  sm.delta_q = delta_q_kvar;
  sm.rows = monitored;
  sm.base_instance = instance_label;
  sm.values.resize(static_cast<int>(monitored.size()),
                   static_cast<int>(pv_ids.size()));
  sm.values.setZero();

  const PowerFlowResult base = solve_radial(f, cfg, scaling);
  std::vector<double> v0(monitored.size());
  for (std::size_t i = 0; i < monitored.size(); ++i)
    v0[i] = std::abs(base.voltage(monitored[i].bus)(
        phase_index(monitored[i].phase)));

  for (std::size_t j = 0; j < pv_ids.size(); ++j) {
    const PVSpec* pv = f.find_pv(pv_ids[j]);
    if (!pv)
      throw Error(ErrorKind::usage,
                  "build_vqsm: unknown pv '" + pv_ids[j] + "'");
    sm.pv_ids.push_back(pv->id);
    sm.pv_phases.push_back(pv->phase);

    const double cap = pv_q_capability(*pv, scaling.pv(pv->id));
    const double avail = cap - pv->q_set_kvar;
    const double dq = std::min(delta_q_kvar, avail);
    if (dq <= 1e-9) {
      sm.delta_q_used.push_back(0.0);  // no headroom: zero column
      continue;
    }
    sm.delta_q_used.push_back(dq);

    Feeder pert = f;
    for (auto& p : pert.pvs)
      if (p.id == pv->id) p.q_set_kvar += dq;
    const PowerFlowResult sol = solve_radial(pert, cfg, scaling);
    for (std::size_t i = 0; i < monitored.size(); ++i) {
      const double v1 = std::abs(sol.voltage(monitored[i].bus)(
          phase_index(monitored[i].phase)));
      sm.values(static_cast<int>(i), static_cast<int>(j)) = (v1 - v0[i]) / dq;
    }
  }
  return sm;
}

namespace detail {

/// Feeders must match in everything except PV reactive setpoints.
inline void require_same_topology(const Feeder& a, const Feeder& b) {
  Feeder a2 = a, b2 = b;
  for (auto& p : a2.pvs) p.q_set_kvar = 0.0;
  for (auto& p : b2.pvs) p.q_set_kvar = 0.0;
  if (!(a2 == b2))
    throw Error(ErrorKind::usage,
                "decompose_delta: feeders differ beyond PV q_set values");
}

}  // namespace detail

/// Solves base and perturbed two-bus cases and splits the load-bus voltage
/// change ΔV = −Z·ΔI into its earth-return share (−z_e·ΣΔI, one value for
/// all phases because the earth term is constant) and its mutual/self share
/// (−Z_mut·ΔI). The split is exact: dv_earth + dv_mut equals −Z·ΔI by
/// construction, and matches the solved V₁ − V₀ to solver precision.
inline DeltaDecomposition decompose_delta(const Feeder& base_feeder,
                                          const Feeder& perturbed_feeder,
                                          const ConvergenceConfig& cfg = {},
                                          const InstanceScaling& scaling = {}) {
  detail::require_same_topology(base_feeder, perturbed_feeder);
  const PowerFlowResult r0 = solve_two_bus(base_feeder, cfg, scaling);
  const PowerFlowResult r1 = solve_two_bus(perturbed_feeder, cfg, scaling);

  const LineSegment& seg = base_feeder.segments[0];
  const Eigen::Vector4cd di = r1.phasors.segment_current.at(seg.id) -
                              r0.phasors.segment_current.at(seg.id);

  const PrimitiveImpedance prim = build_primitive(base_feeder, seg);
  const ImpedanceDecomposition zd = decompose(prim);

  // Phase rows of the primitive, canonical order.
  std::array<int, kNumPhases> row{};
  for (Phase ph : abc_phases()) row[phase_index(ph)] = prim.row_of(ph);

  const Complex ze = carson_constants::earth_term() * seg.length_miles;
  const Complex sum_di = di(0) + di(1) + di(2);

  DeltaDecomposition d;
  d.delta_i_l = di;
  for (int p = 0; p < kNumPhases; ++p) {
    d.dv_earth(p) = -ze * sum_di;
    Complex acc(0.0, 0.0);
    for (int q = 0; q < kNumPhases; ++q)
      acc += zd.z_mut(row[p], row[q]) * di(q);
    d.dv_mut(p) = -acc;
  }
  d.dv_total = d.dv_earth + d.dv_mut;
  return d;
}

/// Ranks PVs for one monitored node phase by descending |sm|, ties broken
/// by PV identifier. Returns column indices into the matrix.
inline std::vector<int> rank_pvs_for_node(const SensitivityMatrix& sm,
                                          const NodePhase& node) {
  const int r = sm.row_index(node);
  if (r < 0)
    throw Error(ErrorKind::usage, "rank_pvs_for_node: node '" + node.bus +
                                      "." + phase_letter(node.phase) +
                                      "' is not a monitored row");
  std::vector<int> cols(sm.pv_ids.size());
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = static_cast<int>(j);
  std::sort(cols.begin(), cols.end(), [&](int a, int b) {
    const double ma = std::abs(sm.values(r, a));
    const double mb = std::abs(sm.values(r, b));
    if (ma != mb) return ma > mb;
    return sm.pv_ids[a] < sm.pv_ids[b];
  });
  return cols;
}

/// Assembles phasor-diagram data for one perturbation study and checks the
/// closure invariant: V₀ + dv_total must reproduce V₁ on every phase.
inline PhasorReport phasor_report(const DeltaDecomposition& decomp,
                                  const PowerFlowResult& base,
                                  const PowerFlowResult& perturbed,
                                  const std::string& load_bus) {
  const Eigen::Vector3cd v0 = base.voltage(load_bus);
  const Eigen::Vector3cd v1 = perturbed.voltage(load_bus);

  PhasorReport report;
  for (int p = 0; p < kNumPhases; ++p) {
    report.phases[p].base = to_phasor(v0(p));
    report.phases[p].perturbed = to_phasor(v1(p));
    report.phases[p].dv_earth = to_phasor(decomp.dv_earth(p));
    report.phases[p].dv_mut = to_phasor(decomp.dv_mut(p));
    report.closure_error_v =
        std::max(report.closure_error_v,
                 std::abs(v0(p) + decomp.dv_total(p) - v1(p)));
  }
  if (report.closure_error_v > 1e-6)
    throw Error(ErrorKind::usage,
                "phasor_report: inputs do not belong to the same study "
                "(closure error " +
                    std::to_string(report.closure_error_v) + " V)");
  return report;
}

}  // namespace xphase
