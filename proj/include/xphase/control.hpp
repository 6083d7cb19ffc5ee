#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xphase/error.hpp"
#include "xphase/model.hpp"
#include "xphase/sensitivity.hpp"
#include "xphase/simplex.hpp"
#include "xphase/solver.hpp"

namespace xphase {

/// How the LP controller groups monitored nodes and actuators.
enum class PartitionScheme {
  full,       ///< one problem over all phases: cross-phase terms included
  per_phase,  ///< three independent problems, same-phase sensitivities only
};

inline const char* to_string(PartitionScheme s) {
  return s == PartitionScheme::full ? "full" : "per-phase";
}

/// Final reactive setpoint assigned to one inverter (kVAr, absorption
/// positive).
struct ControlAction {
  std::string pv;
  double q_set_kvar = 0.0;
};

/// One violation snapshot inside a controller trace round.
struct TraceViolation {
  std::string bus;
  Phase phase = Phase::A;
  double v_pu = 0.0;
  double limit_pu = 0.0;  ///< the band edge that was crossed
  bool over = false;

  double excess_pu() const { return over ? v_pu - limit_pu : limit_pu - v_pu; }
};

/// One round of a controller run: the violations seen before acting, and (for
/// the greedy controller) the action taken in response.
struct TraceRound {
  int round = 0;
  std::vector<TraceViolation> violations;
  std::string action_pv;       ///< empty when the round applied no action
  double action_dq_kvar = 0.0;
};

/// Outcome of one controller invocation. `residual` always comes from a full
/// nonlinear re-solve at the final setpoints, never from the linear model.
struct ControlPlan {
  std::vector<ControlAction> actions;          ///< changed or nonzero setpoints
  std::map<std::string, double> q_final_kvar;  ///< every actuator's setpoint
  ViolationReport residual;
  double total_q_kvar = 0.0;  ///< sum of |final setpoint| over all actuators
  double max_v_pu = 0.0;      ///< highest voltage anywhere at the final state
  int iterations = 0;         ///< rounds that applied an action / LP solve
  bool cleared = false;       ///< residual is empty
  bool structurally_infeasible = false;  ///< violations with no actuator
  bool fallback_used = false;  ///< LP infeasible; minimax fallback applied
  std::string note;
  std::vector<TraceRound> trace;
};

/// Knobs shared by all controllers. Defaults suit 4.16 kV desk feeders.
struct ControlConfig {
  VoltageLimits limits{};
  double step_q_kvar = 10.0;       ///< greedy increment per round
  int max_rounds = 200;            ///< greedy round budget
  int stall_window = 4;            ///< greedy: rounds without improvement
  double sm_delta_q_kvar = 50.0;   ///< probe size for controller sensitivities
  double limit_margin_pu = 0.001;  ///< LP guard band inside the raw limits
  int max_outer_rounds = 5;        ///< iterative controller outer budget
  double sm_refresh_threshold_kvar = 50.0;  ///< rebuild a sensitivity column
                                            ///< once its setpoint moves this far
  ConvergenceConfig solver{};
};

namespace detail {

inline double sign_of(double x) { return (x > 0.0) - (x < 0.0); }

inline std::vector<std::size_t> actuator_positions(
    const Feeder& f, const std::vector<std::string>& pv_ids) {
  std::vector<std::size_t> at(pv_ids.size());
  for (std::size_t j = 0; j < pv_ids.size(); ++j) {
    bool found = false;
    for (std::size_t k = 0; k < f.pvs.size(); ++k) {
      if (f.pvs[k].id == pv_ids[j]) {
        at[j] = k;
        found = true;
        break;
      }
    }
    if (!found)
      throw Error(ErrorKind::usage,
                  "actuator '" + pv_ids[j] + "' is not a PV of this feeder");
  }
  return at;
}

inline TraceRound make_trace_round(int round, const ViolationReport& report) {
  TraceRound tr;
  tr.round = round;
  tr.violations.reserve(report.entries.size());
  for (const auto& v : report.entries)
    tr.violations.push_back({v.bus, v.phase, v.v_pu, v.limit, v.over});
  return tr;
}

/// Index of the worst entry: highest excess, first in (bus, phase) order on
/// ties.
inline std::size_t worst_entry(const ViolationReport& report) {
  std::size_t wi = 0;
  double wex = report.entries.front().excess_pu();
  for (std::size_t i = 1; i < report.entries.size(); ++i) {
    const double e = report.entries[i].excess_pu();
    if (e > wex) {
      wex = e;
      wi = i;
    }
  }
  return wi;
}

/// Fills the bookkeeping fields of a plan from the final feeder state:
/// nonlinear verification solve, residual report, action list, totals.
inline void finalize_plan(ControlPlan& plan, const Feeder& final_state,
                          const std::vector<std::string>& pv_ids,
                          const std::vector<std::size_t>& pv_at,
                          const std::map<std::string, double>& start_q,
                          const ControlConfig& cfg,
                          const InstanceScaling& scaling) {
  const PowerFlowResult res = solve_radial(final_state, cfg.solver, scaling);
  plan.residual = check_violations(res, cfg.limits);
  plan.max_v_pu = plan.residual.max_v_pu;
  plan.cleared = plan.residual.empty();
  plan.actions.clear();
  plan.q_final_kvar.clear();
  plan.total_q_kvar = 0.0;
  for (std::size_t j = 0; j < pv_ids.size(); ++j) {
    const double q = final_state.pvs[pv_at[j]].q_set_kvar;
    plan.q_final_kvar[pv_ids[j]] = q;
    plan.total_q_kvar += std::abs(q);
    const double q0 = start_q.at(pv_ids[j]);
    if (std::abs(q - q0) > 1e-9 || std::abs(q) > 1e-9)
      plan.actions.push_back({pv_ids[j], q});
  }
  std::sort(plan.actions.begin(), plan.actions.end(),
            [](const ControlAction& a, const ControlAction& b) {
              return a.pv < b.pv;
            });
}

inline std::map<std::string, double> setpoints_of(
    const Feeder& f, const std::vector<std::string>& pv_ids,
    const std::vector<std::size_t>& pv_at) {
  std::map<std::string, double> q;
  for (std::size_t j = 0; j < pv_ids.size(); ++j)
    q[pv_ids[j]] = f.pvs[pv_at[j]].q_set_kvar;
  return q;
}

}  // namespace detail

/// Greedy prioritized intervention. Each round it re-solves the feeder, finds
/// the worst violation, and nudges the most sensitive inverter with usable
/// headroom by one `step_q_kvar` in the corrective direction (absorb to pull
/// an over-voltage down, inject to lift an under-voltage — including from
/// inverters on *other* phases, whose cross-phase effect can be the stronger
/// lever). A trend watchdog aborts once the running-best worst-excess has not
/// improved for `stall_window` consecutive rounds, which catches both
/// oscillation between two inverters and saturation of every useful actuator.
///
/// The sensitivity matrix is taken as given (built once at the entry
/// operating point); the controller itself never relinearizes.
inline ControlPlan prioritized_q_intervention(
    const Feeder& feeder, const SensitivityMatrix& sm,
    const ControlConfig& cfg = {}, const InstanceScaling& scaling = {}) {
  Feeder g = feeder;
  const std::vector<std::string>& ids = sm.pv_ids;
  const std::vector<std::size_t> pv_at = detail::actuator_positions(g, ids);
  const std::map<std::string, double> start_q =
      detail::setpoints_of(g, ids, pv_at);

  ControlPlan plan;
  double best_excess = 0.0;
  bool have_best = false;
  int no_improve = 0;
  int rounds = 0;
  bool clean_exit = false;

  while (rounds < cfg.max_rounds) {
    const PowerFlowResult res = solve_radial(g, cfg.solver, scaling);
    const ViolationReport rep = check_violations(res, cfg.limits);
    plan.trace.push_back(detail::make_trace_round(
        static_cast<int>(plan.trace.size()), rep));
    if (rep.empty()) {
      clean_exit = true;
      break;
    }

    const std::size_t wi = detail::worst_entry(rep);
    const Violation& worst = rep.entries[wi];
    const double excess = worst.excess_pu();
    if (!have_best || excess < best_excess - 1e-12) {
      best_excess = excess;
      have_best = true;
      no_improve = 0;
    } else if (++no_improve >= cfg.stall_window) {
      plan.note = "stalled: worst excess stopped improving for " +
                  std::to_string(cfg.stall_window) + " rounds";
      break;
    }

    const int row = sm.row_index({worst.bus, worst.phase});
    if (row < 0)
      throw Error(ErrorKind::usage, "violated node " + worst.bus +
                                        " is not monitored by the "
                                        "sensitivity matrix");
    bool acted = false;
    for (const int j : rank_pvs_for_node(sm, {worst.bus, worst.phase})) {
      const std::string& pid = sm.pv_ids[j];
      const double s = sm.values(row, j);
      const double dir =
          worst.over ? -detail::sign_of(s) : detail::sign_of(s);
      if (dir == 0.0) continue;
      PVSpec& pv = g.pvs[pv_at[j]];
      const double cap = pv_q_capability(pv, scaling.pv(pid));
      const double nq = pv.q_set_kvar + dir * cfg.step_q_kvar;
      if (std::abs(nq) <= cap + 1e-9) {
        pv.q_set_kvar = nq;
        plan.trace.back().action_pv = pid;
        plan.trace.back().action_dq_kvar = dir * cfg.step_q_kvar;
        acted = true;
        break;
      }
    }
    if (!acted) {
      plan.note =
          "no inverter with both sensitivity to the worst violation and "
          "reactive headroom";
      plan.structurally_infeasible = true;
      break;
    }
    ++rounds;
  }
  if (!clean_exit && plan.note.empty() && rounds >= cfg.max_rounds)
    plan.note = "round budget exhausted";

  plan.iterations = rounds;
  detail::finalize_plan(plan, g, ids, pv_at, start_q, cfg, scaling);
  return plan;
}

namespace detail {

/// One LP cell: a subset of monitored rows constrained by a subset of
/// actuator columns.
struct LpCell {
  std::vector<int> rows;
  std::vector<int> cols;
  std::string label;
};

inline std::vector<LpCell> make_cells(const SensitivityMatrix& sm,
                                      PartitionScheme scheme) {
  std::vector<LpCell> cells;
  if (scheme == PartitionScheme::full) {
    LpCell cell;
    cell.label = "full";
    for (int i = 0; i < static_cast<int>(sm.rows.size()); ++i)
      cell.rows.push_back(i);
    for (int j = 0; j < static_cast<int>(sm.pv_ids.size()); ++j)
      cell.cols.push_back(j);
    cells.push_back(std::move(cell));
    return cells;
  }
  for (Phase p : abc_phases()) {
    LpCell cell;
    cell.label = std::string("phase ") + phase_letter(p);
    for (int i = 0; i < static_cast<int>(sm.rows.size()); ++i)
      if (sm.rows[i].phase == p) cell.rows.push_back(i);
    for (int j = 0; j < static_cast<int>(sm.pv_ids.size()); ++j)
      if (sm.pv_phases[j] == p) cell.cols.push_back(j);
    cells.push_back(std::move(cell));
  }
  return cells;
}

/// Minimum-Σ|q| LP for one cell. Variables are the split setpoints
/// [q⁺; q⁻] with q = q⁺ − q⁻, so the linear objective Σ(q⁺+q⁻) equals Σ|q| at
/// any optimum. Returns true and fills `q_out` (length cols) when optimal.
inline bool solve_cell_min_q(const Eigen::MatrixXd& sm_cell,
                             const Eigen::VectorXd& v0,
                             const Eigen::VectorXd& q_cur,
                             const Eigen::VectorXd& q_max, double vmin_v,
                             double vmax_v, Eigen::VectorXd& q_out) {
  const int nr = static_cast<int>(sm_cell.rows());
  const int k = static_cast<int>(sm_cell.cols());
  const Eigen::VectorXd shift = sm_cell * q_cur;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * nr + 2 * k, 2 * k);
  Eigen::VectorXd b(2 * nr + 2 * k);
  a.block(0, 0, nr, k) = sm_cell;
  a.block(0, k, nr, k) = -sm_cell;
  b.head(nr) = Eigen::VectorXd::Constant(nr, vmax_v) - v0 + shift;
  a.block(nr, 0, nr, k) = -sm_cell;
  a.block(nr, k, nr, k) = sm_cell;
  b.segment(nr, nr) = v0 - Eigen::VectorXd::Constant(nr, vmin_v) - shift;
  for (int j = 0; j < k; ++j) {
    a(2 * nr + j, j) = 1.0;
    b(2 * nr + j) = q_max(j);
    a(2 * nr + k + j, k + j) = 1.0;
    b(2 * nr + k + j) = q_max(j);
  }
  const LpResult r = solve_lp(Eigen::VectorXd::Ones(2 * k), a, b);
  if (r.status == LpStatus::unbounded)
    throw Error(ErrorKind::infeasible,
                "min-|q| dispatch reported unbounded; the model is corrupt");
  if (r.status != LpStatus::optimal) return false;
  q_out = r.x.head(k) - r.x.tail(k);
  return true;
}

/// Minimax fallback for an infeasible cell: minimize the worst band excess t
/// subject to the same capability bounds. Always feasible.
inline Eigen::VectorXd solve_cell_minimax(const Eigen::MatrixXd& sm_cell,
                                          const Eigen::VectorXd& v0,
                                          const Eigen::VectorXd& q_cur,
                                          const Eigen::VectorXd& q_max,
                                          double vmin_v, double vmax_v) {
  const int nr = static_cast<int>(sm_cell.rows());
  const int k = static_cast<int>(sm_cell.cols());
  const Eigen::VectorXd shift = sm_cell * q_cur;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * nr + 2 * k, 2 * k + 1);
  Eigen::VectorXd b(2 * nr + 2 * k);
  a.block(0, 0, nr, k) = sm_cell;
  a.block(0, k, nr, k) = -sm_cell;
  a.block(0, 2 * k, nr, 1).setConstant(-1.0);
  b.head(nr) = Eigen::VectorXd::Constant(nr, vmax_v) - v0 + shift;
  a.block(nr, 0, nr, k) = -sm_cell;
  a.block(nr, k, nr, k) = sm_cell;
  a.block(nr, 2 * k, nr, 1).setConstant(-1.0);
  b.segment(nr, nr) = v0 - Eigen::VectorXd::Constant(nr, vmin_v) - shift;
  for (int j = 0; j < k; ++j) {
    a(2 * nr + j, j) = 1.0;
    b(2 * nr + j) = q_max(j);
    a(2 * nr + k + j, k + j) = 1.0;
    b(2 * nr + k + j) = q_max(j);
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * k + 1);
  c(2 * k) = 1.0;
  const LpResult r = solve_lp(c, a, b);
  if (r.status != LpStatus::optimal)
    throw Error(ErrorKind::infeasible,
                "minimax fallback did not solve; the model is corrupt");
  return r.x.head(k) - r.x.segment(k, k);
}

}  // namespace detail

/// LP dispatch: choose final setpoints minimizing total |q| subject to the
/// linearized voltage band, shrunk inward by `limit_margin_pu` so that
/// linearization error does not strand the nonlinear solution on a limit.
///
/// `scheme` selects the partition. `per_phase` mimics a controller that only
/// credits same-phase sensitivities: each phase's nodes are served only by
/// that phase's inverters, and a phase with violations but no inverters is
/// reported structurally infeasible. `full` couples all phases in one
/// problem, letting cross-phase sensitivities participate.
///
/// The sensitivity matrix must have been built at the feeder's current
/// operating point. Residuals are verified with a nonlinear re-solve.
inline ControlPlan lp_min_q(const Feeder& feeder, const SensitivityMatrix& sm,
                            PartitionScheme scheme,
                            const ControlConfig& cfg = {},
                            const InstanceScaling& scaling = {}) {
  const std::vector<std::string>& ids = sm.pv_ids;
  const std::vector<std::size_t> pv_at =
      detail::actuator_positions(feeder, ids);
  const std::map<std::string, double> start_q =
      detail::setpoints_of(feeder, ids, pv_at);

  const PowerFlowResult base = solve_radial(feeder, cfg.solver, scaling);
  const int n_rows = static_cast<int>(sm.rows.size());
  const int n_cols = static_cast<int>(ids.size());
  Eigen::VectorXd v0(n_rows);
  for (int i = 0; i < n_rows; ++i)
    v0(i) = std::abs(
        base.voltage(sm.rows[i].bus)(phase_index(sm.rows[i].phase)));
  Eigen::VectorXd q_cur(n_cols), q_max(n_cols);
  for (int j = 0; j < n_cols; ++j) {
    const PVSpec& pv = feeder.pvs[pv_at[j]];
    q_cur(j) = pv.q_set_kvar;
    q_max(j) = pv_q_capability(pv, scaling.pv(pv.id));
  }
  const double vb = base.v_base;
  const double vmin_v = (cfg.limits.v_min + cfg.limit_margin_pu) * vb;
  const double vmax_v = (cfg.limits.v_max - cfg.limit_margin_pu) * vb;

  ControlPlan plan;
  Eigen::VectorXd q_final = q_cur;
  for (const detail::LpCell& cell : detail::make_cells(sm, scheme)) {
    if (cell.rows.empty()) continue;
    if (cell.cols.empty()) {
      for (int i : cell.rows) {
        const double pu = v0(i) / vb;
        if (pu > cfg.limits.v_max || pu < cfg.limits.v_min) {
          plan.structurally_infeasible = true;
          if (!plan.note.empty()) plan.note += "; ";
          plan.note += cell.label +
                       " has violations but no reactive capability of its own";
          break;
        }
      }
      continue;
    }
    const int nr = static_cast<int>(cell.rows.size());
    const int k = static_cast<int>(cell.cols.size());
    Eigen::MatrixXd sm_cell(nr, k);
    Eigen::VectorXd v0_cell(nr), qc_cell(k), qm_cell(k);
    for (int i = 0; i < nr; ++i) {
      v0_cell(i) = v0(cell.rows[i]);
      for (int j = 0; j < k; ++j)
        sm_cell(i, j) = sm.values(cell.rows[i], cell.cols[j]);
    }
    for (int j = 0; j < k; ++j) {
      qc_cell(j) = q_cur(cell.cols[j]);
      qm_cell(j) = q_max(cell.cols[j]);
    }
    Eigen::VectorXd q_cell;
    if (detail::solve_cell_min_q(sm_cell, v0_cell, qc_cell, qm_cell, vmin_v,
                                 vmax_v, q_cell)) {
      for (int j = 0; j < k; ++j) q_final(cell.cols[j]) = q_cell(j);
    } else {
      q_cell = detail::solve_cell_minimax(sm_cell, v0_cell, qc_cell, qm_cell,
                                          vmin_v, vmax_v);
      for (int j = 0; j < k; ++j) q_final(cell.cols[j]) = q_cell(j);
      plan.fallback_used = true;
      if (!plan.note.empty()) plan.note += "; ";
      plan.note += cell.label +
                   " band is unreachable within capability; applied the "
                   "minimax dispatch instead";
    }
  }

  Feeder g = feeder;
  for (int j = 0; j < n_cols; ++j) g.pvs[pv_at[j]].q_set_kvar = q_final(j);
  plan.iterations = 1;
  detail::finalize_plan(plan, g, ids, pv_at, start_q, cfg, scaling);
  return plan;
}

/// Closed-loop LP control: solve, stop if clean, otherwise linearize and
/// dispatch via `lp_min_q`, then repeat up to `max_outer_rounds` times. The
/// sensitivity matrix is built once and then refreshed column-by-column only
/// for inverters whose setpoint has moved more than
/// `sm_refresh_threshold_kvar` since their column was last built. A recurring
/// violation signature aborts the loop as an oscillation.
inline ControlPlan iterative_control(const Feeder& feeder,
                                     PartitionScheme scheme,
                                     const ControlConfig& cfg = {},
                                     const InstanceScaling& scaling = {}) {
  Feeder work = feeder;
  std::vector<std::string> ids;
  ids.reserve(work.pvs.size());
  for (const PVSpec& pv : work.pvs) ids.push_back(pv.id);
  const std::vector<std::size_t> pv_at = detail::actuator_positions(work, ids);
  const std::map<std::string, double> start_q =
      detail::setpoints_of(work, ids, pv_at);
  const std::vector<NodePhase> monitored = monitored_node_phases(work);

  ControlPlan plan;
  std::set<std::string> seen;
  SensitivityMatrix sm;
  bool have_sm = false;
  std::vector<double> q_at_build(ids.size(), 0.0);
  int applied = 0;

  for (int outer = 0; outer < cfg.max_outer_rounds; ++outer) {
    const PowerFlowResult res = solve_radial(work, cfg.solver, scaling);
    const ViolationReport rep = check_violations(res, cfg.limits);
    plan.trace.push_back(detail::make_trace_round(outer, rep));
    if (rep.empty()) break;

    std::string sig;
    for (const Violation& v : rep.entries)
      sig += v.bus + '.' + phase_letter(v.phase) + (v.over ? '^' : 'v') + ';';
    if (!seen.insert(sig).second) {
      plan.note = "oscillation: the same violation set recurred";
      break;
    }

    if (!have_sm) {
      sm = build_vqsm(work, monitored, ids, cfg.sm_delta_q_kvar, cfg.solver,
                      scaling);
      have_sm = true;
      for (std::size_t j = 0; j < ids.size(); ++j)
        q_at_build[j] = work.pvs[pv_at[j]].q_set_kvar;
    } else {
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const double q_now = work.pvs[pv_at[j]].q_set_kvar;
        if (std::abs(q_now - q_at_build[j]) > cfg.sm_refresh_threshold_kvar) {
          const SensitivityMatrix col =
              build_vqsm(work, monitored, {ids[j]}, cfg.sm_delta_q_kvar,
                         cfg.solver, scaling);
          sm.values.col(static_cast<int>(j)) = col.values.col(0);
          sm.delta_q_used[j] = col.delta_q_used[0];
          q_at_build[j] = q_now;
        }
      }
    }

    const ControlPlan sub = lp_min_q(work, sm, scheme, cfg, scaling);
    plan.structurally_infeasible |= sub.structurally_infeasible;
    plan.fallback_used |= sub.fallback_used;
    if (!sub.note.empty()) {
      if (!plan.note.empty()) plan.note += "; ";
      plan.note += sub.note;
    }
    for (std::size_t j = 0; j < ids.size(); ++j)
      work.pvs[pv_at[j]].q_set_kvar = sub.q_final_kvar.at(ids[j]);
    ++applied;
  }

  plan.iterations = applied;
  detail::finalize_plan(plan, work, ids, pv_at, start_q, cfg, scaling);
  if (!plan.cleared && plan.note.empty())
    plan.note = "outer round budget exhausted";
  return plan;
}

/// One row of a staged-interconnection study.
struct AdditionStep {
  int step = 0;             ///< 0 is the pre-addition baseline
  std::string added_pv;     ///< empty on the baseline row
  int upf_violations = 0;   ///< violations with every inverter at unity PF
  std::array<int, 3> upf_by_phase{{0, 0, 0}};
  double upf_max_v_pu = 0.0;
  std::vector<Phase> upf_phases;   ///< phases violated at unity PF
  ControlPlan plan;                ///< greedy plan from carried setpoints
  std::vector<Phase> flip_phases;  ///< phases first violated only under control
  int flip_round = -1;             ///< trace round where the flip appeared
  bool flip_action = false;  ///< final plan acts on a flipped phase
  int residual_count = 0;
  bool ok = false;  ///< controller cleared every violation
};

/// Full study outcome. `last_clean_step` is the largest step index whose
/// residual is empty — the hosting capacity achieved with reactive control.
/// When a solver failure interrupts the study, the steps completed so far are
/// kept, `aborted` is set, and `error` carries the failure message.
struct AdditionStudy {
  std::vector<AdditionStep> steps;
  int last_clean_step = -1;
  bool aborted = false;
  std::string error;
};

/// Staged interconnection study. Pool inverters are committed one at a time
/// in list order. Each step records the uncontrolled (all-unity-PF) picture,
/// then runs the greedy controller from the setpoints carried over from the
/// previous step, with a fresh sensitivity matrix at that operating point. A
/// "flip" is logged when the controller's own corrective sequence makes a
/// phase violate that was clean at unity PF — the cross-phase side effect
/// this toolkit exists to surface.
inline AdditionStudy pv_addition_study(const Feeder& feeder,
                                       const std::vector<PVSpec>& pool,
                                       const ControlConfig& cfg = {},
                                       const InstanceScaling& scaling = {}) {
  const std::vector<std::string> buses = feeder.buses();
  for (const PVSpec& pv : pool)
    if (!std::binary_search(buses.begin(), buses.end(), pv.bus))
      throw Error(ErrorKind::validation, "pool PV '" + pv.id +
                                             "' names unknown bus '" +
                                             pv.bus + "'");
  AdditionStudy study;

  const auto upf_snapshot = [&](const Feeder& f, AdditionStep& step) {
    Feeder u = f;
    for (PVSpec& pv : u.pvs) pv.q_set_kvar = 0.0;
    const PowerFlowResult res = solve_radial(u, cfg.solver, scaling);
    const ViolationReport rep = check_violations(res, cfg.limits);
    step.upf_violations = rep.total();
    step.upf_by_phase = rep.count_per_phase;
    step.upf_max_v_pu = rep.max_v_pu;
    std::set<Phase> phases;
    for (const Violation& v : rep.entries) phases.insert(v.phase);
    step.upf_phases.assign(phases.begin(), phases.end());
    return rep;
  };

  try {
    AdditionStep base;
    base.step = 0;
    const ViolationReport rep = upf_snapshot(feeder, base);
    base.residual_count = rep.total();
    base.ok = rep.empty();
    study.steps.push_back(std::move(base));
  } catch (const Error& e) {
    study.aborted = true;
    study.error = e.what();
    return study;
  }

  Feeder g = feeder;
  g.pv_pool.clear();
  std::map<std::string, double> carried;
  for (std::size_t n = 0; n < pool.size(); ++n) {
    try {
      g.pvs.push_back(pool[n]);

      AdditionStep step;
      step.step = static_cast<int>(n) + 1;
      step.added_pv = pool[n].id;
      upf_snapshot(g, step);

      for (PVSpec& pv : g.pvs) {
        const auto it = carried.find(pv.id);
        pv.q_set_kvar = it == carried.end() ? 0.0 : it->second;
      }
      std::vector<std::string> ids;
      ids.reserve(g.pvs.size());
      for (const PVSpec& pv : g.pvs) ids.push_back(pv.id);
      const SensitivityMatrix sm =
          build_vqsm(g, monitored_node_phases(g), ids, cfg.sm_delta_q_kvar,
                     cfg.solver, scaling);
      step.plan = prioritized_q_intervention(g, sm, cfg, scaling);

      const std::set<Phase> upf_set(step.upf_phases.begin(),
                                    step.upf_phases.end());
      for (const TraceRound& tr : step.plan.trace) {
        std::set<Phase> fresh;
        for (const TraceViolation& v : tr.violations)
          if (!upf_set.count(v.phase)) fresh.insert(v.phase);
        if (!fresh.empty()) {
          step.flip_phases.assign(fresh.begin(), fresh.end());
          step.flip_round = tr.round;
          break;
        }
      }

      carried = step.plan.q_final_kvar;
      for (PVSpec& pv : g.pvs) pv.q_set_kvar = carried.at(pv.id);

      if (!step.flip_phases.empty()) {
        for (const ControlAction& act : step.plan.actions) {
          if (std::abs(act.q_set_kvar) <= 1e-9) continue;
          const PVSpec* pv = g.find_pv(act.pv);
          if (pv &&
              std::find(step.flip_phases.begin(), step.flip_phases.end(),
                        pv->phase) != step.flip_phases.end()) {
            step.flip_action = true;
            break;
          }
        }
      }

      step.residual_count = step.plan.residual.total();
      step.ok = step.plan.cleared;
      study.steps.push_back(std::move(step));
    } catch (const Error& e) {
      study.aborted = true;
      study.error = e.what();
      break;
    }
  }

  for (const AdditionStep& s : study.steps)
    if (s.residual_count == 0) study.last_clean_step = s.step;
  return study;
}

/// Convenience overload: runs the study over the feeder's own `pv_pool`.
inline AdditionStudy pv_addition_study(const Feeder& feeder,
                                       const ControlConfig& cfg = {},
                                       const InstanceScaling& scaling = {}) {
  return pv_addition_study(feeder, feeder.pv_pool, cfg, scaling);
}

/// Outcome of one strategy on one instance.
struct StrategyOutcome {
  int violations = 0;
  double max_v_pu = 0.0;
  double total_q_kvar = 0.0;
  int iterations = 0;
  bool cleared = false;
  std::string error;  ///< nonempty when the strategy failed on this instance
};

/// Side-by-side outcomes for one instance.
struct ComparisonRow {
  std::string instance;
  StrategyOutcome upf;        ///< every inverter at unity power factor
  StrategyOutcome per_phase;  ///< iterative LP, same-phase partition
  StrategyOutcome full;       ///< iterative LP, cross-phase coupling included
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
};

namespace detail {

inline StrategyOutcome upf_outcome(const Feeder& feeder,
                                   const ControlConfig& cfg,
                                   const InstanceScaling& scaling) {
  Feeder u = feeder;
  for (PVSpec& pv : u.pvs) pv.q_set_kvar = 0.0;
  const PowerFlowResult res = solve_radial(u, cfg.solver, scaling);
  const ViolationReport rep = check_violations(res, cfg.limits);
  StrategyOutcome out;
  out.violations = rep.total();
  out.max_v_pu = rep.max_v_pu;
  out.total_q_kvar = 0.0;
  out.cleared = rep.empty();
  return out;
}

inline StrategyOutcome plan_outcome(const ControlPlan& plan) {
  StrategyOutcome out;
  out.violations = plan.residual.total();
  out.max_v_pu = plan.max_v_pu;
  out.total_q_kvar = plan.total_q_kvar;
  out.iterations = plan.iterations;
  out.cleared = plan.cleared;
  return out;
}

}  // namespace detail

/// Runs unity-PF, per-phase iterative LP, and full iterative LP on one
/// scaling instance.
inline ComparisonRow compare_instance(const Feeder& feeder,
                                      const std::string& label,
                                      const ControlConfig& cfg = {},
                                      const InstanceScaling& scaling = {}) {
  ComparisonRow row;
  row.instance = label;
  try {
    row.upf = detail::upf_outcome(feeder, cfg, scaling);
  } catch (const Error& e) {
    row.upf.error = e.what();
  }
  try {
    row.per_phase = detail::plan_outcome(
        iterative_control(feeder, PartitionScheme::per_phase, cfg, scaling));
  } catch (const Error& e) {
    row.per_phase.error = e.what();
  }
  try {
    row.full = detail::plan_outcome(
        iterative_control(feeder, PartitionScheme::full, cfg, scaling));
  } catch (const Error& e) {
    row.full.error = e.what();
  }
  return row;
}

/// Strategy comparison over selected instances of a profile. A solver
/// failure on one instance is recorded in that row and does not abort the
/// batch; an unknown instance label is a usage error.
inline ComparisonReport compare_controllers(
    const Feeder& feeder, const TimeSeriesProfile& profile,
    const std::vector<std::string>& instances, const ControlConfig& cfg = {}) {
  ComparisonReport report;
  report.rows.reserve(instances.size());
  for (const std::string& label : instances)
    report.rows.push_back(
        compare_instance(feeder, label, cfg, instance_scaling(profile, label)));
  return report;
}

/// Convenience overload: compares over every instance of the profile.
inline ComparisonReport compare_controllers(const Feeder& feeder,
                                            const TimeSeriesProfile& profile,
                                            const ControlConfig& cfg = {}) {
  return compare_controllers(feeder, profile, profile.instances, cfg);
}

}  // namespace xphase
