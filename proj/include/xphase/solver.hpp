#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xphase/carson.hpp"
#include "xphase/error.hpp"
#include "xphase/model.hpp"

namespace xphase {

using Complex = std::complex<double>;

/// Fixed-point iteration settings. Tolerance is the per-iteration maximum
/// voltage-magnitude change in p.u. of the nominal phase voltage.
struct ConvergenceConfig {
  double tolerance_pu = 1e-9;
  int max_iterations = 100;
};

/// ANSI-style service-voltage band, per unit.
struct VoltageLimits {
  double v_min = 0.95;
  double v_max = 1.05;
};

/// Solved phasors: per-bus phase voltages and per-segment conductor
/// currents. Currents carry four entries per segment — phases A, B, C and
/// the neutral/earth return.
struct PhasorSet {
  std::map<std::string, Eigen::Vector3cd> bus_voltage;     ///< volts
  std::map<std::string, Eigen::Vector4cd> segment_current;  ///< amperes
};

/// Phase angle in degrees, normalized to (−180, 180].
inline double phase_angle_deg(Complex v) {
  double a = std::arg(v) * 180.0 / std::numbers::pi;
  if (a <= -180.0) a += 360.0;
  return a;
}

/// Result of one power-flow solve, with the bookkeeping needed for
/// conservation checks and reporting.
struct PowerFlowResult {
  PhasorSet phasors;
  int iterations = 0;
  bool converged = false;
  double v_base = 0.0;           ///< volts, nominal phase-to-neutral
  std::string source_bus;
  Eigen::Vector3cd source_power_va;  ///< per-phase complex power at source
  Complex total_loss_va{0.0, 0.0};
  Complex total_load_va{0.0, 0.0};       ///< Σ load demand
  Complex total_pv_injection_va{0.0, 0.0};   ///< Σ (p·mult − j·q_set)
  Complex total_cap_injection_va{0.0, 0.0};  ///< Σ j·q

  const Eigen::Vector3cd& voltage(const std::string& bus) const {
    auto it = phasors.bus_voltage.find(bus);
    if (it == phasors.bus_voltage.end())
      throw Error(ErrorKind::usage, "no solved voltage for bus '" + bus + "'");
    return it->second;
  }
};

/// One out-of-band bus phase.
struct Violation {
  std::string bus;
  Phase phase = Phase::A;
  double v_pu = 0.0;
  double limit = 0.0;  ///< the bound actually violated
  bool over = false;   ///< true: above v_max, false: below v_min

  /// Distance beyond the violated bound, p.u.
  double excess_pu() const { return over ? v_pu - limit : limit - v_pu; }
};

/// All violations of one solved instance, in deterministic (bus id, phase)
/// order, plus per-phase counts and the overall maximum voltage.
struct ViolationReport {
  std::vector<Violation> entries;
  std::array<int, kNumPhases> count_per_phase{0, 0, 0};
  double max_v_pu = 0.0;  ///< over all buses, violating or not

  bool empty() const { return entries.empty(); }
  int total() const { return static_cast<int>(entries.size()); }
};

namespace detail {

/// Net constant-power demand per bus and phase, volt-amperes. Loads add
/// their (scaled) demand; PVs subtract scaled generation and add their
/// (absorption-positive) reactive setpoint; capacitors subtract jQ.
inline std::map<std::string, Eigen::Vector3cd> bus_power_va(
    const Feeder& f, const InstanceScaling& scaling) {
  std::map<std::string, Eigen::Vector3cd> s;
  auto at = [&s](const std::string& bus) -> Eigen::Vector3cd& {
    auto it = s.find(bus);
    if (it == s.end())
      it = s.emplace(bus, Eigen::Vector3cd::Zero()).first;
    return it->second;
  };
  for (const auto& l : f.loads) {
    const double m = scaling.load(l.id);
    at(l.bus)(phase_index(l.phase)) += Complex(l.p_kw * m, l.q_kvar * m) * 1e3;
  }
  for (const auto& p : f.pvs) {
    const double m = scaling.pv(p.id);
    at(p.bus)(phase_index(p.phase)) +=
        Complex(-p.p_gen_kw * m, p.q_set_kvar) * 1e3;
  }
  for (const auto& c : f.capacitors)
    at(c.bus)(phase_index(c.phase)) += Complex(0.0, -c.q_kvar) * 1e3;
  return s;
}

/// Balanced positive-sequence source voltages: 1∠0°, 1∠−120°, 1∠120° p.u.
inline Eigen::Vector3cd source_voltage(double v_base) {
  const double rad = std::numbers::pi / 180.0;
  Eigen::Vector3cd v;
  v << Complex(v_base, 0.0),
      v_base * Complex(std::cos(-120.0 * rad), std::sin(-120.0 * rad)),
      v_base * Complex(std::cos(120.0 * rad), std::sin(120.0 * rad));
  return v;
}

/// Current injection for a constant-power demand at a voltage:
/// I = conj(S / V), with zero-demand phases drawing exactly zero.
inline Eigen::Vector3cd injection_current(const Eigen::Vector3cd& s_va,
                                          const Eigen::Vector3cd& v) {
  Eigen::Vector3cd i;
  for (int p = 0; p < kNumPhases; ++p)
    i(p) = (s_va(p) == Complex(0.0, 0.0)) ? Complex(0.0, 0.0)
                                          : std::conj(s_va(p) / v(p));
  return i;
}

/// Accumulates the demand/injection totals shared by both solvers.
inline void fill_totals(const Feeder& f, const InstanceScaling& scaling,
                        PowerFlowResult& r) {
  for (const auto& l : f.loads) {
    const double m = scaling.load(l.id);
    r.total_load_va += Complex(l.p_kw * m, l.q_kvar * m) * 1e3;
  }
  for (const auto& p : f.pvs) {
    const double m = scaling.pv(p.id);
    r.total_pv_injection_va += Complex(p.p_gen_kw * m, -p.q_set_kvar) * 1e3;
  }
  for (const auto& c : f.capacitors)
    r.total_cap_injection_va += Complex(0.0, c.q_kvar) * 1e3;
}

/// Tracks consecutive residual growth; 10 growths in a row means the fixed
/// point is diverging (load beyond deliverable power).
class DivergenceMonitor {
 public:
  void observe(double residual) {
    if (residual > last_ && last_ >= 0.0) {
      if (++growth_streak_ >= 10)
        throw Error(ErrorKind::convergence,
                    "fixed-point iteration diverging (residual grew over 10 "
                    "consecutive iterations); load likely exceeds deliverable "
                    "power");
    } else {
      growth_streak_ = 0;
    }
    last_ = residual;
  }

 private:
  double last_ = -1.0;
  int growth_streak_ = 0;
};

}  // namespace detail

/// Solves the explicit-conductor two-bus fixed point: phase injection
/// currents I = conj(S/V) and voltage update V = V_S − Z·I over the
/// primitive phase rows, keeping the full multi-conductor matrix so the
/// earth/mutual decomposition downstream is exact. Requires a feeder with
/// exactly two buses joined by one segment.
inline PowerFlowResult solve_two_bus(const Feeder& f,
                                     const ConvergenceConfig& cfg = {},
                                     const InstanceScaling& scaling = {}) {
  if (f.segments.size() != 1 || f.buses().size() != 2)
    throw Error(ErrorKind::topology,
                "solve_two_bus requires exactly 2 buses and 1 segment (got " +
                    std::to_string(f.buses().size()) + " buses, " +
                    std::to_string(f.segments.size()) + " segments)");
  const LineSegment& seg = f.segments[0];
  const std::string load_bus =
      seg.from_bus == f.source_bus ? seg.to_bus : seg.from_bus;

  const PrimitiveImpedance prim = build_primitive(f, seg);
  std::array<int, kNumPhases> row{};
  for (Phase ph : abc_phases()) {
    const int r = prim.row_of(ph);
    if (r < 0)
      throw Error(ErrorKind::topology,
                  "solve_two_bus: segment lacks phase " +
                      std::string(1, phase_letter(ph)));
    row[phase_index(ph)] = r;
  }
  Eigen::Matrix3cd zpp;
  for (int i = 0; i < kNumPhases; ++i)
    for (int j = 0; j < kNumPhases; ++j) zpp(i, j) = prim.z(row[i], row[j]);

  const double v_base = f.v_base();
  const Eigen::Vector3cd vs = detail::source_voltage(v_base);
  const auto bus_s = detail::bus_power_va(f, scaling);
  Eigen::Vector3cd s = Eigen::Vector3cd::Zero();
  if (auto it = bus_s.find(load_bus); it != bus_s.end()) s = it->second;

  PowerFlowResult result;
  result.v_base = v_base;
  result.source_bus = f.source_bus;
  detail::fill_totals(f, scaling, result);

  Eigen::Vector3cd v = vs;
  detail::DivergenceMonitor divergence;
  bool converged = false;
  int used = 0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Eigen::Vector3cd i = detail::injection_current(s, v);
    const Eigen::Vector3cd vn = vs - zpp * i;
    const double resid = ((vn - v).cwiseAbs().maxCoeff()) / v_base;
    v = vn;
    used = it;
    if (resid < cfg.tolerance_pu) {
      converged = true;
      break;
    }
    divergence.observe(resid);
  }
  if (!converged)
    throw Error(ErrorKind::convergence,
                "solve_two_bus did not converge in " +
                    std::to_string(cfg.max_iterations) + " iterations");

  const Eigen::Vector3cd i = detail::injection_current(s, v);
  result.iterations = used;
  result.converged = true;
  result.phasors.bus_voltage[f.source_bus] = vs;
  result.phasors.bus_voltage[load_bus] = v;
  Eigen::Vector4cd iseg;
  iseg << i(0), i(1), i(2), -(i(0) + i(1) + i(2));  // KCL return current
  result.phasors.segment_current[seg.id] = iseg;
  for (int p = 0; p < kNumPhases; ++p)
    result.source_power_va(p) = vs(p) * std::conj(i(p));
  result.total_loss_va =
      result.source_power_va.sum() - (v.array() * i.conjugate().array()).sum();
  return result;
}

/// Backward-forward sweep over the radial tree with Kron-reduced segment
/// impedances. Regulators are ideal per-phase ratio transformers at the
/// sending end: forward V_to = tap∘V_from − Z·I, backward I_up = tap∘I —
/// the power-conserving pair. Converges when the largest per-bus voltage
/// change drops below tolerance.
inline PowerFlowResult solve_radial(const Feeder& f,
                                    const ConvergenceConfig& cfg = {},
                                    const InstanceScaling& scaling = {}) {
  const auto order = validate_radial(f);
  const double v_base = f.v_base();
  const Eigen::Vector3cd vs = detail::source_voltage(v_base);

  // Per-segment phase impedance and tap vector, in traversal order.
  std::vector<Eigen::Matrix3cd> z(order.size());
  std::vector<Eigen::Vector3cd> tap(order.size(),
                                    Eigen::Vector3cd::Ones());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const LineSegment& seg = f.segments[order[k].index];
    z[k] = segment_phase_impedance(f, seg);
    for (const auto& reg : f.regulators)
      if (reg.segment == seg.id)
        tap[k](phase_index(reg.phase)) = Complex(reg.tap_ratio, 0.0);
  }

  const auto bus_s = detail::bus_power_va(f, scaling);
  auto s_at = [&](const std::string& bus) -> Eigen::Vector3cd {
    auto it = bus_s.find(bus);
    return it == bus_s.end() ? Eigen::Vector3cd::Zero() : it->second;
  };

  std::map<std::string, Eigen::Vector3cd> v;
  for (const auto& bus : f.buses()) v[bus] = vs;

  std::vector<Eigen::Vector3cd> iseg(order.size(), Eigen::Vector3cd::Zero());
  detail::DivergenceMonitor divergence;
  bool converged = false;
  int used = 0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    // Injection currents at the present voltages.
    std::map<std::string, Eigen::Vector3cd> ibus;
    for (const auto& [bus, vb] : v)
      ibus[bus] = detail::injection_current(s_at(bus), vb);

    // Backward sweep: aggregate currents leaf → source, scaling each
    // child's current by its own tap when crossing into the parent.
    std::map<std::string, Eigen::Vector3cd> iacc;
    for (std::size_t r = order.size(); r-- > 0;) {
      const auto& os = order[r];
      Eigen::Vector3cd i = ibus.at(os.to_bus);
      if (auto it2 = iacc.find(os.to_bus); it2 != iacc.end()) i += it2->second;
      iseg[r] = i;
      iacc.emplace(os.from_bus, Eigen::Vector3cd::Zero())
          .first->second += tap[r].cwiseProduct(i);
    }

    // Forward sweep: update voltages source → leaf.
    double resid = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& os = order[k];
      const Eigen::Vector3cd vn =
          tap[k].cwiseProduct(v.at(os.from_bus)) - z[k] * iseg[k];
      resid = std::max(resid,
                       (vn - v.at(os.to_bus)).cwiseAbs().maxCoeff() / v_base);
      v[os.to_bus] = vn;
    }

    used = it;
    if (resid < cfg.tolerance_pu) {
      converged = true;
      break;
    }
    divergence.observe(resid);
  }
  if (!converged)
    throw Error(ErrorKind::convergence,
                "solve_radial did not converge in " +
                    std::to_string(cfg.max_iterations) + " iterations");

  PowerFlowResult result;
  result.v_base = v_base;
  result.source_bus = f.source_bus;
  result.iterations = used;
  result.converged = true;
  detail::fill_totals(f, scaling, result);
  for (const auto& [bus, vb] : v) result.phasors.bus_voltage[bus] = vb;

  result.source_power_va.setZero();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& os = order[k];
    const LineSegment& seg = f.segments[os.index];

    // Neutral return current from the Kron elimination, when modeled.
    Eigen::Vector4cd cur;
    cur << iseg[k](0), iseg[k](1), iseg[k](2), Complex(0.0, 0.0);
    const PrimitiveImpedance prim = build_primitive(f, seg);
    const int nr = prim.row_of(Phase::N);
    if (nr >= 0) {
      Complex acc(0.0, 0.0);
      for (Phase ph : abc_phases()) {
        const int pr = prim.row_of(ph);
        if (pr >= 0) acc += prim.z(nr, pr) * iseg[k](phase_index(ph));
      }
      cur(3) = -acc / prim.z(nr, nr);
    }
    result.phasors.segment_current[seg.id] = cur;

    // Series losses: S_in − S_out = conj(I)·(Z·I), tap-independent.
    const Eigen::Vector3cd zi = z[k] * iseg[k];
    result.total_loss_va += (iseg[k].conjugate().array() * zi.array()).sum();

    if (os.from_bus == f.source_bus) {
      const Eigen::Vector3cd iup = tap[k].cwiseProduct(iseg[k]);
      for (int p = 0; p < kNumPhases; ++p)
        result.source_power_va(p) += vs(p) * std::conj(iup(p));
    }
  }
  return result;
}

/// Flags every bus phase outside the voltage band, in (bus id, phase) order.
/// The report's max_v_pu spans all buses, violating or not. Requires a
/// converged result.
inline ViolationReport check_violations(const PowerFlowResult& result,
                                        const VoltageLimits& limits = {}) {
  if (!result.converged)
    throw Error(ErrorKind::usage,
                "check_violations requires a converged result");
  ViolationReport report;
  for (const auto& [bus, v] : result.phasors.bus_voltage) {
    for (Phase ph : abc_phases()) {
      const double v_pu = std::abs(v(phase_index(ph))) / result.v_base;
      report.max_v_pu = std::max(report.max_v_pu, v_pu);
      if (v_pu > limits.v_max) {
        report.entries.push_back({bus, ph, v_pu, limits.v_max, true});
        ++report.count_per_phase[phase_index(ph)];
      } else if (v_pu < limits.v_min) {
        report.entries.push_back({bus, ph, v_pu, limits.v_min, false});
        ++report.count_per_phase[phase_index(ph)];
      }
    }
  }
  return report;
}

/// Conservation check: source injection + PV/capacitor injections − loads −
/// losses. Returns the complex mismatch in (kW, kVAr); its magnitude should
/// sit at solver precision for any converged case.
inline std::pair<double, double> source_power_balance(
    const PowerFlowResult& result) {
  const Complex mismatch =
      result.source_power_va.sum() + result.total_pv_injection_va +
      result.total_cap_injection_va - result.total_load_va -
      result.total_loss_va;
  return {mismatch.real() / 1e3, mismatch.imag() / 1e3};
}

}  // namespace xphase
