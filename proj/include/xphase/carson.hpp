#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "xphase/error.hpp"
#include "xphase/model.hpp"

namespace xphase {

/// Modified Carson constants at 60 Hz with 100 Ω·m earth resistivity.
/// All three are dimensioned for Ω/mile with distances in feet.
namespace carson_constants {
/// Earth-return resistance added to every element, Ω/mile.
inline constexpr double kEarthResistance = 0.09530;
/// Reactance coefficient, Ω/mile per natural-log unit.
inline constexpr double kReactanceCoeff = 0.12134;
/// Additive log term capturing earth resistivity and frequency.
inline constexpr double kEarthLogTerm = 7.93402;
/// Earth-return impedance common to every matrix element, Ω/mile.
inline std::complex<double> earth_term() {
  return {kEarthResistance, kReactanceCoeff * kEarthLogTerm};
}
}  // namespace carson_constants

/// Self impedance of one conductor, Ω/mile:
/// r + 0.09530 + j·0.12134·(ln(1/GMR) + 7.93402), GMR in feet.
inline std::complex<double> carson_self(const ConductorSpec& c) {
  if (c.gmr_ft <= 0.0)
    throw Error(ErrorKind::usage,
                "carson_self: gmr must be positive (conductor '" + c.name + "')");
  using namespace carson_constants;
  return {c.resistance_ohm_per_mile + kEarthResistance,
          kReactanceCoeff * (std::log(1.0 / c.gmr_ft) + kEarthLogTerm)};
}

/// Mutual impedance between two conductors `d` feet apart, Ω/mile:
/// 0.09530 + j·0.12134·(ln(1/d) + 7.93402).
inline std::complex<double> carson_mutual(double d_ft) {
  if (d_ft <= 0.0)
    throw Error(ErrorKind::usage, "carson_mutual: distance must be positive");
  using namespace carson_constants;
  return {kEarthResistance,
          kReactanceCoeff * (std::log(1.0 / d_ft) + kEarthLogTerm)};
}

/// Primitive series-impedance matrix of a line section, already scaled by
/// its length. Rows/columns follow the geometry's position order; `labels`
/// records which phase each row carries.
struct PrimitiveImpedance {
  Eigen::MatrixXcd z;          ///< Ω
  std::vector<Phase> labels;   ///< per row/column
  double length_miles = 0.0;

  int rows() const { return static_cast<int>(z.rows()); }

  /// Row index carrying the given phase, or -1.
  int row_of(Phase p) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == p) return static_cast<int>(i);
    return -1;
  }
};

/// Split of a primitive matrix into the constant earth-return component and
/// the remaining self/mutual component. By construction z_earth + z_mut == z
/// exactly (same-representation subtraction).
struct ImpedanceDecomposition {
  Eigen::MatrixXcd z_earth;  ///< every element identical
  Eigen::MatrixXcd z_mut;    ///< z − z_earth
};

/// Builds the primitive impedance matrix for a geometry at a given length.
/// `lookup` resolves conductor names (usually Feeder::conductor).
inline PrimitiveImpedance build_primitive(const LineGeometry& geom,
                                          const Feeder& feeder,
                                          double length_miles) {
  if (length_miles <= 0.0)
    throw Error(ErrorKind::usage, "build_primitive: length must be positive");
  const int n = static_cast<int>(geom.positions.size());
  if (n < 1 || n > 4)
    throw Error(ErrorKind::usage,
                "build_primitive: geometry must have 1..4 conductors");

  PrimitiveImpedance out;
  out.z.resize(n, n);
  out.length_miles = length_miles;
  for (const auto& pos : geom.positions) out.labels.push_back(pos.phase);

  for (int i = 0; i < n; ++i) {
    const auto& pi = geom.positions[i];
    out.z(i, i) = carson_self(feeder.conductor(pi.conductor)) * length_miles;
    for (int j = i + 1; j < n; ++j) {
      const auto& pj = geom.positions[j];
      const double d = std::hypot(pi.x_ft - pj.x_ft, pi.y_ft - pj.y_ft);
      if (d <= 0.0)
        throw Error(ErrorKind::usage,
                    "build_primitive: coincident conductors in geometry '" +
                        geom.name + "'");
      const std::complex<double> zm = carson_mutual(d) * length_miles;
      out.z(i, j) = zm;
      out.z(j, i) = zm;
    }
  }
  return out;
}

/// Convenience overload for a feeder segment.
inline PrimitiveImpedance build_primitive(const Feeder& f,
                                          const LineSegment& seg) {
  return build_primitive(f.geometry(seg.geometry), f, seg.length_miles);
}

/// Extracts the earth-return component: a constant matrix whose every
/// element is (0.09530 + j·0.12134·7.93402)·length, and the remainder.
inline ImpedanceDecomposition decompose(const PrimitiveImpedance& z) {
  const std::complex<double> ze =
      carson_constants::earth_term() * z.length_miles;
  ImpedanceDecomposition d;
  d.z_earth = Eigen::MatrixXcd::Constant(z.z.rows(), z.z.cols(), ze);
  d.z_mut = z.z - d.z_earth;
  return d;
}

/// Eliminates the neutral row/column assuming a multi-grounded neutral:
/// z_abc = z_pp − z_pn·z_nn⁻¹·z_np. The result is ordered (A, B, C); phases
/// missing from the geometry keep zero rows/columns (no conductor: the
/// solver carries their voltage through unchanged, and validation forbids
/// load on them downstream).
inline Eigen::Matrix3cd kron_reduce(const PrimitiveImpedance& z) {
  const int nr = z.row_of(Phase::N);
  if (nr < 0)
    throw Error(ErrorKind::usage, "kron_reduce: geometry has no neutral row");

  std::vector<int> prow;  // phase rows, in matrix order
  for (int i = 0; i < z.rows(); ++i)
    if (i != nr) prow.push_back(i);
  const int np = static_cast<int>(prow.size());

  Eigen::MatrixXcd zpp(np, np), zpn(np, 1), znp(1, np);
  for (int i = 0; i < np; ++i) {
    zpn(i, 0) = z.z(prow[i], nr);
    znp(0, i) = z.z(nr, prow[i]);
    for (int j = 0; j < np; ++j) zpp(i, j) = z.z(prow[i], prow[j]);
  }
  const std::complex<double> znn = z.z(nr, nr);
  if (std::abs(znn) == 0.0)
    throw Error(ErrorKind::usage, "kron_reduce: singular neutral block");
  const Eigen::MatrixXcd reduced = zpp - zpn * (znp / znn);

  Eigen::Matrix3cd out = Eigen::Matrix3cd::Zero();
  for (int i = 0; i < np; ++i) {
    const int pi = phase_index(z.labels[prow[i]]);
    for (int j = 0; j < np; ++j)
      out(pi, phase_index(z.labels[prow[j]])) = reduced(i, j);
  }
  return out;
}

/// Phase-frame (A, B, C) series impedance of a segment: Kron-reduced when a
/// neutral is present, otherwise the phase block reordered canonically.
inline Eigen::Matrix3cd segment_phase_impedance(const Feeder& f,
                                                const LineSegment& seg) {
  const PrimitiveImpedance prim = build_primitive(f, seg);
  if (prim.row_of(Phase::N) >= 0) return kron_reduce(prim);
  Eigen::Matrix3cd out = Eigen::Matrix3cd::Zero();
  for (int i = 0; i < prim.rows(); ++i)
    for (int j = 0; j < prim.rows(); ++j)
      out(phase_index(prim.labels[i]), phase_index(prim.labels[j])) =
          prim.z(i, j);
  return out;
}

}  // namespace xphase
