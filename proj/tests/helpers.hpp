// Shared fixtures for the test suite: data-file paths and hand-built feeders
// that mirror the shipped benchmarks without touching the filesystem.

#pragma once

#include <cmath>
#include <string>

#include "xphase/xphase.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) {
  return std::string(XPHASE_DATA_DIR) + "/" + name;
}

/// Reactive power of a load given P and a lagging power factor.
inline double q_from_pf(double p_kw, double pf) {
  return p_kw * std::tan(std::acos(pf));
}

/// Standard 4-wire overhead crossarm: A(0,29) B(2.5,29) C(7,29) N(4,25) ft,
/// 336.4 ACSR phases and 4/0 ACSR neutral.
inline xphase::Feeder two_bus_feeder() {
  using namespace xphase;
  Feeder f;
  f.name = "twobus";
  f.source_bus = "n1";
  f.source_voltage_kv_ll = 4.16;
  f.conductors = {
      {"acsr_336_26_7", 0.0244, 0.306, 530.0},
      {"acsr_4_0_6_1", 0.00814, 0.592, 340.0},
  };
  LineGeometry g;
  g.name = "ohl_4wire_horiz";
  g.positions = {
      {Phase::A, 0.0, 29.0, "acsr_336_26_7"},
      {Phase::B, 2.5, 29.0, "acsr_336_26_7"},
      {Phase::C, 7.0, 29.0, "acsr_336_26_7"},
      {Phase::N, 4.0, 25.0, "acsr_4_0_6_1"},
  };
  f.geometries = {g};
  f.segments = {{"line1", "n1", "n4", 2500.0 / 5280.0, "ohl_4wire_horiz"}};
  const double q = q_from_pf(1800.0, 0.9);
  f.loads = {
      {"loadA", "n4", Phase::A, 1800.0, q},
      {"loadB", "n4", Phase::B, 1800.0, q},
      {"loadC", "n4", Phase::C, 1800.0, q},
  };
  f.pvs = {{"pvA", "n4", Phase::A, 0.0, 300.0, 0.0}};
  return f;
}

}  // namespace testutil
