#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xphase/error.hpp"

namespace xphase {

/// Conductor role on a line. Phase conductors carry A/B/C; `N` is the
/// (optional) multi-grounded neutral.
enum class Phase : int { A = 0, B = 1, C = 2, N = 3 };

inline constexpr int kNumPhases = 3;

/// Index of a phase within 3-element per-phase vectors (A=0, B=1, C=2).
inline int phase_index(Phase p) { return static_cast<int>(p); }

inline char phase_letter(Phase p) {
  switch (p) {
    case Phase::A: return 'A';
    case Phase::B: return 'B';
    case Phase::C: return 'C';
    case Phase::N: return 'N';
  }
  return '?';
}

/// Parses "A"/"B"/"C"/"N" (case-insensitive). Throws on anything else.
inline Phase parse_phase(const std::string& s) {
  if (s.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(s[0]))) {
      case 'A': return Phase::A;
      case 'B': return Phase::B;
      case 'C': return Phase::C;
      case 'N': return Phase::N;
    }
  }
  throw Error(ErrorKind::parse, "unknown phase label '" + s + "'");
}

/// The three load-carrying phases, in canonical order.
inline const std::vector<Phase>& abc_phases() {
  static const std::vector<Phase> p{Phase::A, Phase::B, Phase::C};
  return p;
}

/// Physical conductor data used by the impedance builder.
struct ConductorSpec {
  std::string name;
  double gmr_ft = 0.0;               ///< geometric mean radius, feet
  double resistance_ohm_per_mile = 0.0;
  double ampacity_a = 0.0;           ///< informational only

  friend bool operator==(const ConductorSpec&, const ConductorSpec&) = default;
};

/// One conductor position on a structure: where it hangs and what it is.
struct ConductorPosition {
  Phase phase = Phase::A;
  double x_ft = 0.0;
  double y_ft = 0.0;
  std::string conductor;  ///< name of a ConductorSpec

  friend bool operator==(const ConductorPosition&,
                         const ConductorPosition&) = default;
};

/// Cross-sectional layout of a line: conductor coordinates plus the mapping
/// from position to phase. At most one conductor per phase label; the
/// neutral is optional.
struct LineGeometry {
  std::string name;
  std::vector<ConductorPosition> positions;

  /// True if some position carries the given phase.
  bool has_phase(Phase p) const {
    return std::any_of(positions.begin(), positions.end(),
                       [&](const ConductorPosition& c) { return c.phase == p; });
  }

  friend bool operator==(const LineGeometry&, const LineGeometry&) = default;
};

/// A series line section between two buses.
struct LineSegment {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  double length_miles = 0.0;
  std::string geometry;  ///< name of a LineGeometry

  friend bool operator==(const LineSegment&, const LineSegment&) = default;
};

/// Constant-power load on one phase of one bus. Reactive power may be given
/// directly or derived from a lagging power factor at load time.
struct LoadSpec {
  std::string id;
  std::string bus;
  Phase phase = Phase::A;
  double p_kw = 0.0;
  double q_kvar = 0.0;

  friend bool operator==(const LoadSpec&, const LoadSpec&) = default;
};

/// Single-phase PV inverter. Sign convention: positive `q_set_kvar` means
/// reactive-power ABSORPTION (it adds to the bus reactive demand); negative
/// means injection. Real generation `p_gen_kw` always reduces bus demand.
struct PVSpec {
  std::string id;
  std::string bus;
  Phase phase = Phase::A;
  double p_gen_kw = 0.0;
  double s_rating_kva = 0.0;
  double q_set_kvar = 0.0;

  friend bool operator==(const PVSpec&, const PVSpec&) = default;
};

/// Ideal per-phase series voltage regulator on a segment, applied at the
/// sending end: forward voltages scale by `tap_ratio`, and the upstream
/// current scales by `tap_ratio` as well so that power is conserved.
struct RegulatorSpec {
  std::string segment;
  Phase phase = Phase::A;
  double tap_ratio = 1.0;

  friend bool operator==(const RegulatorSpec&, const RegulatorSpec&) = default;
};

/// Static shunt capacitor: constant reactive-power injection on one phase.
struct CapacitorSpec {
  std::string id;
  std::string bus;
  Phase phase = Phase::A;
  double q_kvar = 0.0;

  friend bool operator==(const CapacitorSpec&, const CapacitorSpec&) = default;
};

/// Immutable radial network description. All mutating study operations copy.
struct Feeder {
  std::string name;
  std::string description;
  std::string source_bus;
  double source_voltage_kv_ll = 0.0;  ///< line-to-line kV at the source

  std::vector<ConductorSpec> conductors;
  std::vector<LineGeometry> geometries;
  std::vector<LineSegment> segments;
  std::vector<LoadSpec> loads;
  std::vector<PVSpec> pvs;
  std::vector<RegulatorSpec> regulators;
  std::vector<CapacitorSpec> capacitors;
  /// Candidate PVs for interconnection (addition) studies, in study order.
  /// Not energized until a study adds them.
  std::vector<PVSpec> pv_pool;

  /// Nominal phase-to-neutral voltage magnitude, volts.
  double v_base() const {
    return source_voltage_kv_ll * 1000.0 / std::sqrt(3.0);
  }

  /// Sorted unique bus names (source included).
  std::vector<std::string> buses() const {
    std::set<std::string> s{source_bus};
    for (const auto& seg : segments) {
      s.insert(seg.from_bus);
      s.insert(seg.to_bus);
    }
    return {s.begin(), s.end()};
  }

  const ConductorSpec& conductor(const std::string& name) const {
    for (const auto& c : conductors)
      if (c.name == name) return c;
    throw Error(ErrorKind::validation, "unknown conductor '" + name + "'");
  }

  const LineGeometry& geometry(const std::string& name) const {
    for (const auto& g : geometries)
      if (g.name == name) return g;
    throw Error(ErrorKind::validation, "unknown geometry '" + name + "'");
  }

  const LineSegment& segment(const std::string& id) const {
    for (const auto& s : segments)
      if (s.id == id) return s;
    throw Error(ErrorKind::validation, "unknown segment '" + id + "'");
  }

  const PVSpec* find_pv(const std::string& id) const {
    for (const auto& p : pvs)
      if (p.id == id) return &p;
    return nullptr;
  }

  friend bool operator==(const Feeder&, const Feeder&) = default;
};

/// Per-instance load and PV multipliers (e.g., one row per hour of a day).
struct TimeSeriesProfile {
  std::vector<std::string> instances;  ///< labels, in file order
  /// multipliers[label][load id] and [pv id]; missing ids default to 1.0.
  std::map<std::string, std::map<std::string, double>> load_mult;
  std::map<std::string, std::map<std::string, double>> pv_mult;

  bool has_instance(const std::string& label) const {
    return std::find(instances.begin(), instances.end(), label) !=
           instances.end();
  }
};

/// Multipliers resolved for one instance; defaults are the identity scenario
/// (all loads at 1.0, all PV at 1.0).
struct InstanceScaling {
  std::map<std::string, double> load_mult;
  std::map<std::string, double> pv_mult;

  double load(const std::string& id) const {
    auto it = load_mult.find(id);
    return it == load_mult.end() ? 1.0 : it->second;
  }
  double pv(const std::string& id) const {
    auto it = pv_mult.find(id);
    return it == pv_mult.end() ? 1.0 : it->second;
  }
};

namespace detail {

/// Undirected bus adjacency: bus -> indices into feeder.segments.
inline std::map<std::string, std::vector<std::size_t>> bus_adjacency(
    const Feeder& f) {
  std::map<std::string, std::vector<std::size_t>> adj;
  for (std::size_t i = 0; i < f.segments.size(); ++i) {
    adj[f.segments[i].from_bus].push_back(i);
    adj[f.segments[i].to_bus].push_back(i);
  }
  return adj;
}

}  // namespace detail

/// One traversal entry: a segment with its orientation resolved so that
/// `from_bus` is the source side.
struct OrientedSegment {
  std::size_t index = 0;      ///< into Feeder::segments
  std::string id;
  std::string from_bus;       ///< upstream (source side)
  std::string to_bus;         ///< downstream
};

/// Checks radiality and returns segments in breadth-first order from the
/// source, parents before children, ties broken by segment id. Throws a
/// validation error on cycles or disconnected buses.
inline std::vector<OrientedSegment> validate_radial(const Feeder& f) {
  const auto adj = detail::bus_adjacency(f);
  std::vector<OrientedSegment> order;
  order.reserve(f.segments.size());
  std::set<std::string> visited{f.source_bus};
  std::vector<bool> used(f.segments.size(), false);
  std::deque<std::string> frontier{f.source_bus};

  while (!frontier.empty()) {
    const std::string bus = frontier.front();
    frontier.pop_front();
    auto it = adj.find(bus);
    if (it == adj.end()) continue;
    // Deterministic order: incident segments by id.
    std::vector<std::size_t> incident = it->second;
    std::sort(incident.begin(), incident.end(),
              [&](std::size_t a, std::size_t b) {
                return f.segments[a].id < f.segments[b].id;
              });
    for (std::size_t si : incident) {
      if (used[si]) continue;
      const LineSegment& seg = f.segments[si];
      const std::string& other = seg.from_bus == bus ? seg.to_bus : seg.from_bus;
      if (visited.count(other)) {
        throw Error(ErrorKind::validation,
                    "cycle detected at segment '" + seg.id + "'");
      }
      used[si] = true;
      visited.insert(other);
      order.push_back({si, seg.id, bus, other});
      frontier.push_back(other);
    }
  }

  for (std::size_t i = 0; i < f.segments.size(); ++i) {
    if (!used[i]) {
      throw Error(ErrorKind::validation, "segment '" + f.segments[i].id +
                                             "' is not reachable from source '" +
                                             f.source_bus + "'");
    }
  }
  return order;
}

/// Full structural validation. Checks every model invariant: positive
/// physical quantities, resolvable references, unique identifiers, radial
/// topology, and phase supply (every phase used at a bus must be carried by
/// every segment on the path from the source). Throws on the first failure.
inline void validate(const Feeder& f) {
  if (f.source_bus.empty())
    throw Error(ErrorKind::validation, "feeder has no source bus");
  if (f.source_voltage_kv_ll <= 0.0)
    throw Error(ErrorKind::validation, "source voltage must be positive");

  for (const auto& c : f.conductors) {
    if (c.gmr_ft <= 0.0)
      throw Error(ErrorKind::validation,
                  "conductor '" + c.name + "': gmr must be positive");
    if (c.resistance_ohm_per_mile <= 0.0)
      throw Error(ErrorKind::validation,
                  "conductor '" + c.name + "': resistance must be positive");
  }

  for (const auto& g : f.geometries) {
    std::set<Phase> seen;
    for (const auto& pos : g.positions) {
      if (!seen.insert(pos.phase).second)
        throw Error(ErrorKind::validation, "geometry '" + g.name +
                                               "': duplicate phase " +
                                               phase_letter(pos.phase));
      f.conductor(pos.conductor);  // must resolve
    }
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
      for (std::size_t j = i + 1; j < g.positions.size(); ++j) {
        const double dx = g.positions[i].x_ft - g.positions[j].x_ft;
        const double dy = g.positions[i].y_ft - g.positions[j].y_ft;
        if (std::hypot(dx, dy) <= 0.0)
          throw Error(ErrorKind::validation,
                      "geometry '" + g.name + "': coincident conductors");
      }
    }
  }

  std::set<std::string> seg_ids;
  for (const auto& s : f.segments) {
    if (s.length_miles <= 0.0)
      throw Error(ErrorKind::validation,
                  "segment '" + s.id + "': length must be positive");
    if (s.from_bus == s.to_bus)
      throw Error(ErrorKind::validation,
                  "segment '" + s.id + "': from_bus equals to_bus");
    if (!seg_ids.insert(s.id).second)
      throw Error(ErrorKind::validation, "duplicate segment id '" + s.id + "'");
    f.geometry(s.geometry);  // must resolve
  }

  // Radiality: tree rooted at the source (also checks connectivity).
  const auto order = validate_radial(f);
  const auto all_buses = f.buses();
  if (f.segments.size() + 1 != all_buses.size())
    throw Error(ErrorKind::validation, "segment/bus count is not tree-like");

  // Upstream segment per bus, for phase-supply walks.
  std::map<std::string, const OrientedSegment*> up;
  for (const auto& os : order) up[os.to_bus] = &os;
  std::set<std::string> bus_set(all_buses.begin(), all_buses.end());

  auto check_supplied = [&](const std::string& bus, Phase ph,
                            const std::string& what) {
    if (!bus_set.count(bus))
      throw Error(ErrorKind::validation, what + ": unknown bus '" + bus + "'");
    for (std::string b = bus; b != f.source_bus;) {
      const OrientedSegment* os = up.at(b);
      const LineSegment& seg = f.segments[os->index];
      if (!f.geometry(seg.geometry).has_phase(ph))
        throw Error(ErrorKind::validation,
                    what + ": phase " + phase_letter(ph) +
                        " is not supplied at bus '" + bus + "' (segment '" +
                        seg.id + "' lacks it)");
      b = os->from_bus;
    }
  };

  std::set<std::string> load_ids;
  for (const auto& l : f.loads) {
    if (l.p_kw < 0.0)
      throw Error(ErrorKind::validation,
                  "load '" + l.id + "': p must be non-negative");
    if (!load_ids.insert(l.id).second)
      throw Error(ErrorKind::validation, "duplicate load id '" + l.id + "'");
    check_supplied(l.bus, l.phase, "load '" + l.id + "'");
  }

  std::set<std::string> pv_ids;
  auto check_pv = [&](const PVSpec& p, const char* origin) {
    if (p.p_gen_kw < 0.0)
      throw Error(ErrorKind::validation,
                  std::string(origin) + " '" + p.id + "': p_gen must be >= 0");
    if (std::hypot(p.p_gen_kw, p.q_set_kvar) > p.s_rating_kva * (1.0 + 1e-12))
      throw Error(ErrorKind::validation,
                  std::string(origin) + " '" + p.id +
                      "': operating point exceeds s_rating");
    if (!pv_ids.insert(p.id).second)
      throw Error(ErrorKind::validation,
                  std::string("duplicate pv id '") + p.id + "'");
  };
  for (const auto& p : f.pvs) {
    check_pv(p, "pv");
    check_supplied(p.bus, p.phase, "pv '" + p.id + "'");
  }
  for (const auto& p : f.pv_pool) {
    check_pv(p, "pool pv");
    check_supplied(p.bus, p.phase, "pool pv '" + p.id + "'");
  }

  for (const auto& r : f.regulators) {
    const LineSegment& seg = f.segment(r.segment);
    if (r.tap_ratio < 0.9 || r.tap_ratio > 1.1)
      throw Error(ErrorKind::validation, "regulator on '" + r.segment +
                                             "': tap_ratio outside [0.9, 1.1]");
    if (!f.geometry(seg.geometry).has_phase(r.phase))
      throw Error(ErrorKind::validation,
                  "regulator on '" + r.segment + "': segment lacks phase " +
                      phase_letter(r.phase));
  }

  for (const auto& c : f.capacitors) {
    if (c.q_kvar < 0.0)
      throw Error(ErrorKind::validation,
                  "capacitor '" + c.id + "': q_injection must be >= 0");
    check_supplied(c.bus, c.phase, "capacitor '" + c.id + "'");
  }
}

/// Returns a copy of the feeder with load powers and PV generation scaled by
/// the profile's multipliers at instance `label`. The input is unchanged.
inline Feeder apply_instance(const Feeder& f, const TimeSeriesProfile& profile,
                             const std::string& label) {
  if (!profile.has_instance(label))
    throw Error(ErrorKind::usage, "unknown instance label '" + label + "'");
  Feeder out = f;
  const auto lm = profile.load_mult.find(label);
  const auto pm = profile.pv_mult.find(label);
  for (auto& l : out.loads) {
    if (lm != profile.load_mult.end()) {
      auto it = lm->second.find(l.id);
      if (it != lm->second.end()) {
        l.p_kw *= it->second;
        l.q_kvar *= it->second;
      }
    }
  }
  for (auto& p : out.pvs) {
    if (pm != profile.pv_mult.end()) {
      auto it = pm->second.find(p.id);
      if (it != pm->second.end()) p.p_gen_kw *= it->second;
    }
  }
  return out;
}

/// Scaling view for one profile instance (used by solvers and controllers,
/// which prefer multiplying on the fly over copying the feeder).
inline InstanceScaling instance_scaling(const TimeSeriesProfile& profile,
                                        const std::string& label) {
  if (!profile.has_instance(label))
    throw Error(ErrorKind::usage, "unknown instance label '" + label + "'");
  InstanceScaling s;
  auto lm = profile.load_mult.find(label);
  if (lm != profile.load_mult.end()) s.load_mult = lm->second;
  auto pm = profile.pv_mult.find(label);
  if (pm != profile.pv_mult.end()) s.pv_mult = pm->second;
  return s;
}

/// Remaining reactive capability (kVAr) of a PV at a generation multiplier:
/// sqrt(s² − (p·mult)²). Zero when the rating is fully used by real power.
inline double pv_q_capability(const PVSpec& pv, double gen_mult) {
  const double p = pv.p_gen_kw * gen_mult;
  const double s2 = pv.s_rating_kva * pv.s_rating_kva - p * p;
  return s2 > 0.0 ? std::sqrt(s2) : 0.0;
}

}  // namespace xphase
