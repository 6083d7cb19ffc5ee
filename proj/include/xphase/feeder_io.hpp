#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xphase/error.hpp"
#include "xphase/model.hpp"

namespace xphase {

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, "'" + path + "': " + e.what());
  }
  return j;
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key,
            const std::string& where) {
  if (!j.contains(key))
    throw Error(ErrorKind::parse, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, where + ": field '" + key + "': " + e.what());
  }
}

/// Reactive power of a load entry: explicit q_kvar wins; otherwise a lagging
/// power factor converts as q = p·tan(acos(pf)).
inline double load_q_kvar(const nlohmann::json& j, double p_kw,
                          const std::string& where) {
  if (j.contains("q_kvar")) return j.at("q_kvar").get<double>();
  if (j.contains("power_factor")) {
    const double pf = j.at("power_factor").get<double>();
    if (pf <= 0.0 || pf > 1.0)
      throw Error(ErrorKind::validation,
                  where + ": power factor must be in (0, 1]");
    return p_kw * std::tan(std::acos(pf));
  }
  throw Error(ErrorKind::parse,
              where + ": needs either 'q_kvar' or 'power_factor'");
}

/// True when a phase field names all three phases ("ABC"), meaning the entry
/// expands into three equal single-phase entries.
inline bool is_three_phase(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return u == "ABC";
}

inline std::string phase_suffix(Phase p) {
  return std::string("_") +
         static_cast<char>(std::tolower(static_cast<unsigned char>(phase_letter(p))));
}

inline PVSpec parse_pv(const nlohmann::json& j, const std::string& where) {
  PVSpec p;
  p.id = get_field<std::string>(j, "id", where);
  p.bus = get_field<std::string>(j, "bus", where);
  p.phase = parse_phase(get_field<std::string>(j, "phase", where));
  p.p_gen_kw = get_field<double>(j, "p_kw", where);
  p.s_rating_kva = get_field<double>(j, "s_rating_kva", where);
  p.q_set_kvar = j.value("q_set_kvar", 0.0);
  return p;
}

}  // namespace detail

/// Parses a feeder JSON document (already read into memory). Three-phase
/// loads and capacitors (phase "ABC") are expanded into three equal
/// single-phase entries with `_a`/`_b`/`_c` id suffixes. The result is fully
/// validated before it is returned.
inline Feeder parse_feeder(const nlohmann::json& j, const std::string& where) {
  Feeder f;
  f.name = j.value("name", "");
  f.description = j.value("description", "");
  f.source_bus = detail::get_field<std::string>(j, "source_bus", where);
  f.source_voltage_kv_ll =
      detail::get_field<double>(j, "source_voltage_kv_ll", where);

  for (const auto& cj : j.value("conductors", nlohmann::json::array())) {
    ConductorSpec c;
    c.name = detail::get_field<std::string>(cj, "name", where + " conductor");
    c.gmr_ft = detail::get_field<double>(cj, "gmr_ft", where + " conductor");
    c.resistance_ohm_per_mile = detail::get_field<double>(
        cj, "resistance_ohm_per_mile", where + " conductor");
    c.ampacity_a = cj.value("ampacity_a", 0.0);
    f.conductors.push_back(c);
  }

  for (const auto& gj : j.value("geometries", nlohmann::json::array())) {
    LineGeometry g;
    g.name = detail::get_field<std::string>(gj, "name", where + " geometry");
    for (const auto& pj : gj.value("positions", nlohmann::json::array())) {
      ConductorPosition pos;
      pos.phase =
          parse_phase(detail::get_field<std::string>(pj, "phase", g.name));
      pos.x_ft = detail::get_field<double>(pj, "x_ft", g.name);
      pos.y_ft = detail::get_field<double>(pj, "y_ft", g.name);
      pos.conductor = detail::get_field<std::string>(pj, "conductor", g.name);
      g.positions.push_back(pos);
    }
    f.geometries.push_back(g);
  }

  for (const auto& sj : j.value("segments", nlohmann::json::array())) {
    LineSegment s;
    s.id = detail::get_field<std::string>(sj, "id", where + " segment");
    s.from_bus = detail::get_field<std::string>(sj, "from_bus", s.id);
    s.to_bus = detail::get_field<std::string>(sj, "to_bus", s.id);
    s.length_miles = detail::get_field<double>(sj, "length_miles", s.id);
    s.geometry = detail::get_field<std::string>(sj, "geometry", s.id);
    f.segments.push_back(s);
  }

  for (const auto& lj : j.value("loads", nlohmann::json::array())) {
    const std::string id =
        detail::get_field<std::string>(lj, "id", where + " load");
    const std::string phase_str =
        detail::get_field<std::string>(lj, "phase", id);
    const double p = detail::get_field<double>(lj, "p_kw", id);
    const double q = detail::load_q_kvar(lj, p, "load '" + id + "'");
    LoadSpec l;
    l.bus = detail::get_field<std::string>(lj, "bus", id);
    if (detail::is_three_phase(phase_str)) {
      for (Phase ph : abc_phases()) {
        l.id = id + detail::phase_suffix(ph);
        l.phase = ph;
        l.p_kw = p / 3.0;
        l.q_kvar = q / 3.0;
        f.loads.push_back(l);
      }
    } else {
      l.id = id;
      l.phase = parse_phase(phase_str);
      l.p_kw = p;
      l.q_kvar = q;
      f.loads.push_back(l);
    }
  }

  for (const auto& pj : j.value("pvs", nlohmann::json::array()))
    f.pvs.push_back(detail::parse_pv(pj, where + " pv"));
  for (const auto& pj : j.value("pv_pool", nlohmann::json::array()))
    f.pv_pool.push_back(detail::parse_pv(pj, where + " pool pv"));

  for (const auto& rj : j.value("regulators", nlohmann::json::array())) {
    RegulatorSpec r;
    r.segment =
        detail::get_field<std::string>(rj, "segment", where + " regulator");
    r.phase = parse_phase(detail::get_field<std::string>(rj, "phase", r.segment));
    r.tap_ratio = detail::get_field<double>(rj, "tap", r.segment);
    f.regulators.push_back(r);
  }

  for (const auto& cj : j.value("capacitors", nlohmann::json::array())) {
    const std::string id =
        detail::get_field<std::string>(cj, "id", where + " capacitor");
    const std::string phase_str =
        detail::get_field<std::string>(cj, "phase", id);
    CapacitorSpec c;
    c.bus = detail::get_field<std::string>(cj, "bus", id);
    const double q = detail::get_field<double>(cj, "q_kvar", id);
    if (detail::is_three_phase(phase_str)) {
      for (Phase ph : abc_phases()) {
        c.id = id + detail::phase_suffix(ph);
        c.phase = ph;
        c.q_kvar = q / 3.0;
        f.capacitors.push_back(c);
      }
    } else {
      c.id = id;
      c.phase = parse_phase(phase_str);
      c.q_kvar = q;
      f.capacitors.push_back(c);
    }
  }

  validate(f);
  return f;
}

/// Loads and validates a feeder from a JSON file.
inline Feeder load_feeder(const std::string& path) {
  return parse_feeder(detail::parse_json_file(path), path);
}

/// Serializes a feeder back to its JSON document form. Loads carry explicit
/// q_kvar (power factors are resolved at parse time), so
/// parse_feeder(serialize_feeder(f)) reproduces `f` exactly.
inline nlohmann::json serialize_feeder(const Feeder& f) {
  nlohmann::json j;
  j["name"] = f.name;
  j["description"] = f.description;
  j["source_bus"] = f.source_bus;
  j["source_voltage_kv_ll"] = f.source_voltage_kv_ll;
  j["conductors"] = nlohmann::json::array();
  for (const auto& c : f.conductors)
    j["conductors"].push_back({{"name", c.name},
                               {"gmr_ft", c.gmr_ft},
                               {"resistance_ohm_per_mile",
                                c.resistance_ohm_per_mile},
                               {"ampacity_a", c.ampacity_a}});
  j["geometries"] = nlohmann::json::array();
  for (const auto& g : f.geometries) {
    nlohmann::json gj{{"name", g.name},
                      {"positions", nlohmann::json::array()}};
    for (const auto& p : g.positions)
      gj["positions"].push_back({{"phase", std::string(1, phase_letter(p.phase))},
                                 {"x_ft", p.x_ft},
                                 {"y_ft", p.y_ft},
                                 {"conductor", p.conductor}});
    j["geometries"].push_back(gj);
  }
  j["segments"] = nlohmann::json::array();
  for (const auto& s : f.segments)
    j["segments"].push_back({{"id", s.id},
                             {"from_bus", s.from_bus},
                             {"to_bus", s.to_bus},
                             {"length_miles", s.length_miles},
                             {"geometry", s.geometry}});
  j["loads"] = nlohmann::json::array();
  for (const auto& l : f.loads)
    j["loads"].push_back({{"id", l.id},
                          {"bus", l.bus},
                          {"phase", std::string(1, phase_letter(l.phase))},
                          {"p_kw", l.p_kw},
                          {"q_kvar", l.q_kvar}});
  auto pv_json = [](const PVSpec& p) {
    return nlohmann::json{{"id", p.id},
                          {"bus", p.bus},
                          {"phase", std::string(1, phase_letter(p.phase))},
                          {"p_kw", p.p_gen_kw},
                          {"s_rating_kva", p.s_rating_kva},
                          {"q_set_kvar", p.q_set_kvar}};
  };
  j["pvs"] = nlohmann::json::array();
  for (const auto& p : f.pvs) j["pvs"].push_back(pv_json(p));
  j["regulators"] = nlohmann::json::array();
  for (const auto& r : f.regulators)
    j["regulators"].push_back({{"segment", r.segment},
                               {"phase", std::string(1, phase_letter(r.phase))},
                               {"tap", r.tap_ratio}});
  j["capacitors"] = nlohmann::json::array();
  for (const auto& c : f.capacitors)
    j["capacitors"].push_back({{"id", c.id},
                               {"bus", c.bus},
                               {"phase", std::string(1, phase_letter(c.phase))},
                               {"q_kvar", c.q_kvar}});
  if (!f.pv_pool.empty()) {
    j["pv_pool"] = nlohmann::json::array();
    for (const auto& p : f.pv_pool) j["pv_pool"].push_back(pv_json(p));
  }
  return j;
}

/// Writes a feeder to a JSON file (two-space indent, trailing newline).
inline void save_feeder(const Feeder& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << serialize_feeder(f).dump(2) << "\n";
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace detail

/// Loads a time-series profile from CSV. Header: `instance` first, then any
/// mix of `load:<id>` and `pv:<id>` columns. Every referenced id must exist
/// on the feeder, and multipliers must be non-negative.
inline TimeSeriesProfile load_profile(const std::string& path,
                                      const Feeder& feeder) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::parse, "'" + path + "': empty profile");
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "instance")
    throw Error(ErrorKind::parse,
                "'" + path + "': first column must be 'instance'");

  enum class Kind { load, pv };
  std::vector<std::pair<Kind, std::string>> columns;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.rfind("load:", 0) == 0) {
      const std::string id = h.substr(5);
      if (std::none_of(feeder.loads.begin(), feeder.loads.end(),
                       [&](const LoadSpec& l) { return l.id == id; }))
        throw Error(ErrorKind::validation,
                    "'" + path + "': unknown load id '" + id + "'");
      columns.emplace_back(Kind::load, id);
    } else if (h.rfind("pv:", 0) == 0) {
      const std::string id = h.substr(3);
      const bool in_pvs = feeder.find_pv(id) != nullptr;
      const bool in_pool = std::any_of(
          feeder.pv_pool.begin(), feeder.pv_pool.end(),
          [&](const PVSpec& p) { return p.id == id; });
      if (!in_pvs && !in_pool)
        throw Error(ErrorKind::validation,
                    "'" + path + "': unknown pv id '" + id + "'");
      columns.emplace_back(Kind::pv, id);
    } else {
      throw Error(ErrorKind::parse, "'" + path + "': column '" + h +
                                        "' must start with load: or pv:");
    }
  }

  TimeSeriesProfile profile;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::parse, "'" + path + "' line " +
                                        std::to_string(line_no) +
                                        ": wrong cell count");
    const std::string& label = cells[0];
    if (profile.has_instance(label))
      throw Error(ErrorKind::parse, "'" + path + "': duplicate instance '" +
                                        label + "'");
    profile.instances.push_back(label);
    for (std::size_t i = 0; i < columns.size(); ++i) {
      double v = 0.0;
      try {
        v = std::stod(cells[i + 1]);
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse, "'" + path + "' line " +
                                          std::to_string(line_no) +
                                          ": bad number '" + cells[i + 1] + "'");
      }
      if (v < 0.0)
        throw Error(ErrorKind::validation,
                    "'" + path + "': multipliers must be non-negative");
      if (columns[i].first == Kind::load)
        profile.load_mult[label][columns[i].second] = v;
      else
        profile.pv_mult[label][columns[i].second] = v;
    }
  }
  if (profile.instances.empty())
    throw Error(ErrorKind::parse, "'" + path + "': no instances");
  return profile;
}

}  // namespace xphase
