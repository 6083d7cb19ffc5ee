// Rendering layer: number formatting, content hashing, CSV and JSON
// renderers, the run manifest, and deterministic bundle emission.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "xphase/xphase.hpp"

using namespace xphase;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("g6 renders six significant digits") {
  CHECK(g6(0.0) == "0");
  CHECK(g6(1.0) == "1");
  CHECK(g6(1.05) == "1.05");
  CHECK(g6(-20.0) == "-20");
  CHECK(g6(2401.777118749598) == "2401.78");
  CHECK(g6(0.123456789) == "0.123457");
  CHECK(g6(1234567.0) == "1.23457e+06");
  CHECK(g6(-1e-7) == "-1e-07");
  CHECK(g6(0.949056) == "0.949056");
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  // Offset basis and published FNV-1a test vectors.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);

  CHECK(hex64(0xcbf29ce484222325ULL) == "cbf29ce484222325");
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xffffffffffffffffULL) == "ffffffffffffffff");
}

TEST_CASE("hash_file digests file bytes") {
  const fs::path tmp = fs::temp_directory_path() / "xphase_hash_probe.txt";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << "foobar";
  }
  CHECK(hash_file(tmp.string()) == hex64(fnv1a64("foobar")));
  fs::remove(tmp);

  try {
    hash_file((fs::temp_directory_path() / "xphase_no_such_file").string());
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("voltage table lists every bus and phase") {
  const Feeder f = load_feeder(testutil::data_path("twobus.json"));
  const PowerFlowResult res = solve_two_bus(f);
  const std::string csv = voltage_table_csv(res);
  const auto lines = split_lines(csv);

  REQUIRE(lines.size() == 7);  // header + 2 buses x 3 phases
  CHECK(lines[0] == "bus,phase,v_volts,v_pu,angle_deg");
  CHECK(lines[1] == "n1,A,2401.78,1,0");  // source phasor, exact per unit
  CHECK(lines[2].rfind("n1,B,2401.78,", 0) == 0);
  CHECK(lines[4].rfind("n4,A,2103.51,", 0) == 0);  // loaded bus sags

  // Every numeric cell reproduces the g6 rendering of the phasor set.
  const Eigen::Vector3cd v4 = res.voltage("n4");
  const std::string expect_a = std::string("n4,A,") + g6(std::abs(v4(0))) +
                               ',' + g6(std::abs(v4(0)) / res.v_base) + ',' +
                               g6(phase_angle_deg(v4(0)));
  CHECK(lines[4] == expect_a);
}

TEST_CASE("violations csv carries band edges and direction") {
  const Feeder f = load_feeder(testutil::data_path("twobus.json"));
  const PowerFlowResult res = solve_radial(f);

  const ViolationReport under = check_violations(res, {0.95, 1.05});
  const auto lines = split_lines(violations_csv(under));
  REQUIRE(lines.size() == 1 + under.entries.size());
  CHECK(lines[0] == "bus,phase,v_pu,limit_pu,kind");
  for (std::size_t i = 0; i < under.entries.size(); ++i) {
    const Violation& v = under.entries[i];
    const std::string expect = v.bus + ',' + phase_letter(v.phase) + ',' +
                               g6(v.v_pu) + ',' + g6(v.limit) + ',' +
                               (v.over ? "over" : "under");
    CHECK(lines[1 + i] == expect);
  }
  CHECK(lines[1].find(",under") != std::string::npos);

  // A band pulled below the operating point reports over-voltages.
  const ViolationReport over = check_violations(res, {0.5, 0.9});
  REQUIRE(over.total() >= 1);
  CHECK(violations_csv(over).find(",over") != std::string::npos);
}

TEST_CASE("sensitivity csv labels rows bus.phase and columns pv:id") {
  const Feeder f = load_feeder(testutil::data_path("twobus.json"));
  const SensitivityMatrix sm =
      build_vqsm(f, monitored_node_phases(f), {"pvA"}, 10.0);
  const auto lines = split_lines(sensitivity_csv(sm));

  REQUIRE(lines.size() == 4);  // header + the three monitored phases of n4
  CHECK(lines[0] == "node,pv:pvA");
  CHECK(lines[1].rfind("n4.A,", 0) == 0);
  CHECK(lines[2].rfind("n4.B,", 0) == 0);
  CHECK(lines[3].rfind("n4.C,", 0) == 0);
  CHECK(lines[1] == "n4.A," + g6(sm.values(0, 0)));
}

TEST_CASE("phasor csv renders all decomposition components") {
  const Feeder f = load_feeder(testutil::data_path("twobus.json"));
  Feeder pert = f;
  pert.pvs[0].q_set_kvar = 100.0;
  const PhasorReport rep =
      phasor_report(decompose_delta(f, pert), solve_two_bus(f),
                    solve_two_bus(pert), "n4");
  const auto lines = split_lines(phasor_csv(rep));

  REQUIRE(lines.size() == 13);  // header + 3 phases x 4 components
  CHECK(lines[0] == "phase,component,magnitude_v,angle_deg,re_v,im_v");
  CHECK(lines[1].rfind("A,base,2103.51,", 0) == 0);
  CHECK(lines[2].rfind("A,perturbed,", 0) == 0);
  CHECK(lines[3].rfind("A,dv_earth,24.6094,", 0) == 0);
  CHECK(lines[4].rfind("A,dv_mut,", 0) == 0);
  CHECK(lines[5].rfind("B,base,", 0) == 0);

  // Cartesian columns are the rendered polar-to-rect conversion.
  const Phasor& base_a = rep.phases[0].base;
  const double rad = base_a.angle_deg * std::numbers::pi / 180.0;
  const std::string expect = std::string("A,base,") + g6(base_a.magnitude) +
                             ',' + g6(base_a.angle_deg) + ',' +
                             g6(base_a.magnitude * std::cos(rad)) + ',' +
                             g6(base_a.magnitude * std::sin(rad));
  CHECK(lines[1] == expect);
}

TEST_CASE("trace csv records per-round worst violation and action") {
  const Feeder f = load_feeder(testutil::data_path("twobus.json"));
  const ControlConfig cfg;
  InstanceScaling s;
  for (const auto& load : f.loads) s.load_mult[load.id] = 0.46;
  const SensitivityMatrix sm = build_vqsm(
      f, monitored_node_phases(f), {"pvA"}, cfg.sm_delta_q_kvar, cfg.solver, s);
  const ControlPlan plan = prioritized_q_intervention(f, sm, cfg, s);

  const auto lines = split_lines(trace_csv(plan));
  REQUIRE(lines.size() == 4);  // header + two acting rounds + clean exit
  CHECK(lines[0] ==
        "round,violations,worst_bus,worst_phase,worst_v_pu,action_pv,"
        "action_dq_kvar");
  CHECK(lines[1].rfind("0,1,n4,A,", 0) == 0);
  CHECK(lines[1].find(",pvA,-10") != std::string::npos);
  CHECK(lines[2].rfind("1,1,n4,A,", 0) == 0);
  CHECK(lines[3] == "2,0,,,,,");  // terminal round: no violation, no action
}

TEST_CASE("comparison csv emits one strategy per line") {
  const Feeder f = load_feeder(testutil::data_path("hipv.json"));
  const TimeSeriesProfile profile =
      load_profile(testutil::data_path("day.csv"), f);
  const ComparisonReport rep = compare_controllers(f, profile, ControlConfig{});

  const auto lines = split_lines(comparison_summary_csv(rep));
  REQUIRE(lines.size() == 1 + 24 * 3);
  CHECK(lines[0] ==
        "instance,strategy,violations,max_v_pu,total_q_kvar,iterations,"
        "cleared,error");
  CHECK(lines[1].rfind("h00,upf,", 0) == 0);
  CHECK(lines[2].rfind("h00,per-phase,", 0) == 0);
  CHECK(lines[3].rfind("h00,full,", 0) == 0);
  CHECK(lines[72].rfind("h23,full,", 0) == 0);

  // The single-row renderer agrees with the summary body.
  const std::string one = comparison_rows_csv(rep.rows[0], true);
  CHECK(split_lines(one).size() == 4);
  CHECK(one.find(lines[1] + "\n") != std::string::npos);
}

TEST_CASE("study csv flags flips and cleared steps") {
  const Feeder f = load_feeder(testutil::data_path("coupled30.json"));
  const AdditionStudy study = pv_addition_study(f, ControlConfig{});
  const auto lines = split_lines(study_csv(study));

  REQUIRE(lines.size() == 5);  // header + baseline + three additions
  CHECK(lines[0] ==
        "step,added_pv,upf_violations,upf_a,upf_b,upf_c,upf_max_v_pu,"
        "greedy_rounds,residual,flip_phases,flip_action,cleared,total_q_kvar");
  CHECK(lines[1].rfind("0,,0,0,0,0,", 0) == 0);
  CHECK(lines[2].rfind("1,pv_c06_b,2,0,2,0,", 0) == 0);
  // step 1: 6 greedy rounds, clean residual, A-phase flip acted on, 60 kVAr.
  CHECK(lines[2].find(",6,0,A,1,1,60") != std::string::npos);
  CHECK(lines[4].rfind("3,pv_b05_b,25,", 0) == 0);
}

TEST_CASE("json renderers expose full-precision results") {
  const Feeder f = load_feeder(testutil::data_path("twobus.json"));
  const PowerFlowResult res = solve_radial(f);

  const nlohmann::json pf = powerflow_json(res);
  CHECK(pf["converged"] == true);
  CHECK(pf["iterations"].get<int>() >= 1);
  CHECK(pf["v_base_v"].get<double>() == res.v_base);
  CHECK(pf["source_bus"] == "n1");
  REQUIRE(pf["voltages"].contains("n4"));
  const auto& a = pf["voltages"]["n4"]["A"];
  CHECK(a["magnitude_v"].get<double>() == std::abs(res.voltage("n4")(0)));
  CHECK(a["pu"].get<double>() ==
        std::abs(res.voltage("n4")(0)) / res.v_base);
  CHECK(pf["source_power_va"].size() == 3);
  CHECK(pf["total_loss_va"].contains("re"));

  const ViolationReport rep = check_violations(res, {0.95, 1.05});
  const nlohmann::json vj = violations_json(rep);
  CHECK(vj["total"].get<int>() == rep.total());
  CHECK(vj["per_phase"]["A"].get<int>() == rep.count_per_phase[0]);
  CHECK(vj["entries"].size() == rep.entries.size());
  CHECK(vj["max_v_pu"].get<double>() == rep.max_v_pu);

  const nlohmann::json cj = complex_json(Complex(1.5, -2.5));
  CHECK(cj["re"].get<double>() == 1.5);
  CHECK(cj["im"].get<double>() == -2.5);

  Eigen::MatrixXcd m(2, 1);
  m << Complex(1, 2), Complex(3, 4);
  const nlohmann::json mj = matrix_json(m);
  REQUIRE(mj.size() == 2);
  REQUIRE(mj[0].size() == 1);
  CHECK(mj[1][0]["im"].get<double>() == 4.0);
}

TEST_CASE("plan and study json mirror the structs") {
  const Feeder f = load_feeder(testutil::data_path("coupled30.json"));
  const AdditionStudy study = pv_addition_study(f, ControlConfig{});

  const nlohmann::json sj = study_json(study);
  REQUIRE(sj["steps"].size() == 4);
  CHECK(sj["last_clean_step"].get<int>() == 3);
  CHECK(sj["aborted"] == false);
  CHECK_FALSE(sj.contains("error"));
  CHECK_FALSE(sj["steps"][0].contains("plan"));  // baseline has no controller
  REQUIRE(sj["steps"][1].contains("plan"));
  CHECK(sj["steps"][1]["upf_by_phase"]["B"].get<int>() == 2);
  CHECK(sj["steps"][1]["flip_phases"] == "A");
  CHECK(sj["steps"][1]["flip_action"] == true);

  const nlohmann::json pj = sj["steps"][1]["plan"];
  const ControlPlan& plan = study.steps[1].plan;
  CHECK(pj["cleared"] == plan.cleared);
  CHECK(pj["iterations"].get<int>() == plan.iterations);
  CHECK(pj["total_q_kvar"].get<double>() == plan.total_q_kvar);
  REQUIRE(pj["actions"].size() == plan.actions.size());
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    CHECK(pj["actions"][i]["pv"] == plan.actions[i].pv);
    CHECK(pj["actions"][i]["q_set_kvar"].get<double>() ==
          plan.actions[i].q_set_kvar);
  }
  for (const auto& [id, q] : plan.q_final_kvar)
    CHECK(pj["q_final_kvar"][id].get<double>() == q);
  CHECK(pj["residual"]["total"].get<int>() == plan.residual.total());
}

TEST_CASE("manifest json records inputs, knobs, and output hashes") {
  RunManifest m;
  m.subcommand = "powerflow";
  m.feeder_path = "data/twobus.json";
  m.feeder_hash = "00000000deadbeef";
  m.instances = {"h00", "h01"};
  m.parameters["model"] = "radial";

  const nlohmann::json j =
      manifest_json(m, {{"a.csv", "1111111111111111"}});
  CHECK(j["schema_version"].get<int>() == 1);
  CHECK(j["tool"]["name"] == "xphase");
  CHECK(j["tool"]["version"] == version());
  CHECK(j["subcommand"] == "powerflow");
  CHECK(j["inputs"]["feeder"]["path"] == "data/twobus.json");
  CHECK(j["inputs"]["feeder"]["fnv1a64"] == "00000000deadbeef");
  CHECK_FALSE(j["inputs"].contains("profile"));  // none was used
  CHECK_FALSE(j.contains("strategy"));
  CHECK(j["instances"].size() == 2);
  CHECK(j["parameters"]["model"] == "radial");
  REQUIRE(j["outputs"].size() == 1);
  CHECK(j["outputs"][0]["name"] == "a.csv");
  CHECK(j["outputs"][0]["fnv1a64"] == "1111111111111111");

  m.profile_path = "data/day.csv";
  m.profile_hash = "2222222222222222";
  m.strategy = "lp-full";
  const nlohmann::json k = manifest_json(m, {});
  CHECK(k["inputs"]["profile"]["path"] == "data/day.csv");
  CHECK(k["strategy"] == "lp-full");
}

TEST_CASE("emit_reports writes the bundle deterministically, manifest last") {
  const fs::path dir = fs::temp_directory_path() / "xphase_report_bundle";
  fs::remove_all(dir);

  ReportBundle bundle;
  bundle.add("voltages.csv", "bus,phase\nn1,A\n");
  bundle.add("summary.json", "{\"ok\":true}\n");
  RunManifest m;
  m.subcommand = "powerflow";
  m.feeder_path = "twobus.json";
  m.feeder_hash = hex64(fnv1a64("feeder-bytes"));

  const std::vector<std::string> written =
      emit_reports(bundle, m, dir.string());
  REQUIRE(written == std::vector<std::string>{"voltages.csv", "summary.json",
                                              "manifest.json"});
  CHECK(slurp(dir / "voltages.csv") == "bus,phase\nn1,A\n");
  CHECK(slurp(dir / "summary.json") == "{\"ok\":true}\n");

  const std::string manifest_bytes = slurp(dir / "manifest.json");
  const nlohmann::json j = nlohmann::json::parse(manifest_bytes);
  REQUIRE(j["outputs"].size() == 2);
  CHECK(j["outputs"][0]["name"] == "voltages.csv");
  CHECK(j["outputs"][0]["fnv1a64"] ==
        hex64(fnv1a64("bus,phase\nn1,A\n")));
  CHECK(j["outputs"][1]["fnv1a64"] == hex64(fnv1a64("{\"ok\":true}\n")));

  // A rerun reproduces every byte, manifest included.
  emit_reports(bundle, m, dir.string());
  CHECK(slurp(dir / "manifest.json") == manifest_bytes);

  // Nested directories are created on demand.
  const fs::path nested = dir / "deep" / "er";
  emit_reports(bundle, m, nested.string());
  CHECK(fs::exists(nested / "manifest.json"));

  // A file standing where the directory should go is an io error.
  const fs::path blocked = dir / "voltages.csv";
  try {
    emit_reports(bundle, m, blocked.string());
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
  fs::remove_all(dir);
}
