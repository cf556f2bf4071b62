#include "dsopt/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace dsopt;

namespace {

std::string preset(const char* name) { return std::string(DSOPT_PRESET_DIR) + "/" + name; }

Json preset_json(const char* name) {
  std::ifstream in(preset(name));
  return Json::parse(in);
}

Json small_ls() {
  Json j = preset_json("ls_paper.json");
  j["steps"] = 40;
  j["replications"] = 2;
  j["monte_carlo_samples"] = 200;
  return j;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("dsopt_test_" + name);
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(Config, PresetsLoad) {
  const auto ls = load_config(preset("ls_paper.json"));
  EXPECT_EQ(ls.scenario, "least_squares");
  EXPECT_EQ(ls.steps, 3000);
  EXPECT_EQ(ls.reps, 25);
  EXPECT_DOUBLE_EQ(*ls.alpha, 1.0 / 400.0);
  EXPECT_DOUBLE_EQ(ls.policy.nu, 0.25 * 0.001);
  EXPECT_EQ(ls.mc_samples, 5000u);
  const auto wp = load_config(preset("waypoint_paper.json"));
  EXPECT_EQ(wp.scenario, "waypoint");
  EXPECT_EQ(wp.policy.mode, PolicyMode::LinearSimplified);
  EXPECT_FALSE(wp.alpha.has_value());
}

TEST(Config, RejectsBadInput) {
  Json j = small_ls();
  j["stepz"] = 3;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["steps"] = "many";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["steps"] = 0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["replications"] = 0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["policy"]["mode"] = "sometimes";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["policy"]["nu"] = 0.1;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["step_sizes"]["alpha"] = "auto";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = small_ls();
  j["least_squares"]["h_bar"] = Json::array({Json::array({0.0, 0.0}), Json::array({0.0, 0.0})});
  EXPECT_THROW(parse_config(j), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, DisconnectedGraphRejectedAtRun) {
  Json j = small_ls();
  j["network"]["radius"] = 0.01;
  EXPECT_THROW(run_experiment(parse_config(j)), ConfigError);
}

TEST(Validate, WaypointPresetPasses) {
  const auto r = validate_experiment(load_config(preset("waypoint_paper.json")));
  EXPECT_TRUE(r.ok()) << format_report(r);
  EXPECT_NEAR(r.constants.m_f, 1.0, 1e-6);
}

TEST(Validate, BetaAtOneOverNFails) {
  Json j = preset_json("waypoint_paper.json");
  j["step_sizes"]["beta"] = 1.0 / 16.0;
  const auto r = validate_experiment(parse_config(j));
  EXPECT_FALSE(r.ok());
  for (const auto& c : r.checks) EXPECT_EQ(c.pass, c.name != "beta < 1/n") << c.name;
}

TEST(Validate, AlphaAtBoundaryFails) {
  Json j = preset_json("waypoint_paper.json");
  const auto first = validate_experiment(parse_config(j));
  j["step_sizes"]["alpha"] = first.constants.m_f / (first.constants.L * first.constants.L);
  const auto r = validate_experiment(parse_config(j));
  EXPECT_FALSE(r.ok());
  bool alpha_failed = false;
  for (const auto& c : r.checks)
    if (c.name == "alpha < m_f/L^2") alpha_failed = !c.pass;
  EXPECT_TRUE(alpha_failed) << format_report(r);
}

TEST(Run, TraceFormatAndSummaryKeys) {
  auto cfg = parse_config(small_ls());
  const auto dir = temp_dir("format");
  const auto r = run_experiment(cfg);
  write_outputs(r, dir);
  std::istringstream trace(slurp(dir / "trace.csv"));
  std::string line;
  std::getline(trace, line);
  EXPECT_EQ(line, "k,mean_sq_error,bound,pdf_msgs,snapshot_msgs,everytime_msgs");
  int rows = 0;
  while (std::getline(trace, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
  }
  EXPECT_EQ(rows, 40);
  const Json s = Json::parse(slurp(dir / "summary.json"));
  std::set<std::string> keys;
  for (const auto& [k, _] : s.items()) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"m_f", "L", "G", "delta_x", "gamma", "rho", "bound", "trailing_error",
                                         "pdf_msg_ratio", "snapshot_msg_ratio"}));
  EXPECT_EQ(format_g17(0.1), "0.10000000000000001");
}

TEST(Run, DeterministicAcrossRunsAndThreads) {
  auto cfg = parse_config(small_ls());
  cfg.threads = 1;
  const auto a = run_experiment(cfg);
  cfg.threads = 2;
  const auto b = run_experiment(cfg);
  const auto da = temp_dir("det_a"), db = temp_dir("det_b");
  write_outputs(a, da);
  write_outputs(b, db);
  EXPECT_EQ(slurp(da / "trace.csv"), slurp(db / "trace.csv"));
  EXPECT_EQ(slurp(da / "summary.json"), slurp(db / "summary.json"));
}

TEST(Run, EveryTimeRatioIsOne) {
  auto cfg = parse_config(small_ls());
  cfg.policy.mode = PolicyMode::EveryTime;
  EXPECT_DOUBLE_EQ(run_experiment(cfg).summary.pdf_msg_ratio, 1.0);
}

TEST(Run, RawTracesAndMessageLog) {
  Json j = small_ls();
  j["output"]["raw_traces"] = true;
  j["output"]["message_log"] = true;
  const auto cfg = parse_config(j);
  const auto r = run_experiment(cfg);
  const auto dir = temp_dir("raw");
  write_outputs(r, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "trace_rep0.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "trace_rep1.csv"));
  const std::string bytes = slurp(dir / "messages_rep1.bin");
  const auto msgs = decode_messages(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  ASSERT_EQ(msgs.size(), r.reps[1].messages.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    EXPECT_EQ(msgs[i].tick, r.reps[1].messages[i].tick);
    EXPECT_EQ(msgs[i].kind, r.reps[1].messages[i].kind);
    EXPECT_EQ(msgs[i].payload, r.reps[1].messages[i].payload);
  }
}

TEST(Cli, ExitCodes) {
  const std::string bin = DSOPT_CLI;
  const auto dir = temp_dir("cli");
  std::filesystem::create_directories(dir);
  Json j = small_ls();
  j["output"]["dir"] = (dir / "out").string();
  {
    std::ofstream os(dir / "cfg.json");
    os << j.dump();
  }
  auto run = [](const std::string& cmd) { return WEXITSTATUS(std::system((cmd + " > /dev/null 2>&1").c_str())); };
  EXPECT_EQ(run(bin + " run --config " + (dir / "cfg.json").string() + " --steps 5"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "trace.csv"));
  EXPECT_EQ(run(bin + " run --config " + (dir / "missing.json").string()), 1);
  EXPECT_EQ(run(bin + " run --config " + (dir / "cfg.json").string() + " --steps 0"), 1);
  EXPECT_EQ(run(bin + " run --config " + (dir / "cfg.json").string() + " --policy sometimes"), 1);
  EXPECT_EQ(run(bin + " validate --config " + preset("waypoint_paper.json")), 0);
  Json bad = preset_json("waypoint_paper.json");
  bad["step_sizes"]["beta"] = 1.0 / 16.0;
  {
    std::ofstream os(dir / "bad.json");
    os << bad.dump();
  }
  EXPECT_EQ(run(bin + " validate --config " + (dir / "bad.json").string()), 1);
}
