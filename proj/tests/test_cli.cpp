#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "keymocap/cli.hpp"
#include "keymocap/io.hpp"

using namespace keymocap;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "keymocap");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("keymocap_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> csv_rows(const std::string& csv) {
  std::vector<std::string> rows;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(line);
  return rows;
}

}  // namespace

TEST(Cli, UsageErrors) {
  const fs::path dir = scratch("usage");
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"solve", "--out", dir.string(), "--methods", ""}).code, kExitUsage);
  EXPECT_EQ(run({"solve", "--out", dir.string(), "--methods", "bundle,magic"}).code, kExitUsage);
  EXPECT_EQ(run({"generate", "--out", dir.string(), "--frames", "abc"}).code, kExitUsage);
  EXPECT_EQ(run({"generate", "--out", dir.string(), "--dropout", "2"}).code, kExitUsage);
}

TEST(Cli, MissingInputIsInputError) {
  const fs::path dir = scratch("missing");
  const CliRun r = run({"solve", "--out", dir.string()});
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("skeleton.json"), std::string::npos);
  ASSERT_EQ(run({"generate", "--out", dir.string(), "--frames", "5"}).code, kExitOk);
  EXPECT_EQ(run({"solve", "--out", dir.string(), "--observations", (dir / "nope.json").string()}).code,
            kExitInput);
}

TEST(Cli, GenerateIsByteIdentical) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(run({"generate", "--out", a.string(), "--frames", "21", "--noise-sigma", "2", "--seed", "3"}).code, kExitOk);
  ASSERT_EQ(run({"generate", "--out", b.string(), "--frames", "21", "--noise-sigma", "2", "--seed", "3"}).code, kExitOk);
  for (const char* name : {"scenario.json", "skeleton.json", "rig.json", "truth.json", "observations.json"})
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  const Json obs = read_json_file(a / "observations.json");
  EXPECT_EQ(obs.at("frames").size(), 21u);
}

TEST(Cli, FullDropoutZeroesConfidences) {
  const fs::path dir = scratch("dropout");
  ASSERT_EQ(run({"generate", "--out", dir.string(), "--frames", "4", "--dropout", "1"}).code, kExitOk);
  const Json obs = read_json_file(dir / "observations.json");
  for (const Json& frame : obs.at("frames"))
    for (const Json& view : frame)
      for (const Json& e : view) EXPECT_EQ(e.at("w").get<double>(), 0.0);
}

TEST(Cli, NoiselessBundleRunAndTwoMethods) {
  const fs::path dir = scratch("run");
  const CliRun r = run({"run", "--out", dir.string(), "--frames", "21", "--methods", "bundle,per-frame"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::vector<std::string> rows = csv_rows(slurp(dir / "metrics.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].rfind("synthetic,bundle,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("synthetic,per-frame,", 0), 0u);
  const Json metrics = read_json_file(dir / "metrics.json");
  EXPECT_LT(metrics.at("reports").at(0).at("mpjpe_mm").get<double>(), 5.0);
  EXPECT_TRUE(fs::exists(dir / "flexion_bundle.csv"));
  EXPECT_TRUE(fs::exists(dir / "solve_bundle.json"));
}

TEST(Cli, TruthScoredAgainstItselfIsPerfect) {
  const fs::path dir = scratch("perfect");
  ASSERT_EQ(run({"generate", "--out", dir.string(), "--frames", "6"}).code, kExitOk);
  fs::copy_file(dir / "truth.json", dir / "motion_per-frame.json");
  const CliRun r = run({"report", "--out", dir.string(), "--methods", "per-frame", "--sequence", "self"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json m = read_json_file(dir / "metrics.json").at("reports").at(0);
  EXPECT_EQ(m.at("sequence").get<std::string>(), "self");
  EXPECT_EQ(m.at("mpjpe_mm").get<double>(), 0.0);
  EXPECT_EQ(m.at("mae_deg").get<double>(), 0.0);
  EXPECT_EQ(m.at("pck3").get<double>(), 1.0);
  EXPECT_EQ(m.at("pck7").get<double>(), 1.0);
}

TEST(Cli, ExperimentFileAndExportDecoder) {
  const fs::path dir = scratch("experiment");
  {
    std::ofstream(dir / "scenario.json") << R"({"frames": 11})";
    std::ofstream(dir / "solve.json") << R"({"window": 5})";
    std::ofstream(dir / "experiment.json")
        << R"({"scenario": "scenario.json", "solve": "solve.json", "out": "out", "seed": 4})";
  }
  const CliRun r = run({"run", "--experiment", (dir / "experiment.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json truth = read_json_file(dir / "out" / "truth.json");
  EXPECT_EQ(truth.at("frames").size(), 11u);
  const Json log = read_json_file(dir / "out" / "solve_bundle.json");
  EXPECT_EQ(log.at("config").at("window").get<int>(), 5);
  EXPECT_EQ(log.at("windows").size(), 2u);

  ASSERT_EQ(run({"export-decoder", (dir / "d.bin").string()}).code, kExitOk);
  EXPECT_EQ(read_decoder_file(dir / "d.bin").latent_dim(), 12);
}
