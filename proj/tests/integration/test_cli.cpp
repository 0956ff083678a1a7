#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using calcap::testing::TempDir;
using nlohmann::json;

namespace {

struct CmdResult {
  int rc = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Runs the real binary; stdout and stderr land in scratch files.
CmdResult run(const TempDir& scratch, const std::string& args) {
  static int n = 0;
  const fs::path o = scratch / ("out" + std::to_string(n) + ".txt");
  const fs::path e = scratch / ("err" + std::to_string(n++) + ".txt");
  const std::string cmd =
      std::string("'") + CALIB_CAPTURE_BIN + "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Small session from a synth config snippet.
fs::path session(const TempDir& dir, const std::string& synth_json) {
  put(dir / "synth.json", synth_json);
  const fs::path s = dir / "session";
  const CmdResult r = run(dir, "synth " + q(dir / "synth.json") + " " + q(s));
  EXPECT_EQ(r.rc, 0) << r.err;
  return s;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  TempDir dir;
  const CmdResult r = run(dir, "--help");
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("calibrate"), std::string::npos);
  EXPECT_EQ(run(dir, "calibrate --help").rc, 0);
}

TEST(Cli, MissingSubcommandIsInputError) {
  TempDir dir;
  EXPECT_EQ(run(dir, "").rc, 1);
  EXPECT_EQ(run(dir, "frobnicate").rc, 1);
}

TEST(Cli, MissingSessionIsInputError) {
  TempDir dir;
  const CmdResult r = run(dir, "extract " + q(dir / "nope"));
  EXPECT_EQ(r.rc, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, UnknownConfigKeyIsNamed) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_events": 6})");
  put(dir / "bad.json", R"({"solver": {"lamda": 1.0}})");
  const CmdResult r = run(dir, "extract " + q(s) + " --config " + q(dir / "bad.json"));
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("solver.lamda"), std::string::npos) << r.err;
}

TEST(Cli, NoTranscriptNeedsSpotter) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_events": 8, "write_transcript": false})");
  const CmdResult plain = run(dir, "extract " + q(s));
  EXPECT_EQ(plain.rc, 2);
  EXPECT_NE(plain.err.find("InsufficientTriggers"), std::string::npos) << plain.err;

  const CmdResult spotted = run(dir, "extract " + q(s) + " --spotter templates");
  ASSERT_EQ(spotted.rc, 0) << spotted.err;
  const json rep = json::parse(slurp(s / "sync_report.json"));
  EXPECT_EQ(rep["trigger_source"], "spotter");
  EXPECT_EQ(rep["summary"]["n_triggers"], 8);
}

TEST(Cli, MissingSpotterDirectoryIsInputError) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_events": 4, "write_transcript": false})");
  EXPECT_EQ(run(dir, "extract " + q(s) + " --spotter " + q(dir / "nowhere")).rc, 1);
}

TEST(Cli, CalibrateBeforeExtractIsInputError) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_events": 4})");
  const CmdResult r = run(dir, "calibrate " + q(s));
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("extract"), std::string::npos);
}

TEST(Cli, TooFewViewsIsSolverError) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_pinhole": 1, "include_double_sphere": false, "n_events": 2})");
  put(dir / "cfg.json", R"({"extract": {"min_views": 1}})");
  const std::string cfg = " --config " + q(dir / "cfg.json");
  ASSERT_EQ(run(dir, "extract " + q(s) + cfg).rc, 0);
  const CmdResult r = run(dir, "calibrate " + q(s) + cfg);
  EXPECT_EQ(r.rc, 3);
  EXPECT_NE(r.err.find("NotEnoughViews"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("cam0"), std::string::npos);
}

TEST(Cli, DisconnectedRigIsGraphError) {
  TempDir dir;
  const fs::path s = session(
      dir, R"({"n_pinhole": 3, "include_double_sphere": false, "n_events": 12,
               "visibility_groups": [["cam0", "cam1"], ["cam2"]]})");
  ASSERT_EQ(run(dir, "extract " + q(s)).rc, 0);
  const CmdResult r = run(dir, "calibrate " + q(s));
  EXPECT_EQ(r.rc, 4);
  EXPECT_NE(r.err.find("cam2"), std::string::npos) << r.err;
}

TEST(Cli, BadModelOverrideIsInputError) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_events": 6})");
  ASSERT_EQ(run(dir, "extract " + q(s)).rc, 0);
  EXPECT_EQ(run(dir, "calibrate " + q(s) + " --camera cam0 --model fisheye").rc, 1);
}

TEST(Cli, ReportWithEmptyTraceWarnsAndSkipsPlot) {
  TempDir dir;
  const fs::path s = session(dir, R"({"n_pinhole": 2, "include_double_sphere": false, "n_events": 8})");
  ASSERT_EQ(run(dir, "extract " + q(s)).rc, 0);
  ASSERT_EQ(run(dir, "calibrate " + q(s)).rc, 0);
  json doc = json::parse(slurp(s / "calibration.json"));
  doc["trace"] = json::array();
  const fs::path out = dir / "plots";
  fs::create_directories(out);
  put(dir / "empty.json", doc.dump());
  const CmdResult r = run(dir, "report " + q(dir / "empty.json") + " --out-dir " + q(out));
  EXPECT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "convergence.svg"));

  const CmdResult full = run(dir, "report " + q(s / "calibration.json") + " --out-dir " + q(out));
  EXPECT_EQ(full.rc, 0);
  EXPECT_TRUE(fs::exists(out / "convergence.svg"));
}

TEST(Cli, MalformedResultIsInputError) {
  TempDir dir;
  put(dir / "r.json", R"({"cameras": 3})");
  EXPECT_EQ(run(dir, "report " + q(dir / "r.json")).rc, 1);
  EXPECT_EQ(run(dir, "report " + q(dir / "absent.json")).rc, 1);
}
