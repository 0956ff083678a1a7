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

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int sh(const std::string& args) {
  const std::string cmd = std::string("'") + CALIB_CAPTURE_BIN + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// synth -> extract -> calibrate -> report on one directory.
void pipeline(const fs::path& cfg, const fs::path& s) {
  ASSERT_EQ(sh("synth " + q(cfg) + " " + q(s)), 0);
  ASSERT_EQ(sh("extract " + q(s)), 0);
  ASSERT_EQ(sh("calibrate " + q(s)), 0);
  ASSERT_EQ(sh("report " + q(s / "calibration.json")), 0);
}

const char* kSmall = R"({"seed": 7, "n_pinhole": 2, "include_double_sphere": true, "n_events": 16})";

}  // namespace

TEST(Closure, FullPipelineProducesAllArtifacts) {
  TempDir dir;
  std::ofstream(dir / "synth.json") << kSmall;
  const fs::path s = dir / "s";
  pipeline(dir / "synth.json", s);
  for (const char* f : {"sync_report.json", "extracted_frames.csv", "calibration.json", "convergence.svg"})
    EXPECT_TRUE(fs::exists(s / f)) << f;

  const json doc = json::parse(slurp(s / "calibration.json"));
  EXPECT_LT(doc["rms_px"].get<double>(), 0.5);
  EXPECT_EQ(doc["cameras"].size(), 3u);

  // Recovered focal lengths against the generator's truth.
  const json gt = json::parse(slurp(s / "ground_truth.json"));
  for (const auto& cam : doc["cameras"]) {
    const std::string id = cam.get<std::string>();
    const double fx = doc["intrinsics"][id]["params"]["fx"].get<double>();
    double truth = 0.0;
    for (const auto& g : gt["cameras"])
      if (g["id"] == id) truth = g["intrinsics"]["params"]["fx"].get<double>();
    ASSERT_GT(truth, 0.0) << id;
    EXPECT_LT(std::abs(fx - truth) / truth, 0.02) << id;
  }

  // Every frame the extractor picked is on disk.
  std::istringstream csv(slurp(s / "extracted_frames.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    const auto c = line.find(',', b + 1);
    EXPECT_TRUE(fs::exists(s / line.substr(b + 1, c - b - 1))) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 16 * 3);
}

TEST(Closure, SameSeedGivesIdenticalOutputs) {
  TempDir dir;
  std::ofstream(dir / "synth.json") << kSmall;
  pipeline(dir / "synth.json", dir / "a");
  pipeline(dir / "synth.json", dir / "b");
  for (const char* f : {"observations.csv", "sync_report.json", "extracted_frames.csv", "calibration.json",
                        "convergence.svg"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(Closure, RerunsAreIdempotent) {
  TempDir dir;
  std::ofstream(dir / "synth.json") << kSmall;
  const fs::path s = dir / "s";
  pipeline(dir / "synth.json", s);
  const std::string sync = slurp(s / "sync_report.json");
  const std::string cal = slurp(s / "calibration.json");
  ASSERT_EQ(sh("extract " + q(s)), 0);
  ASSERT_EQ(sh("calibrate " + q(s) + " --threads 2"), 0);
  EXPECT_EQ(slurp(s / "sync_report.json"), sync);
  EXPECT_EQ(slurp(s / "calibration.json"), cal);
}
