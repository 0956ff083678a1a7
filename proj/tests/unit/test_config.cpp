#include <fstream>

#include <gtest/gtest.h>

#include "calcap/config.hpp"
#include "calcap/error.hpp"
#include "support.hpp"

using namespace calcap;
using nlohmann::json;

TEST(Config, DefaultsRoundTrip) {
  const PipelineConfig d;
  validate_config(d);
  const json j = config_to_json(d);
  EXPECT_EQ(config_to_json(apply_config(PipelineConfig{}, j)), j);
  EXPECT_EQ(d.max_rms_px, 0.5);
  EXPECT_EQ(d.extract.min_views, 3);
  EXPECT_EQ(d.solver.lm.initial_lambda, 1e-3);
  EXPECT_EQ(d.solver.lm.max_iterations, 200);
  EXPECT_FALSE(d.solver.huber);
}

TEST(Config, OverlaysOnlyGivenKeys) {
  const auto c = apply_config({}, json{{"solver", {{"huber", true}}}, {"models", {{"cam4", "double_sphere"}}},
                                       {"image_sizes", {{"cam4", {1280, 1024}}}}});
  EXPECT_TRUE(c.solver.huber);
  EXPECT_EQ(c.solver.huber_delta_px, 1.0);
  EXPECT_EQ(c.models.at("cam4"), CameraModel::DoubleSphere);
  EXPECT_EQ(c.image_sizes.at("cam4").width, 1280);
}

TEST(Config, UnknownKeyNamesItsPath) {
  for (const auto& [j, path] : std::vector<std::pair<json, std::string>>{
           {json{{"bogus", 1}}, "bogus"},
           {json{{"solver", {{"lamda", 1}}}}, "solver.lamda"},
           {json{{"extract", {{"min_views", "three"}}}}, "extract.min_views"},
           {json{{"models", {{"cam0", "kannala"}}}}, "models.cam0"},
       }) {
    try {
      apply_config({}, j);
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
      EXPECT_EQ(e.where(), path);
    }
  }
}

TEST(Config, ValidationRejectsBadValues) {
  EXPECT_THROW(apply_config({}, json{{"spotter", {{"threshold", -1.0}}}}), Error);
  EXPECT_THROW(apply_config({}, json{{"quality", {{"radius", -1}}}}), Error);
  EXPECT_THROW(apply_config({}, json{{"solver", {{"assumed_fov_deg", 0.0}}}}), Error);
}

TEST(Config, LoadFromFile) {
  calcap::testing::TempDir dir;
  {
    std::ofstream f(dir / "c.json");
    f << R"({"max_rms_px": 0.8})";
  }
  EXPECT_EQ(load_config(dir / "c.json").max_rms_px, 0.8);
  {
    std::ofstream f(dir / "bad.json");
    f << "{not json";
  }
  EXPECT_THROW(load_config(dir / "bad.json"), Error);
  try {
    load_config(dir / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}
