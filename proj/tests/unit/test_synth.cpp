#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "calcap/error.hpp"
#include "calcap/image_quality.hpp"
#include "calcap/synth.hpp"
#include "support.hpp"

using namespace calcap;
using calcap::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_pinhole = 2;
  cfg.n_events = 6;
  return cfg;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = std::string(std::istreambuf_iterator<char>(f), {});
  }
  return out;
}

}  // namespace

TEST(Synth, SameSeedByteIdenticalTrees) {
  TempDir a, b, c;
  generate_session(small_config(), a.path());
  generate_session(small_config(), b.path());
  auto other = small_config();
  other.seed = 43;
  generate_session(other, c.path());
  const auto ta = tree(a.path());
  EXPECT_GT(ta.size(), 10u);
  EXPECT_EQ(ta, tree(b.path()));
  EXPECT_NE(ta.at("observations.csv"), tree(c.path()).at("observations.csv"));
}

TEST(Synth, NoiselessObservationsAreExactProjections) {
  auto cfg = small_config();
  cfg.pixel_noise_px = 0.0;
  const auto scene = make_scene(cfg);
  const auto obs = render_observations(scene, 0.0, 1);
  ASSERT_FALSE(obs.empty());
  std::map<std::string, const SynthCamera*> cams;
  for (const auto& c : scene.cameras) cams[c.id] = &c;
  for (const auto& o : obs) {
    const auto& cam = *cams.at(o.camera_id);
    const auto& ev = scene.events[static_cast<std::size_t>(o.view_id)];
    const Point3 p = pose_transform(cam.camera_from_reference,
                                    pose_transform(ev.board_in_reference, scene.target.points[o.corner_id]));
    EXPECT_LT((o.pixel - project(cam.intrinsics, p)).norm(), 1e-9);
  }
}

TEST(Synth, DefaultRigMirrorsTheDeskSetup) {
  const auto scene = make_scene(SynthConfig{});
  ASSERT_EQ(scene.cameras.size(), 5u);
  int ds = 0;
  for (const auto& c : scene.cameras) ds += model_of(c.intrinsics) == CameraModel::DoubleSphere;
  EXPECT_EQ(ds, 1);
  EXPECT_EQ(scene.events.size(), 50u);
  EXPECT_EQ(scene.target.points.size(), 36u);
  // Every visible corner lands inside the image and in the model's valid region.
  for (const auto& o : render_observations(scene, 0.0, 2)) {
    for (const auto& c : scene.cameras) {
      if (c.id != o.camera_id) continue;
      EXPECT_GE(o.pixel.x(), 0.0);
      EXPECT_LT(o.pixel.x(), c.size.width);
      EXPECT_GE(o.pixel.y(), 0.0);
      EXPECT_LT(o.pixel.y(), c.size.height);
    }
  }
}

TEST(Synth, GeneratedSessionLoadsAndSharpFrameWinsItsNeighbourhood) {
  TempDir dir;
  const auto summary = generate_session(small_config(), dir.path());
  EXPECT_EQ(summary.manifest.cameras.size(), 3u);
  const json gt = json::parse(read_text_file(dir / "ground_truth.json"));
  for (const auto& cam : summary.manifest.cameras) {
    for (const auto& ev : gt["events"]) {
      const auto sharp = ev["sharp_frame"].get<std::int64_t>();
      const auto score = [&](std::int64_t k) {
        return laplacian_variance(to_grayscale(load_pnm(dir.path() / cam.frames.at(static_cast<std::size_t>(k)).path)));
      };
      const double best = score(sharp);
      for (std::int64_t d : {-2, -1, 1, 2}) {
        const std::int64_t k = sharp + d;
        if (k < 0 || k >= static_cast<std::int64_t>(cam.frames.size())) continue;
        EXPECT_GT(best, score(k)) << cam.camera_id << " event " << ev["view_id"] << " offset " << d;
      }
    }
  }
}

TEST(Synth, ConfigRejectsUnknownKeyAndBadValues) {
  try {
    synth_config_from_json(json{{"n_events", 5}, {"cameras", 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_NE((std::string(e.what()) + e.where()).find("cameras"), std::string::npos);
  }
  EXPECT_THROW(synth_config_from_json(json{{"pixel_noise_px", -0.1}}), Error);
  const auto cfg = synth_config_from_json(json{{"seed", 7}});
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(synth_config_to_json(synth_config_from_json(synth_config_to_json(cfg))), synth_config_to_json(cfg));
}

TEST(Synth, VerifyRecoveryNeedsGroundTruth) {
  TempDir dir;
  try {
    verify_recovery(dir.path(), ResultDocument{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGroundTruth);
  }
}
