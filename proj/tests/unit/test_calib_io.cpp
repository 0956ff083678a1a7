#include <gtest/gtest.h>

#include "calcap/calib_io.hpp"
#include "calcap/error.hpp"
#include "support.hpp"

using namespace calcap;
using nlohmann::json;

TEST(Observations, HeaderOptionalAndParsed) {
  const auto a = parse_observations("camera_id,view_id,corner_id,u,v\ncam0,3,7,10.5,-2\n");
  const auto b = parse_observations("cam0, 3, 7, 10.5, -2\n\n");
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(a[0].camera_id, "cam0");
  EXPECT_EQ(a[0].view_id, 3);
  EXPECT_EQ(a[0].corner_id, 7);
  EXPECT_EQ(a[0].pixel, Point2(10.5, -2));
  EXPECT_EQ(b[0].pixel, a[0].pixel);
}

TEST(Observations, BadRowsNameTheLine) {
  for (const std::string text : {"cam0,1,2,3\n", "cam0,1,2,3,4\ncam0,x,2,3,4\n", "c,1,-1,0,0\n", "c,1,1,nan,0\n",
                                  "c,1,1,1,2,\n"}) {
    try {
      parse_observations(text, "obs.csv");
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedObservations);
      ASSERT_TRUE(e.line().has_value());
      EXPECT_EQ(e.where(), "obs.csv");
    }
  }
  try {
    parse_observations("camera_id,view_id,corner_id,u,v\nc,1,1,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(*e.line(), 2u);
  }
}

TEST(Observations, FileRoundTripIsExact) {
  calcap::testing::TempDir dir;
  std::vector<Observation> obs = {{"a", 0, 1, {0.1, 1.0 / 3.0}}, {"b", 12, 35, {1234.5678901234567, -1e-9}}};
  write_observations(dir / "o.csv", obs);
  const auto back = read_observations(dir / "o.csv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].camera_id, obs[i].camera_id);
    EXPECT_EQ(back[i].view_id, obs[i].view_id);
    EXPECT_EQ(back[i].corner_id, obs[i].corner_id);
    EXPECT_EQ(back[i].pixel, obs[i].pixel);
  }
}

TEST(Serialization, IntrinsicsAndPose) {
  const Intrinsics pin = PinholeIntrinsics{600, 601, 320, 240, -0.1, 0.01, 0.001, 1e-4, -2e-4};
  const Intrinsics ds = DoubleSphereIntrinsics{350, 351, 640, 512, -0.2, 0.59};
  const json jp = intrinsics_to_json(pin);
  EXPECT_EQ(jp["model"], "pinhole");
  EXPECT_EQ(jp["params"]["k3"], 0.001);
  EXPECT_EQ(intrinsics_to_vector(intrinsics_from_json(jp)), intrinsics_to_vector(pin));
  const json jd = intrinsics_to_json(ds);
  EXPECT_EQ(jd["model"], "double_sphere");
  EXPECT_EQ(intrinsics_to_vector(intrinsics_from_json(jd)), intrinsics_to_vector(ds));
  EXPECT_THROW(intrinsics_from_json(json{{"model", "pinhole"}, {"params", {{"fx", 1}}}}), Error);

  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 1, 0).normalized()));
  p.translation = {0.1, -0.2, 0.3};
  const json j = pose_to_json(p);
  ASSERT_EQ(j["quaternion"].size(), 4u);
  EXPECT_NEAR(j["quaternion"][0].get<double>(), p.rotation.w(), 1e-15);
  const Pose back = pose_from_json(j);
  EXPECT_LT(rotation_angle_between(back.rotation, p.rotation), 1e-15);
  EXPECT_EQ(back.translation, p.translation);
}

TEST(Serialization, ResultDocumentInvertsExtrinsics) {
  CalibrationResult r;
  r.state.intrinsics["ref"] = PinholeIntrinsics{500, 500, 320, 240};
  r.state.intrinsics["other"] = DoubleSphereIntrinsics{300, 300, 600, 500, 0.1, 0.6};
  r.state.extrinsics["ref"] = Pose::identity();
  Pose cfr;
  cfr.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.5, Eigen::Vector3d::UnitY()));
  cfr.translation = {-1, 0, 0.2};
  r.state.extrinsics["other"] = cfr;
  r.rms_px = 0.21;
  r.n_observations = 72;
  r.per_camera_rms = {{"ref", 0.2}, {"other", 0.22}};
  r.per_view_rms["ref"][0] = 0.2;
  r.trace = {{0, 10.0, 1e-3}, {1, 2.0, 1e-4}};
  r.termination = Termination::RelativeCostChange;
  const json j = result_to_json(r, {"ref", "other"});
  EXPECT_EQ(j["rms_px"], 0.21);
  EXPECT_EQ(j["n_observations"], 72);
  EXPECT_EQ(j["trace"][1]["iter"], 1);
  EXPECT_EQ(j["trace"][1]["cost"], 2.0);
  const auto doc = result_from_json(j);
  EXPECT_EQ(doc.cameras, (std::vector<std::string>{"ref", "other"}));
  const Pose rfc = doc.reference_from_camera.at("other");
  EXPECT_LT((pose_transform(rfc, pose_transform(cfr, {1, 2, 3})) - Point3(1, 2, 3)).norm(), 1e-12);
  EXPECT_EQ(doc.trace.size(), 2u);
  EXPECT_EQ(doc.per_view_rms.at("ref").at(0), 0.2);
  EXPECT_EQ(doc.termination, to_string(Termination::RelativeCostChange));
  EXPECT_THROW(result_from_json(json::array()), Error);
  json broken = j;
  broken.erase("rms_px");
  try {
    result_from_json(broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedResult);
  }
}
