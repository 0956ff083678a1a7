#include <random>

#include <gtest/gtest.h>

#include "calcap/error.hpp"
#include "calcap/image_quality.hpp"

using namespace calcap;

namespace {

ImageBuffer gray(int w, int h, std::uint8_t v = 0) {
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.data.assign(static_cast<std::size_t>(w * h), v);
  return img;
}

void set(ImageBuffer& img, int x, int y, std::uint8_t v) { img.data[static_cast<std::size_t>(y * img.width + x)] = v; }

ImageBuffer texture(int w, int h, std::mt19937& rng) {
  ImageBuffer img = gray(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

double population_variance(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x / static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean) / static_cast<double>(v.size());
  return var;
}

// Direct convolution oracles.
double laplacian_oracle(const ImageBuffer& img) {
  std::vector<double> r;
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x)
      r.push_back(img.at(x - 1, y) + img.at(x + 1, y) + img.at(x, y - 1) + img.at(x, y + 1) - 4.0 * img.at(x, y));
  return population_variance(r);
}

double tenengrad_oracle(const ImageBuffer& img) {
  double acc = 0;
  int n = 0;
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      auto p = [&](int dx, int dy) { return static_cast<double>(img.at(x + dx, y + dy)); };
      const double gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
      const double gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
      acc += gx * gx + gy * gy;
      ++n;
    }
  }
  return acc / n;
}

}  // namespace

TEST(Grayscale, LumaRule) {
  EXPECT_EQ(to_grayscale(gray(2, 2, 7)), gray(2, 2, 7));
  ImageBuffer rgb;
  rgb.width = 3;
  rgb.height = 1;
  rgb.channels = 3;
  rgb.data = {255, 255, 255, 255, 0, 0, 0, 0, 255};
  const auto g = to_grayscale(rgb);
  ASSERT_EQ(g.channels, 1);
  EXPECT_EQ(g.data, (std::vector<std::uint8_t>{255, 76, 29}));
}

TEST(Laplacian, ConstantIsZero) { EXPECT_EQ(laplacian_variance(gray(8, 6, 200)), 0.0); }

TEST(Laplacian, CenterPixelHandConvolution) {
  ImageBuffer img = gray(5, 5);
  set(img, 2, 2, 255);
  // Interior responses: centre -1020, four neighbours +255, four corners 0.
  const std::vector<double> r = {0, 255, 0, 255, -1020, 255, 0, 255, 0};
  EXPECT_DOUBLE_EQ(laplacian_variance(img), population_variance(r));
}

TEST(Laplacian, Checkerboard) {
  ImageBuffer img = gray(9, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) set(img, x, y, (x + y) % 2 ? 255 : 0);
  std::vector<double> r;
  for (int y = 1; y < 6; ++y)
    for (int x = 1; x < 8; ++x) r.push_back((x + y) % 2 ? -4.0 * 255 : 4.0 * 255);
  EXPECT_DOUBLE_EQ(laplacian_variance(img), population_variance(r));
}

TEST(Laplacian, MatchesOracleOnRandomImages) {
  std::mt19937 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto img = texture(3 + static_cast<int>(rng() % 30), 3 + static_cast<int>(rng() % 30), rng);
    EXPECT_NEAR(laplacian_variance(img), laplacian_oracle(img), 1e-6 * (1 + laplacian_oracle(img)));
  }
}

TEST(Laplacian, TooSmall) {
  try {
    laplacian_variance(gray(2, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
  }
  EXPECT_THROW(tenengrad(gray(5, 2)), Error);
}

TEST(Tenengrad, ConstantAndStepEdge) {
  EXPECT_EQ(tenengrad(gray(6, 6, 9)), 0.0);
  ImageBuffer img = gray(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 3; x < 6; ++x) set(img, x, y, 100);
  // Columns 2 and 3 straddle the edge: Gx = 4 * 100, elsewhere 0.
  const double expected = (2.0 * 3 * 400.0 * 400.0) / (4 * 3);
  EXPECT_DOUBLE_EQ(tenengrad(img), expected);
}

TEST(Tenengrad, MatchesOracleAndNonNegative) {
  std::mt19937 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto img = texture(3 + static_cast<int>(rng() % 30), 3 + static_cast<int>(rng() % 30), rng);
    const double t = tenengrad(img);
    EXPECT_GE(t, 0.0);
    EXPECT_NEAR(t, tenengrad_oracle(img), 1e-9 * (1 + t));
  }
}

TEST(Blur, SigmaZeroCopies) {
  std::mt19937 rng(3);
  const auto img = texture(10, 10, rng);
  EXPECT_EQ(gaussian_blur(img, 0.0), img);
}

TEST(Blur, LaplacianVarianceStrictlyDecreasing) {
  std::mt19937 rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto img = texture(48, 48, rng);
    double prev = laplacian_variance(img);
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      const double v = laplacian_variance(gaussian_blur(img, sigma));
      EXPECT_LT(v, prev) << "image " << i << " sigma " << sigma;
      prev = v;
    }
  }
}

namespace {

struct MemoryStream {
  CameraStreamDescriptor stream;
  std::vector<ImageBuffer> images;

  FrameLoader loader() const {
    return [this](const FrameRecord& r) { return images.at(std::stoul(r.path)); };
  }
};

MemoryStream blurred_sequence(const ImageBuffer& base, const std::vector<double>& sigmas) {
  MemoryStream s;
  s.stream.camera_id = "c";
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    s.stream.frames.push_back({std::to_string(i), Timestamp{static_cast<std::int64_t>(i) * 66'666'667}});
    s.images.push_back(gaussian_blur(base, sigmas[i]));
  }
  s.stream.nominal_period_ns = 66'666'667;
  return s;
}

}  // namespace

TEST(Refine, RadiusZeroKeepsChosen) {
  std::mt19937 rng(5);
  const auto s = blurred_sequence(texture(20, 20, rng), {2, 0, 2});
  RefineConfig cfg;
  cfg.radius = 0;
  const auto r = refine_selection(s.stream, 2, s.loader(), cfg);
  EXPECT_EQ(r.frame_index, 2u);
  EXPECT_EQ(r.score.chosen_offset, 0);
  EXPECT_TRUE(r.score.accepted);
}

TEST(Refine, PicksSharpNeighbourAndHandlesEdges) {
  std::mt19937 rng(6);
  const auto s = blurred_sequence(texture(24, 24, rng), {1.5, 0.0, 1.0, 2.0, 3.0});
  auto r = refine_selection(s.stream, 3, s.loader());
  EXPECT_EQ(r.frame_index, 1u);
  EXPECT_EQ(r.score.chosen_offset, -2);
  EXPECT_DOUBLE_EQ(r.score.laplacian_variance, laplacian_variance(s.images[1]));
  r = refine_selection(s.stream, 0, s.loader());
  EXPECT_EQ(r.frame_index, 1u);
}

TEST(Refine, TiesGoToChosenThenEarlier) {
  std::mt19937 rng(7);
  const auto s = blurred_sequence(texture(16, 16, rng), {0.0, 0.0, 0.0, 1.0, 0.0});
  EXPECT_EQ(refine_selection(s.stream, 2, s.loader()).frame_index, 2u);
  EXPECT_EQ(refine_selection(s.stream, 3, s.loader()).frame_index, 1u);
}

TEST(Refine, AbsoluteFloorRejects) {
  const auto s = blurred_sequence(gray(10, 10, 50), {0, 0, 0});
  RefineConfig cfg;
  cfg.absolute_floor = 1.0;
  EXPECT_FALSE(refine_selection(s.stream, 1, s.loader(), cfg).score.accepted);
}

TEST(Refine, SyntheticNeighbourhoodsAlwaysPickTruth) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int sharp = static_cast<int>(rng() % 9);
    std::vector<double> sigmas(9);
    for (int i = 0; i < 9; ++i) sigmas[i] = i == sharp ? 0.0 : std::min(0.6 + 0.5 * std::abs(i - sharp), 3.0);
    const auto s = blurred_sequence(texture(32, 32, rng), sigmas);
    // Any chosen frame within the radius of the truth.
    const int chosen = std::clamp(sharp + static_cast<int>(rng() % 5) - 2, 0, 8);
    ASSERT_EQ(refine_selection(s.stream, static_cast<std::size_t>(chosen), s.loader()).frame_index,
              static_cast<std::size_t>(sharp));
  }
}
