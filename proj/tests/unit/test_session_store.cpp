#include <cstdint>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "calcap/error.hpp"
#include "calcap/session_store.hpp"
#include "support.hpp"

using namespace calcap;
using calcap::testing::TempDir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void write_string(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Hand-built RIFF file so the loader is not checked against our own writer.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                    const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> b;
  auto put = [&](std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  tag("RIFF");
  put(36 + data_size, 4);
  tag("WAVE");
  tag("fmt ");
  put(16, 4);
  put(format, 2);
  put(channels, 2);
  put(16000, 4);
  put(16000 * channels * bits / 8, 4);
  put(channels * bits / 8, 2);
  put(bits, 2);
  tag("data");
  put(data_size, 4);
  for (auto s : samples) put(static_cast<std::uint16_t>(s), 2);
  return b;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(FrameIndex, ParsesTwoRows) {
  TempDir dir;
  write_string(dir / "idx.csv", "img0.pgm,1000\nimg1.pgm,2000");
  const auto rows = load_frame_index(dir / "idx.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].path, "img0.pgm");
  EXPECT_EQ(rows[0].stamp.nanos, 1000);
  EXPECT_EQ(rows[1].stamp.nanos, 2000);
}

TEST(FrameIndex, DecreasingStampNamesLine) {
  TempDir dir;
  write_string(dir / "idx.csv", "a.pgm,2000\nb.pgm,1000\n");
  try {
    load_frame_index(dir / "idx.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotonicStamp);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(FrameIndex, EmptyFileIsEmptyList) {
  TempDir dir;
  write_string(dir / "idx.csv", "");
  EXPECT_TRUE(load_frame_index(dir / "idx.csv").empty());
}

TEST(FrameIndex, MalformedRowReportsLine) {
  TempDir dir;
  write_string(dir / "idx.csv", "a.pgm,1\nb.pgm,xyz\n");
  try {
    load_frame_index(dir / "idx.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(FrameIndex, EveryRowMapsToOneRecord) {
  TempDir dir;
  std::mt19937_64 rng(3);
  std::string text;
  std::int64_t stamp = -5'000'000'000LL;
  for (int i = 0; i < 500; ++i) {
    stamp += 1 + static_cast<std::int64_t>(rng() % 100'000'000);
    text += "f" + std::to_string(i) + ".pgm," + std::to_string(stamp) + "\n";
  }
  write_string(dir / "idx.csv", text);
  const auto rows = load_frame_index(dir / "idx.csv");
  ASSERT_EQ(rows.size(), 500u);
  EXPECT_EQ(rows.back().stamp.nanos, stamp);
  EXPECT_EQ(rows[17].path, "f17.pgm");
}

TEST(Pnm, P5TwoByTwo) {
  TempDir dir;
  write_bytes(dir / "a.pgm", {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 128, 64});
  const auto img = load_pnm(dir / "a.pgm");
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{0, 255, 128, 64}));
}

TEST(Pnm, P6SinglePixel) {
  TempDir dir;
  write_bytes(dir / "a.ppm", {'P', '6', ' ', '1', ' ', '1', ' ', '2', '5', '5', '\n', 10, 20, 30});
  const auto img = load_pnm(dir / "a.ppm");
  EXPECT_EQ(img.channels, 3);
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{10, 20, 30}));
}

TEST(Pnm, CommentsInHeader) {
  TempDir dir;
  const std::string header = "P5\n# made by hand\n1 1\n255\n";
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.push_back(7);
  write_bytes(dir / "a.pgm", b);
  EXPECT_EQ(load_pnm(dir / "a.pgm").data[0], 7);
}

TEST(Pnm, ShortRasterIsTruncated) {
  TempDir dir;
  write_bytes(dir / "a.pgm", {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 1, 2, 3});
  EXPECT_EQ(code_of([&] { load_pnm(dir / "a.pgm"); }), ErrorCode::TruncatedData);
}

TEST(Pnm, AsciiAndSixteenBitRejected) {
  TempDir dir;
  write_string(dir / "a.pgm", "P2\n1 1\n255\n7\n");
  EXPECT_EQ(code_of([&] { load_pnm(dir / "a.pgm"); }), ErrorCode::UnsupportedFormat);
  write_bytes(dir / "b.pgm", {'P', '5', '\n', '1', ' ', '1', '\n', '6', '5', '5', '3', '5', '\n', 0, 1});
  EXPECT_EQ(code_of([&] { load_pnm(dir / "b.pgm"); }), ErrorCode::UnsupportedFormat);
}

TEST(Pnm, RoundTripIsBitIdentical) {
  TempDir dir;
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ImageBuffer img;
    img.width = 1 + static_cast<int>(rng() % 40);
    img.height = 1 + static_cast<int>(rng() % 40);
    img.channels = trial % 2 ? 3 : 1;
    img.data.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng());
    const auto path = dir / ("r" + std::to_string(trial) + ".pnm");
    write_pnm(path, img);
    EXPECT_EQ(load_pnm(path), img);
  }
}

TEST(Wav, MonoScaling) {
  TempDir dir;
  write_bytes(dir / "a.wav", wav_bytes(1, 1, 16, {16384, -32768, 0}));
  const auto a = load_wav(dir / "a.wav");
  EXPECT_EQ(a.sample_rate_hz, 16000);
  ASSERT_EQ(a.samples.size(), 3u);
  EXPECT_EQ(a.samples[0], 0.5);
  EXPECT_EQ(a.samples[1], -1.0);
  EXPECT_EQ(a.samples[2], 0.0);
}

TEST(Wav, StereoAveragedToMono) {
  TempDir dir;
  write_bytes(dir / "a.wav", wav_bytes(1, 2, 16, {-32768, 32766}));
  const auto a = load_wav(dir / "a.wav");
  ASSERT_EQ(a.samples.size(), 1u);
  // Exact integer average (-1) then scale.
  EXPECT_DOUBLE_EQ(a.samples[0], -1.0 / 32768.0);
}

TEST(Wav, FloatEncodingRejected) {
  TempDir dir;
  write_bytes(dir / "a.wav", wav_bytes(3, 1, 16, {0, 0}));
  EXPECT_EQ(code_of([&] { load_wav(dir / "a.wav"); }), ErrorCode::UnsupportedEncoding);
}

TEST(Wav, GarbageIsMalformedRiff) {
  TempDir dir;
  write_string(dir / "a.wav", "not a wave file at all");
  EXPECT_EQ(code_of([&] { load_wav(dir / "a.wav"); }), ErrorCode::MalformedRiff);
}

TEST(Wav, MonoPcmRoundTripsExactly) {
  TempDir dir;
  std::mt19937 rng(5);
  std::vector<std::int16_t> pcm(4000);
  for (auto& s : pcm) s = static_cast<std::int16_t>(static_cast<int>(rng() % 65536) - 32768);
  write_bytes(dir / "a.wav", wav_bytes(1, 1, 16, pcm));
  const auto a = load_wav(dir / "a.wav");
  write_wav(dir / "b.wav", a);
  const auto b = load_wav(dir / "b.wav");
  ASSERT_EQ(b.samples.size(), pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) ASSERT_EQ(std::lround(b.samples[i] * 32768.0), pcm[i]);
}

namespace {

void write_session(const TempDir& dir, const std::string& cameras_json, const std::string& anchors_json) {
  write_string(dir / "index.csv", "f0.pgm,1000\nf1.pgm,2000\nf2.pgm,3000\n");
  for (int i = 0; i < 3; ++i) {
    write_bytes(dir / ("f" + std::to_string(i) + ".pgm"), {'P', '5', ' ', '1', ' ', '1', ' ', '2', '5', '5', '\n', 9});
  }
  write_bytes(dir / "audio.wav", wav_bytes(1, 1, 16, std::vector<std::int16_t>(1600, 0)));
  write_string(dir / "transcript.json", R"({"segments": []})");
  write_string(dir / "manifest.json", R"({"cameras": )" + cameras_json +
                                          R"(, "audio": "audio.wav", "transcript": "transcript.json",)"
                                          R"( "trigger_word": "Capture!", "clap_anchors": )" +
                                          anchors_json + "}");
}

}  // namespace

TEST(Manifest, FiveCameras) {
  TempDir dir;
  std::string cams = "[";
  for (int i = 0; i < 5; ++i) cams += std::string(i ? "," : "") + R"({"id": "cam)" + std::to_string(i) + R"(", "index": "index.csv"})";
  cams += "]";
  write_session(dir, cams, R"([{"audio_time_s": 1.0, "camera_epoch_ns": 1000}])");
  const auto m = load_manifest(dir / "manifest.json");
  ASSERT_EQ(m.cameras.size(), 5u);
  EXPECT_EQ(m.cameras[0].nominal_period_ns, 1000);
  EXPECT_EQ(m.clap_anchors.size(), 1u);
  EXPECT_EQ(m.trigger_word, "Capture!");
}

TEST(Manifest, ZeroCamerasRejected) {
  TempDir dir;
  write_session(dir, "[]", R"([{"audio_time_s": 1.0, "camera_epoch_ns": 1000}])");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "manifest.json"); }), ErrorCode::MalformedManifest);
}

TEST(Manifest, DecreasingIndexStampIsInvariantViolation) {
  TempDir dir;
  write_session(dir, R"([{"id": "cam0", "index": "index.csv"}])", R"([{"audio_time_s": 1.0, "camera_epoch_ns": 1000}])");
  write_string(dir / "index.csv", "f0.pgm,1000\nf1.pgm,3000\nf2.pgm,2000\n");
  try {
    load_manifest(dir / "manifest.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
  }
}

TEST(Manifest, MissingFieldNamesPath) {
  TempDir dir;
  write_session(dir, R"([{"index": "index.csv"}])", R"([{"audio_time_s": 1.0, "camera_epoch_ns": 1000}])");
  try {
    load_manifest(dir / "manifest.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedManifest);
    EXPECT_NE(e.where().find("id"), std::string::npos);
  }
}

TEST(Manifest, NoAnchorsRejected) {
  TempDir dir;
  write_session(dir, R"([{"id": "cam0", "index": "index.csv"}])", "[]");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "manifest.json"); }), ErrorCode::MalformedManifest);
}

TEST(Manifest, EscapingPathRejected) {
  TempDir dir;
  write_session(dir, R"([{"id": "cam0", "index": "../index.csv"}])",
                R"([{"audio_time_s": 1.0, "camera_epoch_ns": 1000}])");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "manifest.json"); }), ErrorCode::InvariantViolation);
}

TEST(Manifest, MissingManifestFile) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { load_manifest(dir / "manifest.json"); }), ErrorCode::MissingFile);
}

TEST(Timestamp, TotalOrderOverWideRange) {
  const Timestamp a{-9'000'000'000'000'000'000LL}, b{0}, c{9'000'000'000'000'000'000LL};
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_EQ(b, Timestamp{0});
}
