#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace calcap {

/// Nanoseconds since the Unix epoch on the camera clock.
struct Timestamp {
  std::int64_t nanos = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

  double seconds() const { return static_cast<double>(nanos) * 1e-9; }
};

struct FrameRecord {
  std::string path;  // relative to the session directory
  Timestamp stamp;

  bool operator==(const FrameRecord&) const = default;
};

struct CameraStreamDescriptor {
  std::string camera_id;
  std::vector<FrameRecord> frames;
  std::int64_t nominal_period_ns = 0;  // median inter-frame interval
};

struct ClapAnchor {
  double audio_time_s = 0.0;
  Timestamp camera_epoch;
};

struct SessionManifest {
  std::filesystem::path root;  // directory containing manifest.json
  std::vector<CameraStreamDescriptor> cameras;
  std::filesystem::path audio_path;
  // Empty when the session ships without a transcript (spotter-only sessions).
  std::filesystem::path transcript_path;
  std::string trigger_word;
  std::vector<ClapAnchor> clap_anchors;

  const CameraStreamDescriptor* find_camera(const std::string& id) const;
};

struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;  // row-major, interleaved channels

  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const ImageBuffer&) const = default;
};

struct AudioBuffer {
  int sample_rate_hz = 16000;
  std::vector<double> samples;  // mono, [-1, 1)

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Loaders throw calcap::Error on failure.
SessionManifest load_manifest(const std::filesystem::path& path);
std::vector<FrameRecord> load_frame_index(const std::filesystem::path& path);
ImageBuffer load_pnm(const std::filesystem::path& path);
AudioBuffer load_wav(const std::filesystem::path& path);

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);
// 16-bit PCM mono; samples are scaled by 32768, rounded and clamped.
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);
void write_frame_index(const std::filesystem::path& path,
                       const std::vector<FrameRecord>& frames);

std::int64_t median_period_ns(const std::vector<FrameRecord>& frames);
void validate_image(const ImageBuffer& img);
void validate_audio(const AudioBuffer& audio);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace calcap
