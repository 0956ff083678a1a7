#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "calcap/session_store.hpp"

namespace calcap {

struct WordSegment {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  std::optional<double> confidence;
};

struct Transcript {
  std::vector<WordSegment> words;  // ordered by start_s
  std::size_t dropped = 0;         // word entries without usable timestamps
};

enum class TriggerSource { Transcript, Spotter };

struct TriggerHit {
  double audio_time_s = 0.0;
  TriggerSource source = TriggerSource::Transcript;
  std::string matched_text;
  double score = 0.0;
};

struct ClapEvent {
  double audio_time_s = 0.0;
  double peak_amplitude = 0.0;
  double envelope_ratio = 0.0;  // peak frame energy / median frame energy
};

struct ClapConfig {
  double window_s = 0.010;
  double hop_s = 0.005;
  double ratio_k = 8.0;
  double abs_floor = 0.05;  // amplitude; compared against sqrt(frame energy)
  double peak_radius_s = 0.100;
  double min_separation_s = 0.5;
};

/// Row-per-frame MFCC matrix (frames x coefficients).
struct MfccSequence {
  double hop_s = 0.010;
  double window_s = 0.025;
  Eigen::MatrixXd frames;

  Eigen::Index size() const { return frames.rows(); }
};

struct MfccConfig {
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_mels = 26;
  int n_coeffs = 13;
};

struct SpotterTemplate {
  std::string label;
  MfccSequence features;
};

struct SpotterConfig {
  double threshold = 0.45;
  double min_separation_s = 1.0;
  double length_tolerance = 0.30;  // window length = template length * (1 +/- tol)
  int min_template_frames = 5;
};

/// Lowercase ASCII letters, drop every ASCII character that is not a letter
/// or digit. Bytes >= 0x80 (UTF-8 continuation of non-ASCII letters) are kept.
std::string normalize_word(std::string_view word);

Transcript parse_transcript(const std::filesystem::path& path);
Transcript parse_transcript_text(const std::string& json_text);

std::vector<TriggerHit> find_triggers(const std::vector<WordSegment>& words,
                                      std::string_view trigger_word,
                                      double min_separation_s = 1.0);

std::vector<ClapEvent> detect_claps(const AudioBuffer& audio, const ClapConfig& config = {});

MfccSequence mfcc(const AudioBuffer& audio, const MfccConfig& config = {});

/// Minimum accumulated Euclidean frame cost over all monotone alignments
/// with steps {(1,0),(0,1),(1,1)} from (0,0) to (n-1,m-1).
double dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

std::vector<TriggerHit> spot_keyword(const MfccSequence& audio,
                                     const std::vector<SpotterTemplate>& templates,
                                     const SpotterConfig& config = {});

}  // namespace calcap
