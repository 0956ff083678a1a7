#include "calcap/audio_dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "calcap/error.hpp"

namespace calcap {

using nlohmann::json;

std::string normalize_word(std::string_view word) {
  std::string out;
  out.reserve(word.size());
  for (unsigned char c : word) {
    if (c >= 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

Transcript parse_transcript_text(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedTranscript, e.what(), "$");
  }
  if (!doc.is_object() || !doc.contains("segments")) {
    throw Error(ErrorCode::MalformedTranscript, "missing field", "$.segments");
  }
  const json& segments = doc.at("segments");
  if (!segments.is_array()) throw Error(ErrorCode::MalformedTranscript, "expected array", "$.segments");

  Transcript out;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const std::string seg_where = "$.segments[" + std::to_string(s) + "]";
    const json& seg = segments[s];
    if (!seg.is_object()) throw Error(ErrorCode::MalformedTranscript, "expected object", seg_where);
    if (!seg.contains("words")) continue;
    const json& words = seg.at("words");
    if (!words.is_array()) throw Error(ErrorCode::MalformedTranscript, "expected array", seg_where + ".words");
    for (std::size_t w = 0; w < words.size(); ++w) {
      const std::string where = seg_where + ".words[" + std::to_string(w) + "]";
      const json& entry = words[w];
      if (!entry.is_object() || !entry.contains("word") || !entry.at("word").is_string()) {
        throw Error(ErrorCode::MalformedTranscript, "word entry needs a string 'word'", where);
      }
      const bool timed = entry.contains("start") && entry.at("start").is_number() && entry.contains("end") &&
                         entry.at("end").is_number();
      WordSegment word;
      word.text = entry.at("word").get<std::string>();
      if (timed) {
        word.start_s = entry.at("start").get<double>();
        word.end_s = entry.at("end").get<double>();
      }
      if (!timed || !std::isfinite(word.start_s) || !std::isfinite(word.end_s) || word.start_s < 0.0 ||
          word.start_s > word.end_s || normalize_word(word.text).empty()) {
        ++out.dropped;
        continue;
      }
      if (entry.contains("score") && entry.at("score").is_number()) {
        word.confidence = std::clamp(entry.at("score").get<double>(), 0.0, 1.0);
      }
      out.words.push_back(std::move(word));
    }
  }
  std::stable_sort(out.words.begin(), out.words.end(),
                   [](const WordSegment& a, const WordSegment& b) { return a.start_s < b.start_s; });
  return out;
}

Transcript parse_transcript(const std::filesystem::path& path) {
  return parse_transcript_text(read_text_file(path));
}

std::vector<TriggerHit> find_triggers(const std::vector<WordSegment>& words, std::string_view trigger_word,
                                      double min_separation_s) {
  const std::string target = normalize_word(trigger_word);
  std::vector<TriggerHit> hits;
  if (target.empty()) return hits;
  for (const auto& w : words) {
    if (normalize_word(w.text) != target) continue;
    TriggerHit hit;
    hit.audio_time_s = (w.start_s + w.end_s) / 2.0;
    hit.source = TriggerSource::Transcript;
    hit.matched_text = w.text;
    hit.score = w.confidence.value_or(1.0);
    hits.push_back(std::move(hit));
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const TriggerHit& a, const TriggerHit& b) { return a.audio_time_s < b.audio_time_s; });
  std::vector<TriggerHit> merged;
  for (auto& h : hits) {
    if (!merged.empty() && h.audio_time_s - merged.back().audio_time_s < min_separation_s) continue;
    merged.push_back(std::move(h));
  }
  return merged;
}

std::vector<ClapEvent> detect_claps(const AudioBuffer& audio, const ClapConfig& config) {
  std::vector<ClapEvent> events;
  const auto n = static_cast<std::ptrdiff_t>(audio.samples.size());
  if (n == 0) return events;
  const double sr = audio.sample_rate_hz;
  const auto win = std::max<std::ptrdiff_t>(1, std::lround(config.window_s * sr));
  const auto hop = std::max<std::ptrdiff_t>(1, std::lround(config.hop_s * sr));
  const std::ptrdiff_t n_frames = n >= win ? 1 + (n - win) / hop : 1;

  std::vector<double> energy(static_cast<std::size_t>(n_frames));
  for (std::ptrdiff_t f = 0; f < n_frames; ++f) {
    const std::ptrdiff_t begin = f * hop;
    const std::ptrdiff_t end = std::min(n, begin + win);
    double acc = 0.0;
    for (std::ptrdiff_t i = begin; i < end; ++i) acc += audio.samples[i] * audio.samples[i];
    energy[f] = acc / static_cast<double>(end - begin);
  }
  std::vector<double> sorted = energy;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double median = *mid;
  const double threshold = std::max(config.abs_floor * config.abs_floor, config.ratio_k * median);
  const auto radius = static_cast<std::ptrdiff_t>(std::lround(config.peak_radius_s / config.hop_s));

  struct Candidate {
    ClapEvent event;
    double energy;
  };
  std::vector<Candidate> peaks;
  for (std::ptrdiff_t f = 0; f < n_frames; ++f) {
    if (!(energy[f] > threshold)) continue;
    bool is_max = true;
    for (std::ptrdiff_t g = std::max<std::ptrdiff_t>(0, f - radius); g <= std::min(n_frames - 1, f + radius); ++g) {
      // Earlier frames win ties so a flat plateau yields one peak.
      if (g < f ? energy[g] >= energy[f] : energy[g] > energy[f]) {
        is_max = false;
        break;
      }
    }
    if (!is_max) continue;
    const std::ptrdiff_t begin = f * hop;
    const std::ptrdiff_t end = std::min(n, begin + win);
    std::ptrdiff_t best = begin;
    for (std::ptrdiff_t i = begin; i < end; ++i) {
      if (std::abs(audio.samples[i]) > std::abs(audio.samples[best])) best = i;
    }
    ClapEvent ev;
    ev.audio_time_s = static_cast<double>(best) / sr;
    ev.peak_amplitude = std::min(1.0, std::abs(audio.samples[best]));
    ev.envelope_ratio = energy[f] / std::max(median, std::numeric_limits<double>::min());
    peaks.push_back({ev, energy[f]});
  }

  std::vector<Candidate> merged;
  for (const auto& p : peaks) {
    if (!merged.empty() && p.event.audio_time_s - merged.back().event.audio_time_s < config.min_separation_s) {
      if (p.energy > merged.back().energy) merged.back() = p;
      continue;
    }
    merged.push_back(p);
  }
  events.reserve(merged.size());
  for (const auto& m : merged) events.push_back(m.event);
  return events;
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels x (nfft/2+1) triangular weights, centers equally spaced on the mel
// scale between 0 Hz and Nyquist.
Eigen::MatrixXd mel_filterbank(int n_mels, int nfft, int sample_rate) {
  const int n_bins = nfft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  const double mel_max = hz_to_mel(nyquist);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      if (f > lo && f <= center) {
        fb(m, k) = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        fb(m, k) = (hi - f) / (hi - center);
      }
    }
  }
  return fb;
}

// Orthonormal DCT-II, first n_out rows.
Eigen::MatrixXd dct_matrix(int n_out, int n_in) {
  Eigen::MatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int i = 0; i < n_in; ++i) {
      d(k, i) = scale * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n_in));
    }
  }
  return d;
}

}  // namespace

MfccSequence mfcc(const AudioBuffer& audio, const MfccConfig& config) {
  const int sr = audio.sample_rate_hz;
  const auto win = static_cast<std::ptrdiff_t>(std::lround(config.window_s * sr));
  const auto hop = static_cast<std::ptrdiff_t>(std::lround(config.hop_s * sr));
  const auto n = static_cast<std::ptrdiff_t>(audio.samples.size());
  if (win < 2 || hop < 1 || config.n_coeffs < 1 || config.n_coeffs > config.n_mels) {
    throw Error(ErrorCode::InvalidConfig, "invalid MFCC window/hop/coefficient configuration");
  }
  if (n < win) {
    throw Error(ErrorCode::AudioTooShort, "audio has " + std::to_string(n) + " samples, window needs " +
                                              std::to_string(win));
  }
  int nfft = 1;
  while (nfft < win) nfft <<= 1;
  const std::ptrdiff_t n_frames = 1 + (n - win) / hop;

  std::vector<double> hann(static_cast<std::size_t>(win));
  for (std::ptrdiff_t i = 0; i < win; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win - 1));
  }
  const Eigen::MatrixXd fb = mel_filterbank(config.n_mels, nfft, sr);
  const Eigen::MatrixXd dct = dct_matrix(config.n_coeffs, config.n_mels);

  MfccSequence out;
  out.hop_s = static_cast<double>(hop) / sr;
  out.window_s = static_cast<double>(win) / sr;
  out.frames.resize(n_frames, config.n_coeffs);

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(nfft));
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(nfft / 2 + 1);
  for (std::ptrdiff_t f = 0; f < n_frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::ptrdiff_t i = 0; i < win; ++i) buf[i] = audio.samples[f * hop + i] * hann[i];
    fft.fwd(spec, buf);
    for (int k = 0; k <= nfft / 2; ++k) power[k] = std::norm(spec[k]) / nfft;
    Eigen::VectorXd mel = fb * power;
    for (Eigen::Index m = 0; m < mel.size(); ++m) mel[m] = std::log(std::max(mel[m], 1e-10));
    out.frames.row(f) = (dct * mel).transpose();
  }
  return out;
}

namespace {

struct DtwCell {
  double cost;
  int length;
};

// Better of two accumulated cells: lower cost, then shorter path.
const DtwCell& better(const DtwCell& a, const DtwCell& b) {
  if (a.cost != b.cost) return a.cost < b.cost ? a : b;
  return a.length <= b.length ? a : b;
}

}  // namespace

double dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index n = a.rows(), m = b.rows();
  if (n == 0 || m == 0) return n == m ? 0.0 : std::numeric_limits<double>::infinity();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Constant(n, m, inf);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = (a.row(i) - b.row(j)).norm();
      if (i == 0 && j == 0) {
        acc(i, j) = d;
        continue;
      }
      double prev = inf;
      if (i > 0) prev = std::min(prev, acc(i - 1, j));
      if (j > 0) prev = std::min(prev, acc(i, j - 1));
      if (i > 0 && j > 0) prev = std::min(prev, acc(i - 1, j - 1));
      acc(i, j) = prev + d;
    }
  }
  return acc(n - 1, m - 1);
}

std::vector<TriggerHit> spot_keyword(const MfccSequence& audio, const std::vector<SpotterTemplate>& templates,
                                     const SpotterConfig& config) {
  if (templates.empty()) throw Error(ErrorCode::TemplateTooShort, "no templates given");
  struct Candidate {
    double time_s;
    double cost;
    const std::string* label;
  };
  std::vector<Candidate> candidates;
  const double inf = std::numeric_limits<double>::infinity();

  for (const auto& tpl : templates) {
    const Eigen::MatrixXd& t = tpl.features.frames;
    const Eigen::Index m = t.rows();
    if (m < config.min_template_frames) {
      throw Error(ErrorCode::TemplateTooShort,
                  "template '" + tpl.label + "' has " + std::to_string(m) + " frames", tpl.label);
    }
    if (t.cols() != audio.frames.cols()) {
      throw Error(ErrorCode::InvalidConfig, "template coefficient count differs from audio", tpl.label);
    }
    // Per-coefficient z-normalization using the template's statistics.
    const Eigen::RowVectorXd mean = t.colwise().mean();
    Eigen::RowVectorXd stddev = ((t.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(m))
                                    .sqrt()
                                    .matrix();
    for (Eigen::Index c = 0; c < stddev.size(); ++c) stddev[c] = std::max(stddev[c], 1e-6);
    const Eigen::MatrixXd tz = (t.rowwise() - mean).array().rowwise() / stddev.array();
    const Eigen::MatrixXd sz = (audio.frames.rowwise() - mean).array().rowwise() / stddev.array();

    const Eigen::Index n = sz.rows();
    const auto min_len = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(
                                                       std::floor(static_cast<double>(m) * (1.0 - config.length_tolerance))));
    const auto max_len = static_cast<Eigen::Index>(std::ceil(static_cast<double>(m) * (1.0 + config.length_tolerance)));

    Eigen::MatrixXd dist(m, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      dist.col(j) = (tz.rowwise() - sz.row(j)).rowwise().norm();
    }

    std::vector<DtwCell> prev_row, cur_row;
    for (Eigen::Index s = 0; s + min_len <= n; ++s) {
      const Eigen::Index len = std::min(max_len, n - s);
      prev_row.assign(static_cast<std::size_t>(len), DtwCell{inf, 0});
      cur_row.assign(static_cast<std::size_t>(len), DtwCell{inf, 0});
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < len; ++j) {
          const double d = dist(i, s + j);
          if (i == 0 && j == 0) {
            cur_row[0] = {d, 1};
            continue;
          }
          DtwCell best{inf, 0};
          if (i > 0) best = better(best, prev_row[j]);
          if (j > 0) best = better(best, cur_row[j - 1]);
          if (i > 0 && j > 0) best = better(best, prev_row[j - 1]);
          cur_row[j] = {best.cost + d, best.length + 1};
        }
        std::swap(prev_row, cur_row);
      }
      // prev_row now holds the last template row; the end is open.
      double best_norm = inf;
      Eigen::Index best_len = 0;
      for (Eigen::Index j = min_len - 1; j < len; ++j) {
        const double norm = prev_row[j].cost / prev_row[j].length;
        if (norm < best_norm) {
          best_norm = norm;
          best_len = j + 1;
        }
      }
      if (best_norm < config.threshold) {
        const double first = static_cast<double>(s) * audio.hop_s + audio.window_s / 2.0;
        const double last = static_cast<double>(s + best_len - 1) * audio.hop_s + audio.window_s / 2.0;
        candidates.push_back({(first + last) / 2.0, best_norm, &tpl.label});
      }
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.cost < b.cost; });
  std::vector<TriggerHit> hits;
  for (const auto& c : candidates) {
    const bool suppressed = std::any_of(hits.begin(), hits.end(), [&](const TriggerHit& h) {
      return std::abs(h.audio_time_s - c.time_s) < config.min_separation_s;
    });
    if (suppressed) continue;
    hits.push_back({c.time_s, TriggerSource::Spotter, *c.label, c.cost});
  }
  std::sort(hits.begin(), hits.end(),
            [](const TriggerHit& a, const TriggerHit& b) { return a.audio_time_s < b.audio_time_s; });
  return hits;
}

}  // namespace calcap
