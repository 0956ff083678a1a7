#include "calcap/session_store.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "calcap/audio_dsp.hpp"
#include "calcap/error.hpp"

namespace calcap {

namespace fs = std::filesystem;
using nlohmann::json;

const CameraStreamDescriptor* SessionManifest::find_camera(const std::string& id) const {
  for (const auto& cam : cameras) {
    if (cam.camera_id == id) return &cam;
  }
  return nullptr;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write file", path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed", path.string());
}

namespace {

std::vector<std::uint8_t> read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open file", path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write file", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed", path.string());
}

// A relative path whose normalized form does not climb out of its root.
bool stays_inside(const std::string& rel) {
  if (rel.empty()) return false;
  fs::path p(rel);
  if (p.is_absolute() || p.has_root_name()) return false;
  auto norm = p.lexically_normal();
  if (norm.empty()) return false;
  return *norm.begin() != "..";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace

std::vector<FrameRecord> load_frame_index(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::vector<FrameRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos || comma == 0) {
      throw Error(ErrorCode::MalformedRow, "expected 'relative_path,stamp_ns'", path.string(), line_no);
    }
    std::string_view rel = trim(line.substr(0, comma));
    std::string_view stamp_text = trim(line.substr(comma + 1));
    std::int64_t stamp = 0;
    auto [ptr, ec] = std::from_chars(stamp_text.data(), stamp_text.data() + stamp_text.size(), stamp);
    if (ec != std::errc{} || ptr != stamp_text.data() + stamp_text.size() || rel.empty()) {
      throw Error(ErrorCode::MalformedRow, "bad stamp '" + std::string(stamp_text) + "'", path.string(), line_no);
    }
    if (!records.empty() && stamp <= records.back().stamp.nanos) {
      throw Error(ErrorCode::NonMonotonicStamp,
                  "stamp " + std::to_string(stamp) + " does not exceed previous " +
                      std::to_string(records.back().stamp.nanos),
                  path.string(), line_no);
    }
    records.push_back({std::string(rel), Timestamp{stamp}});
  }
  return records;
}

std::int64_t median_period_ns(const std::vector<FrameRecord>& frames) {
  if (frames.size() < 2) return 0;
  std::vector<std::int64_t> diffs;
  diffs.reserve(frames.size() - 1);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    diffs.push_back(frames[i].stamp.nanos - frames[i - 1].stamp.nanos);
  }
  const auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
  std::nth_element(diffs.begin(), mid, diffs.end());
  if (diffs.size() % 2 == 1) return *mid;
  const auto lower = *std::max_element(diffs.begin(), mid);
  return lower + (*mid - lower) / 2;
}

SessionManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, "manifest not found", path.string());
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedManifest, e.what(), path.string());
  }

  auto require = [&](const json& obj, const char* key, const std::string& where) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) {
      throw Error(ErrorCode::MalformedManifest, "missing field", where + "." + key);
    }
    return obj.at(key);
  };
  auto require_string = [&](const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) throw Error(ErrorCode::MalformedManifest, "expected string", where + "." + key);
    return v.get<std::string>();
  };
  auto checked_rel = [&](const std::string& rel, const std::string& where) {
    if (!stays_inside(rel)) {
      throw Error(ErrorCode::InvariantViolation, "path escapes the session directory: " + rel, where);
    }
    return rel;
  };

  SessionManifest m;
  m.root = path.parent_path();
  if (m.root.empty()) m.root = ".";

  const json& cams = require(doc, "cameras", "$");
  if (!cams.is_array() || cams.empty()) {
    throw Error(ErrorCode::MalformedManifest, "at least one camera is required", "$.cameras");
  }
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string where = "$.cameras[" + std::to_string(i) + "]";
    CameraStreamDescriptor cam;
    cam.camera_id = require_string(cams[i], "id", where);
    if (cam.camera_id.empty()) {
      throw Error(ErrorCode::InvariantViolation, "camera id must be nonempty", where + ".id");
    }
    if (m.find_camera(cam.camera_id)) {
      throw Error(ErrorCode::InvariantViolation, "duplicate camera id " + cam.camera_id, where + ".id");
    }
    const fs::path index = m.root / checked_rel(require_string(cams[i], "index", where), where + ".index");
    if (!fs::exists(index)) throw Error(ErrorCode::MissingFile, "frame index not found", index.string());
    try {
      cam.frames = load_frame_index(index);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonMonotonicStamp) {
        throw Error(ErrorCode::InvariantViolation,
                    "stamps must be strictly increasing (row " + std::to_string(e.line().value_or(0)) + ")",
                    index.string(), e.line());
      }
      throw;
    }
    if (cam.frames.size() < 2) {
      throw Error(ErrorCode::InvariantViolation, "stream needs at least two frames to define a period",
                  index.string());
    }
    for (std::size_t f = 0; f < cam.frames.size(); ++f) {
      const auto& rec = cam.frames[f];
      checked_rel(rec.path, index.string() + ":" + std::to_string(f + 1));
      if (!fs::exists(m.root / rec.path)) {
        throw Error(ErrorCode::MissingFile, "frame image not found", (m.root / rec.path).string(), f + 1);
      }
    }
    cam.nominal_period_ns = median_period_ns(cam.frames);
    if (cam.nominal_period_ns <= 0) {
      throw Error(ErrorCode::InvariantViolation, "nominal period must be positive", index.string());
    }
    m.cameras.push_back(std::move(cam));
  }

  m.audio_path = m.root / checked_rel(require_string(doc, "audio", "$"), "$.audio");
  if (!fs::exists(m.audio_path)) throw Error(ErrorCode::MissingFile, "audio not found", m.audio_path.string());

  if (doc.contains("transcript") && !doc.at("transcript").is_null()) {
    m.transcript_path = m.root / checked_rel(require_string(doc, "transcript", "$"), "$.transcript");
    if (!fs::exists(m.transcript_path)) {
      throw Error(ErrorCode::MissingFile, "transcript not found", m.transcript_path.string());
    }
  }

  m.trigger_word = require_string(doc, "trigger_word", "$");
  if (normalize_word(m.trigger_word).empty()) {
    throw Error(ErrorCode::InvariantViolation, "trigger word is empty after normalization", "$.trigger_word");
  }

  const json& anchors = require(doc, "clap_anchors", "$");
  if (!anchors.is_array() || anchors.empty()) {
    throw Error(ErrorCode::MalformedManifest, "at least one clap anchor is required", "$.clap_anchors");
  }
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const std::string where = "$.clap_anchors[" + std::to_string(i) + "]";
    const json& t = require(anchors[i], "audio_time_s", where);
    const json& e = require(anchors[i], "camera_epoch_ns", where);
    if (!t.is_number()) throw Error(ErrorCode::MalformedManifest, "expected number", where + ".audio_time_s");
    if (!e.is_number_integer()) {
      throw Error(ErrorCode::MalformedManifest, "expected integer", where + ".camera_epoch_ns");
    }
    ClapAnchor a{t.get<double>(), Timestamp{e.get<std::int64_t>()}};
    if (!std::isfinite(a.audio_time_s) || a.audio_time_s < 0.0) {
      throw Error(ErrorCode::InvariantViolation, "audio time must be finite and non-negative",
                  where + ".audio_time_s");
    }
    m.clap_anchors.push_back(a);
  }
  return m;
}

ImageBuffer load_pnm(const fs::path& path) {
  const auto bytes = read_binary(path);
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space_and_comments();
    long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000L) throw Error(ErrorCode::UnsupportedFormat, "header value too large", path.string());
      ++pos;
    }
    if (pos == start) throw Error(ErrorCode::TruncatedData, "incomplete header", path.string());
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw Error(ErrorCode::UnsupportedFormat, "not a PNM file", path.string());
  }
  int channels = 0;
  if (bytes[1] == '5') {
    channels = 1;
  } else if (bytes[1] == '6') {
    channels = 3;
  } else {
    throw Error(ErrorCode::UnsupportedFormat,
                std::string("only binary P5/P6 supported, got P") + static_cast<char>(bytes[1]), path.string());
  }
  pos = 2;
  const long width = read_int();
  const long height = read_int();
  const long maxval = read_int();
  if (width < 1 || height < 1) throw Error(ErrorCode::UnsupportedFormat, "empty image", path.string());
  if (maxval != 255) {
    throw Error(ErrorCode::UnsupportedFormat, "only maxval 255 supported, got " + std::to_string(maxval),
                path.string());
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw Error(ErrorCode::TruncatedData, "missing raster", path.string());
  }
  ++pos;

  ImageBuffer img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.channels = channels;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  if (bytes.size() - pos < n) {
    throw Error(ErrorCode::TruncatedData,
                "expected " + std::to_string(n) + " bytes, found " + std::to_string(bytes.size() - pos),
                path.string());
  }
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

void validate_image(const ImageBuffer& img) {
  if (img.width < 1 || img.height < 1 || (img.channels != 1 && img.channels != 3) ||
      img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw Error(ErrorCode::InvariantViolation, "inconsistent image buffer");
  }
}

void write_pnm(const fs::path& path, const ImageBuffer& img) {
  validate_image(img);
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.data.begin(), img.data.end());
  write_binary(path, bytes);
}

namespace {

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint16_t le16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

void validate_audio(const AudioBuffer& audio) {
  if (audio.sample_rate_hz < 8000 || audio.sample_rate_hz > 192000) {
    throw Error(ErrorCode::InvariantViolation,
                "sample rate " + std::to_string(audio.sample_rate_hz) + " outside [8000, 192000]");
  }
  for (double s : audio.samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::InvariantViolation, "non-finite sample");
  }
}

AudioBuffer load_wav(const fs::path& path) {
  const auto b = read_binary(path);
  const std::string where = path.string();
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::MalformedRiff, "missing RIFF/WAVE header", where);
  }
  bool have_fmt = false;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id(reinterpret_cast<const char*>(b.data() + pos), 4);
    const std::size_t size = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + size > b.size()) throw Error(ErrorCode::MalformedRiff, "short fmt chunk", where);
      const std::uint16_t format = le16(b, body);
      channels = le16(b, body + 2);
      rate = static_cast<int>(le32(b, body + 4));
      bits = le16(b, body + 14);
      if (format != 1) {
        throw Error(ErrorCode::UnsupportedEncoding, "format tag " + std::to_string(format) + " is not PCM", where);
      }
      if (bits != 16) {
        throw Error(ErrorCode::UnsupportedEncoding, std::to_string(bits) + "-bit samples not supported", where);
      }
      if (channels != 1 && channels != 2) {
        throw Error(ErrorCode::UnsupportedEncoding, std::to_string(channels) + " channels not supported", where);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::MalformedRiff, "data chunk before fmt chunk", where);
      if (body + size > b.size()) throw Error(ErrorCode::MalformedRiff, "data chunk truncated", where);
      const std::size_t frame_bytes = 2 * static_cast<std::size_t>(channels);
      AudioBuffer audio;
      audio.sample_rate_hz = rate;
      audio.samples.reserve(size / frame_bytes);
      for (std::size_t at = body; at + frame_bytes <= body + size; at += frame_bytes) {
        const auto left = static_cast<std::int16_t>(le16(b, at));
        if (channels == 1) {
          audio.samples.push_back(left / 32768.0);
        } else {
          const auto right = static_cast<std::int16_t>(le16(b, at + 2));
          audio.samples.push_back((static_cast<int>(left) + static_cast<int>(right)) / 2.0 / 32768.0);
        }
      }
      validate_audio(audio);
      return audio;
    }
    pos = body + size + (size & 1U);
  }
  throw Error(ErrorCode::MalformedRiff, have_fmt ? "no data chunk" : "no fmt chunk", where);
}

void write_wav(const fs::path& path, const AudioBuffer& audio) {
  validate_audio(audio);
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  std::vector<std::uint8_t> b;
  b.reserve(44 + 2 * static_cast<std::size_t>(n));
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, static_cast<std::uint32_t>(audio.sample_rate_hz));
  put32(b, static_cast<std::uint32_t>(audio.sample_rate_hz) * 2);
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, 2 * n);
  for (double s : audio.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  write_binary(path, b);
}

void write_frame_index(const fs::path& path, const std::vector<FrameRecord>& frames) {
  std::string text;
  text.reserve(frames.size() * 40);
  for (const auto& f : frames) {
    text += f.path;
    text += ',';
    text += std::to_string(f.stamp.nanos);
    text += '\n';
  }
  write_text_file(path, text);
}

}  // namespace calcap
