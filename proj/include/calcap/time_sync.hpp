#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "calcap/audio_dsp.hpp"
#include "calcap/session_store.hpp"

namespace calcap {

/// camera_epoch = scale_a * audio_time + offset.
struct ClockMap {
  double scale_a = 1.0;
  Timestamp offset;  // camera epoch at audio t = 0
  double residual_rms_s = 0.0;

  static constexpr double kMaxDrift = 0.01;
};

struct SyncConfig {
  double tolerance_factor = 1.5;
  double sync_window_ms = 50.0;
};

enum class RejectionReason { ToleranceExceeded, EmptyStream };

std::string to_string(RejectionReason reason);

struct ResolvedFrame {
  std::size_t frame_index = 0;
  FrameRecord frame;
  std::int64_t delta_ns = 0;  // frame.stamp - epoch
};

struct Rejection {
  RejectionReason reason = RejectionReason::ToleranceExceeded;
  std::int64_t nearest_delta_ns = 0;
};

struct CameraResolution {
  std::string camera_id;
  std::optional<ResolvedFrame> frame;
  std::optional<Rejection> rejection;

  bool resolved() const { return frame.has_value(); }
};

enum class SyncStatus { Full, Partial, Rejected };

std::string to_string(SyncStatus status);

struct TriggerEvent {
  double audio_time_s = 0.0;
  Timestamp camera_epoch;
  std::vector<CameraResolution> per_camera;  // manifest camera order
  SyncStatus status = SyncStatus::Rejected;
};

struct SyncReport {
  std::size_t n_triggers = 0;
  std::size_t n_fully_synchronized = 0;
  std::size_t n_partial = 0;
  std::size_t n_rejected = 0;
  std::map<std::string, std::size_t> rejections_per_camera;
};

/// Least-squares line through the anchors; with one anchor (or `fix_scale`)
/// the scale is pinned to 1 and the offset is the mean difference.
ClockMap fit_clock_map(const std::vector<ClapAnchor>& anchors, bool fix_scale = false);
Timestamp map_trigger(const ClockMap& map, double audio_time_s);
inline Timestamp map_trigger(const ClockMap& map, const TriggerHit& hit) {
  return map_trigger(map, hit.audio_time_s);
}

/// Index of the frame nearest to `epoch`; equidistant frames resolve to the
/// earlier one. `frames` must be nonempty with strictly increasing stamps.
std::size_t nearest_frame(const std::vector<FrameRecord>& frames, Timestamp epoch);

TriggerEvent resolve_frames(const SessionManifest& session, Timestamp epoch, const SyncConfig& config = {});

/// Full iff every camera is resolved and all stamps lie within the window.
SyncStatus classify(const std::vector<CameraResolution>& per_camera, double sync_window_ms);

SyncReport summarize(const std::vector<TriggerEvent>& events);

}  // namespace calcap
