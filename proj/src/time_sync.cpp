#include "calcap/time_sync.hpp"

#include <algorithm>
#include <cmath>

#include "calcap/error.hpp"

namespace calcap {

std::string to_string(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::ToleranceExceeded: return "ToleranceExceeded";
    case RejectionReason::EmptyStream: return "EmptyStream";
  }
  return "Unknown";
}

std::string to_string(SyncStatus status) {
  switch (status) {
    case SyncStatus::Full: return "full";
    case SyncStatus::Partial: return "partial";
    case SyncStatus::Rejected: return "rejected";
  }
  return "unknown";
}

ClockMap fit_clock_map(const std::vector<ClapAnchor>& anchors, bool fix_scale) {
  if (anchors.empty()) throw Error(ErrorCode::DegenerateAnchors, "at least one clap anchor is required");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t j = i + 1; j < anchors.size(); ++j) {
      if (anchors[i].audio_time_s == anchors[j].audio_time_s) {
        throw Error(ErrorCode::DegenerateAnchors,
                    "anchors " + std::to_string(i) + " and " + std::to_string(j) + " share audio time");
      }
    }
  }

  // Work relative to the first anchor's epoch so that seconds stay small and
  // double precision is not eaten by the absolute epoch.
  const std::int64_t base = anchors.front().camera_epoch.nanos;
  const auto n = static_cast<double>(anchors.size());
  std::vector<double> x, y;
  for (const auto& a : anchors) {
    x.push_back(a.audio_time_s);
    y.push_back(static_cast<double>(a.camera_epoch.nanos - base) * 1e-9);
  }

  ClockMap map;
  double intercept = 0.0;
  if (anchors.size() == 1 || fix_scale) {
    map.scale_a = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) intercept += y[i] - x[i];
    intercept /= n;
  } else {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    map.scale_a = sxy / sxx;
    intercept = my - map.scale_a * mx;
  }
  if (!std::isfinite(map.scale_a) || std::abs(map.scale_a - 1.0) > ClockMap::kMaxDrift) {
    throw Error(ErrorCode::DriftTooLarge, "fitted scale " + std::to_string(map.scale_a) + " deviates from 1 by more than " +
                                              std::to_string(ClockMap::kMaxDrift));
  }
  map.offset = Timestamp{base + std::llround(intercept * 1e9)};

  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (map.scale_a * x[i] + intercept);
    ss += r * r;
  }
  map.residual_rms_s = std::sqrt(ss / n);
  return map;
}

Timestamp map_trigger(const ClockMap& map, double audio_time_s) {
  return Timestamp{map.offset.nanos + std::llround(map.scale_a * audio_time_s * 1e9)};
}

std::size_t nearest_frame(const std::vector<FrameRecord>& frames, Timestamp epoch) {
  auto it = std::lower_bound(frames.begin(), frames.end(), epoch,
                             [](const FrameRecord& f, Timestamp t) { return f.stamp < t; });
  if (it == frames.begin()) return 0;
  if (it == frames.end()) return frames.size() - 1;
  const auto after = static_cast<std::size_t>(it - frames.begin());
  const std::size_t before = after - 1;
  const std::int64_t d_before = epoch.nanos - frames[before].stamp.nanos;
  const std::int64_t d_after = frames[after].stamp.nanos - epoch.nanos;
  return d_after < d_before ? after : before;
}

SyncStatus classify(const std::vector<CameraResolution>& per_camera, double sync_window_ms) {
  std::size_t resolved = 0;
  std::int64_t lo = 0, hi = 0;
  for (const auto& c : per_camera) {
    if (!c.frame) continue;
    const std::int64_t s = c.frame->frame.stamp.nanos;
    if (resolved == 0) {
      lo = hi = s;
    } else {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    ++resolved;
  }
  if (resolved == 0) return SyncStatus::Rejected;
  if (resolved < per_camera.size()) return SyncStatus::Partial;
  return static_cast<double>(hi - lo) <= sync_window_ms * 1e6 ? SyncStatus::Full : SyncStatus::Partial;
}

TriggerEvent resolve_frames(const SessionManifest& session, Timestamp epoch, const SyncConfig& config) {
  TriggerEvent ev;
  ev.camera_epoch = epoch;
  for (const auto& cam : session.cameras) {
    CameraResolution res;
    res.camera_id = cam.camera_id;
    if (cam.frames.empty()) {
      res.rejection = Rejection{RejectionReason::EmptyStream, 0};
      ev.per_camera.push_back(std::move(res));
      continue;
    }
    const std::size_t idx = nearest_frame(cam.frames, epoch);
    const std::int64_t delta = cam.frames[idx].stamp.nanos - epoch.nanos;
    const double tolerance = config.tolerance_factor * static_cast<double>(cam.nominal_period_ns);
    if (static_cast<double>(std::llabs(delta)) <= tolerance) {
      res.frame = ResolvedFrame{idx, cam.frames[idx], delta};
    } else {
      res.rejection = Rejection{RejectionReason::ToleranceExceeded, delta};
    }
    ev.per_camera.push_back(std::move(res));
  }
  ev.status = classify(ev.per_camera, config.sync_window_ms);
  return ev;
}

SyncReport summarize(const std::vector<TriggerEvent>& events) {
  SyncReport r;
  r.n_triggers = events.size();
  for (const auto& ev : events) {
    switch (ev.status) {
      case SyncStatus::Full: ++r.n_fully_synchronized; break;
      case SyncStatus::Partial: ++r.n_partial; break;
      case SyncStatus::Rejected: ++r.n_rejected; break;
    }
    for (const auto& c : ev.per_camera) {
      auto& count = r.rejections_per_camera[c.camera_id];
      if (!c.resolved()) ++count;
    }
  }
  return r;
}

}  // namespace calcap
