#include "calcap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "calcap/error.hpp"
#include "calcap/image_quality.hpp"
#include "calcap/time_sync.hpp"

namespace calcap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::int64_t kEpochBase = 1'700'000'000'000'000'000LL;  // camera clock at audio t = 0
constexpr int kFrameSize = 32;
constexpr double kMarkerDuration = 0.4;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gaussian(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

// Normal draw truncated to +/- 2 sigma.
double truncated_gaussian(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  while (true) {
    const double x = gaussian(rng, sigma);
    if (std::abs(x) <= 2.0 * sigma) return x;
  }
}

std::vector<Eigen::Vector3d> default_positions(int n) {
  const std::vector<Eigen::Vector3d> base = {
      {0.0, 0.0, 0.0}, {0.6, 0.0, 0.1}, {-0.6, 0.0, 0.1}, {0.0, 0.45, 0.05}, {0.3, -0.4, 0.0}};
  std::vector<Eigen::Vector3d> out;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(base.size())) {
      out.push_back(base[i]);
    } else {
      const double a = 2.0 * M_PI * i / n;
      out.emplace_back(0.7 * std::cos(a), 0.5 * std::sin(a), 0.1);
    }
  }
  return out;
}

// camera_from_reference for a camera at `pos` looking at `target`, with the
// image y axis roughly along the reference +y.
Pose look_at(const Eigen::Vector3d& pos, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - pos).normalized();
  const Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r_ref_cam;
  r_ref_cam << x, y, z;
  Pose out;
  out.rotation = Eigen::Quaterniond(r_ref_cam.transpose()).normalized();
  out.translation = -(out.rotation * pos);
  return out;
}

bool corners_visible(const SynthCamera& cam, const TargetGeometry& target, const Pose& cam_from_board) {
  constexpr double kMargin = 5.0;
  for (const auto& p : target.points) {
    const Point3 pc = cam_from_board * p;
    Point2 px;
    if (std::holds_alternative<PinholeIntrinsics>(cam.intrinsics)) {
      if (pc.z() < 0.05) return false;
      const double r2 = (pc.x() * pc.x() + pc.y() * pc.y()) / (pc.z() * pc.z());
      if (r2 > 1.0) return false;
    }
    if (!try_project(cam.intrinsics, pc, px)) return false;
    if (px.x() < kMargin || px.y() < kMargin || px.x() > cam.size.width - kMargin ||
        px.y() > cam.size.height - kMargin) {
      return false;
    }
  }
  // Reject grazing views.
  const Eigen::Vector3d center = cam_from_board * Point3((target.rows - 1) * target.spacing / 2.0,
                                                         (target.cols - 1) * target.spacing / 2.0, 0.0);
  const Eigen::Vector3d normal = cam_from_board.rotation * Eigen::Vector3d::UnitZ();
  return std::abs(normal.dot(center.normalized())) >= std::cos(75.0 * M_PI / 180.0);
}

}  // namespace

// ----------------------------------------------------------------- config

void validate_synth_config(const SynthConfig& cfg) {
  auto require = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, msg, key);
  };
  require(cfg.n_pinhole >= 0, "n_pinhole", "must be >= 0");
  require(cfg.n_pinhole + (cfg.include_double_sphere ? 1 : 0) >= 1, "n_pinhole", "need at least one camera");
  require(cfg.n_events >= 1, "n_events", "must be >= 1");
  require(cfg.rows >= 2 && cfg.cols >= 2, "rows", "target needs at least 2x2 corners");
  require(cfg.spacing_m > 0.0, "spacing_m", "must be positive");
  require(cfg.min_distance_m > 0.0 && cfg.max_distance_m >= cfg.min_distance_m, "min_distance_m",
          "need 0 < min_distance_m <= max_distance_m");
  require(cfg.max_tilt_deg >= 0.0 && cfg.max_tilt_deg < 80.0, "max_tilt_deg", "must lie in [0, 80)");
  require(cfg.pixel_noise_px >= 0.0, "pixel_noise_px", "must be >= 0");
  require(cfg.transcript_jitter_s >= 0.0, "transcript_jitter_s", "must be >= 0");
  require(cfg.fps > 0.0 && cfg.fps <= 1000.0, "fps", "must lie in (0, 1000]");
  require(cfg.audio_noise >= 0.0 && cfg.audio_noise < 0.1, "audio_noise", "must lie in [0, 0.1)");
  require(cfg.audio_rate_hz >= 8000 && cfg.audio_rate_hz <= 192000, "audio_rate_hz", "must lie in [8000, 192000]");
  require(std::abs(cfg.audio_scale - 1.0) <= ClockMap::kMaxDrift, "audio_scale", "drift above 1%");
  require(cfg.event_spacing_s >= 1.5, "event_spacing_s", "must be >= 1.5 s");
  require(cfg.max_phase_ms >= 0.0 && cfg.max_phase_ms * 1e-3 < 0.25 / cfg.fps, "max_phase_ms",
          "must be below a quarter frame period");
  require(!normalize_word(cfg.trigger_word).empty(), "trigger_word", "must be nonempty after normalization");
  require(cfg.frame_drop_probability >= 0.0 && cfg.frame_drop_probability <= 1.0, "frame_drop_probability",
          "must lie in [0, 1]");
  const int n = cfg.n_pinhole + (cfg.include_double_sphere ? 1 : 0);
  require(cfg.camera_positions.empty() || static_cast<int>(cfg.camera_positions.size()) == n, "camera_positions",
          "needs one position per camera");
  for (const auto& g : cfg.visibility_groups) {
    require(!g.empty(), "visibility_groups", "groups must be nonempty");
    for (const auto& id : g) {
      bool known = false;
      for (int i = 0; i < n; ++i) known = known || id == "cam" + std::to_string(i);
      require(known, "visibility_groups", "unknown camera '" + id + "'");
    }
  }
}

SynthConfig synth_config_from_json(const json& j, const SynthConfig& base) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "synth config must be a JSON object");
  SynthConfig cfg = base;
  for (const auto& [key, v] : j.items()) {
    auto num = [&](double& out) {
      if (!v.is_number()) throw Error(ErrorCode::InvalidConfig, "expected a number", key);
      out = v.get<double>();
    };
    auto integer = [&](int& out) {
      if (!v.is_number_integer()) throw Error(ErrorCode::InvalidConfig, "expected an integer", key);
      out = v.get<int>();
    };
    auto boolean = [&](bool& out) {
      if (!v.is_boolean()) throw Error(ErrorCode::InvalidConfig, "expected a boolean", key);
      out = v.get<bool>();
    };
    if (key == "seed") {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw Error(ErrorCode::InvalidConfig, "expected a non-negative integer", key);
      cfg.seed = v.get<std::uint64_t>();
    } else if (key == "n_pinhole") {
      integer(cfg.n_pinhole);
    } else if (key == "include_double_sphere") {
      boolean(cfg.include_double_sphere);
    } else if (key == "n_events") {
      integer(cfg.n_events);
    } else if (key == "rows") {
      integer(cfg.rows);
    } else if (key == "cols") {
      integer(cfg.cols);
    } else if (key == "spacing_m") {
      num(cfg.spacing_m);
    } else if (key == "min_distance_m") {
      num(cfg.min_distance_m);
    } else if (key == "max_distance_m") {
      num(cfg.max_distance_m);
    } else if (key == "max_tilt_deg") {
      num(cfg.max_tilt_deg);
    } else if (key == "pixel_noise_px") {
      num(cfg.pixel_noise_px);
    } else if (key == "transcript_jitter_s") {
      num(cfg.transcript_jitter_s);
    } else if (key == "fps") {
      num(cfg.fps);
    } else if (key == "audio_rate_hz") {
      integer(cfg.audio_rate_hz);
    } else if (key == "audio_noise") {
      num(cfg.audio_noise);
    } else if (key == "audio_scale") {
      num(cfg.audio_scale);
    } else if (key == "event_spacing_s") {
      num(cfg.event_spacing_s);
    } else if (key == "max_phase_ms") {
      num(cfg.max_phase_ms);
    } else if (key == "write_transcript") {
      boolean(cfg.write_transcript);
    } else if (key == "trigger_word") {
      if (!v.is_string()) throw Error(ErrorCode::InvalidConfig, "expected a string", key);
      cfg.trigger_word = v.get<std::string>();
    } else if (key == "frame_drop_probability") {
      num(cfg.frame_drop_probability);
    } else if (key == "visibility_groups") {
      if (!v.is_array()) throw Error(ErrorCode::InvalidConfig, "expected an array of camera-id arrays", key);
      cfg.visibility_groups.clear();
      for (const auto& g : v) {
        if (!g.is_array()) throw Error(ErrorCode::InvalidConfig, "expected an array of camera-id arrays", key);
        std::vector<std::string> group;
        for (const auto& id : g) {
          if (!id.is_string()) throw Error(ErrorCode::InvalidConfig, "camera ids must be strings", key);
          group.push_back(id.get<std::string>());
        }
        cfg.visibility_groups.push_back(group);
      }
    } else if (key == "camera_positions") {
      if (!v.is_array()) throw Error(ErrorCode::InvalidConfig, "expected an array of [x, y, z]", key);
      cfg.camera_positions.clear();
      for (const auto& p : v) {
        if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number()) {
          throw Error(ErrorCode::InvalidConfig, "expected an array of [x, y, z]", key);
        }
        cfg.camera_positions.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
      }
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown configuration key", key);
    }
  }
  validate_synth_config(cfg);
  return cfg;
}

json synth_config_to_json(const SynthConfig& cfg) {
  json j = {{"seed", cfg.seed},
            {"n_pinhole", cfg.n_pinhole},
            {"include_double_sphere", cfg.include_double_sphere},
            {"n_events", cfg.n_events},
            {"rows", cfg.rows},
            {"cols", cfg.cols},
            {"spacing_m", cfg.spacing_m},
            {"min_distance_m", cfg.min_distance_m},
            {"max_distance_m", cfg.max_distance_m},
            {"max_tilt_deg", cfg.max_tilt_deg},
            {"pixel_noise_px", cfg.pixel_noise_px},
            {"transcript_jitter_s", cfg.transcript_jitter_s},
            {"fps", cfg.fps},
            {"audio_rate_hz", cfg.audio_rate_hz},
            {"audio_noise", cfg.audio_noise},
            {"audio_scale", cfg.audio_scale},
            {"event_spacing_s", cfg.event_spacing_s},
            {"max_phase_ms", cfg.max_phase_ms},
            {"write_transcript", cfg.write_transcript},
            {"trigger_word", cfg.trigger_word},
            {"frame_drop_probability", cfg.frame_drop_probability},
            {"visibility_groups", cfg.visibility_groups}};
  json pos = json::array();
  for (const auto& p : cfg.camera_positions) pos.push_back({p.x(), p.y(), p.z()});
  j["camera_positions"] = pos;
  return j;
}

// ------------------------------------------------------------------ scene

SynthScene make_scene(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  std::mt19937_64 rng(cfg.seed);
  SynthScene scene;
  scene.target = TargetGeometry::grid(cfg.rows, cfg.cols, cfg.spacing_m);

  const int n = cfg.n_pinhole + (cfg.include_double_sphere ? 1 : 0);
  const auto positions = cfg.camera_positions.empty() ? default_positions(n) : cfg.camera_positions;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : positions) centroid += p;
  centroid /= n;
  const Eigen::Vector3d look_target = centroid + Eigen::Vector3d(0.0, 0.0, 2.5);
  const Pose cam0_from_world = look_at(positions[0], look_target);

  for (int i = 0; i < n; ++i) {
    SynthCamera cam;
    cam.id = "cam" + std::to_string(i);
    const bool ds = cfg.include_double_sphere && i == n - 1;
    if (ds) {
      DoubleSphereIntrinsics k;
      k.fx = 350.0 + uniform(rng, -10.0, 10.0);
      k.fy = k.fx * (1.0 + uniform(rng, -0.003, 0.003));
      k.cx = 640.0 + uniform(rng, -8.0, 8.0);
      k.cy = 512.0 + uniform(rng, -8.0, 8.0);
      k.xi = -0.2;
      k.alpha = 0.59;
      cam.intrinsics = k;
      cam.size = {1280, 1024};
    } else {
      PinholeIntrinsics k;
      k.fx = 600.0 + uniform(rng, -30.0, 30.0);
      k.fy = k.fx * (1.0 + uniform(rng, -0.005, 0.005));
      k.cx = 320.0 + uniform(rng, -10.0, 10.0);
      k.cy = 240.0 + uniform(rng, -8.0, 8.0);
      k.k1 = -0.12 + uniform(rng, -0.02, 0.02);
      k.k2 = 0.05 + uniform(rng, -0.01, 0.01);
      k.k3 = -0.01 + uniform(rng, -0.005, 0.005);
      k.p1 = uniform(rng, -1e-3, 1e-3);
      k.p2 = uniform(rng, -1e-3, 1e-3);
      cam.intrinsics = k;
      cam.size = {640, 480};
    }
    // Extrinsics relative to camera 0's frame.
    cam.camera_from_reference =
        i == 0 ? Pose::identity() : pose_compose(look_at(positions[i], look_target), pose_inverse(cam0_from_world));
    cam.phase_ns = i == 0 ? 0 : std::llround(uniform(rng, -cfg.max_phase_ms, cfg.max_phase_ms) * 1e6);
    scene.cameras.push_back(cam);
  }

  const double tilt_max = cfg.max_tilt_deg * M_PI / 180.0;
  const Point3 board_center((cfg.rows - 1) * cfg.spacing_m / 2.0, (cfg.cols - 1) * cfg.spacing_m / 2.0, 0.0);
  for (int e = 0; e < cfg.n_events; ++e) {
    std::vector<std::string> allowed;
    if (cfg.visibility_groups.empty()) {
      for (const auto& c : scene.cameras) allowed.push_back(c.id);
    } else {
      allowed = cfg.visibility_groups[e % cfg.visibility_groups.size()];
    }
    // Focus cameras rotate so that every camera gets views.
    const std::string focus_id =
        cfg.visibility_groups.empty()
            ? scene.cameras[e % n].id
            : allowed[(e / cfg.visibility_groups.size()) % allowed.size()];
    const SynthCamera* focus = nullptr;
    for (const auto& c : scene.cameras) {
      if (c.id == focus_id) focus = &c;
    }

    SynthEvent ev;
    ev.view_id = e;
    bool found = false;
    for (int attempt = 0; attempt < 5000 && !found; ++attempt) {
      const Point2 px(uniform(rng, 0.0, 1.0) * focus->size.width, uniform(rng, 0.0, 1.0) * focus->size.height);
      Point3 dir;
      try {
        dir = unproject(focus->intrinsics, px);
      } catch (const Error&) {
        continue;
      }
      if (dir.z() < 0.2) continue;
      const double dist = uniform(rng, cfg.min_distance_m, cfg.max_distance_m);
      const Eigen::Vector3d zb = dir.normalized();
      const Eigen::Vector3d xb = Eigen::Vector3d::UnitY().cross(zb).normalized();
      const Eigen::Vector3d yb = zb.cross(xb);
      Eigen::Matrix3d r0;
      r0 << xb, yb, zb;
      const double psi = uniform(rng, -M_PI, M_PI);
      const double phi = uniform(rng, -M_PI, M_PI);
      const double tilt = uniform(rng, 0.0, tilt_max);
      const Eigen::Vector3d axis = std::cos(phi) * xb + std::sin(phi) * yb;
      const Eigen::Matrix3d r = Eigen::AngleAxisd(tilt, axis).toRotationMatrix() * r0 *
                                Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
      Pose focus_from_board;
      focus_from_board.rotation = Eigen::Quaterniond(r).normalized();
      focus_from_board.translation = zb * dist - r * board_center;
      if (!corners_visible(*focus, scene.target, focus_from_board)) continue;
      ev.board_in_reference = pose_compose(pose_inverse(focus->camera_from_reference), focus_from_board);
      found = true;
    }
    if (!found) {
      throw Error(ErrorCode::InvalidConfig, "could not place a visible board for camera " + focus_id);
    }
    for (const auto& c : scene.cameras) {
      if (std::find(allowed.begin(), allowed.end(), c.id) == allowed.end()) continue;
      if (corners_visible(c, scene.target, pose_compose(c.camera_from_reference, ev.board_in_reference))) {
        ev.visible.push_back(c.id);
      }
    }
    for (const auto& c : scene.cameras) {
      if (&c == &scene.cameras.front()) continue;
      if (cfg.frame_drop_probability > 0.0 && uniform(rng, 0.0, 1.0) < cfg.frame_drop_probability) {
        ev.dropped.push_back(c.id);
      }
    }
    scene.events.push_back(ev);
  }
  return scene;
}

std::vector<Observation> render_observations(const SynthScene& scene, double noise_px, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Observation> out;
  for (const auto& ev : scene.events) {
    for (const auto& cam : scene.cameras) {
      if (std::find(ev.visible.begin(), ev.visible.end(), cam.id) == ev.visible.end()) continue;
      if (std::find(ev.dropped.begin(), ev.dropped.end(), cam.id) != ev.dropped.end()) continue;
      const Pose cam_from_board = pose_compose(cam.camera_from_reference, ev.board_in_reference);
      for (std::size_t k = 0; k < scene.target.points.size(); ++k) {
        Observation obs;
        obs.camera_id = cam.id;
        obs.view_id = ev.view_id;
        obs.corner_id = static_cast<int>(k);
        obs.pixel = project(cam.intrinsics, cam_from_board * scene.target.points[k]);
        const double du = gaussian(rng, noise_px);
        const double dv = gaussian(rng, noise_px);
        obs.pixel += Point2(du, dv);
        out.push_back(obs);
      }
    }
  }
  return out;
}

CalibrationProblem scene_problem(const SynthScene& scene, std::vector<Observation> observations) {
  CalibrationProblem p;
  p.target = scene.target;
  p.observations = std::move(observations);
  for (const auto& c : scene.cameras) {
    p.cameras.push_back(c.id);
    p.models[c.id] = model_of(c.intrinsics);
    p.image_sizes[c.id] = c.size;
  }
  return p;
}

CalibrationState scene_state(const SynthScene& scene) {
  CalibrationState s;
  for (const auto& c : scene.cameras) {
    s.intrinsics[c.id] = c.intrinsics;
    s.extrinsics[c.id] = c.camera_from_reference;
  }
  for (const auto& ev : scene.events) s.board_poses[ev.view_id] = ev.board_in_reference;
  return s;
}

// ------------------------------------------------------------------ audio

std::vector<double> keyword_marker(int sample_rate_hz, double duration_s, double pitch) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  std::vector<double> out(n, 0.0);
  const double nyquist = 0.5 * sample_rate_hz;
  std::vector<double> phase(64, 0.0);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n);  // 0..1 through the marker
    const double f0 = pitch * (140.0 + 80.0 * u);
    const double formant = 600.0 + 1400.0 * u;
    const double formant2 = 2400.0 - 600.0 * u;
    double s = 0.0;
    for (int h = 1; h <= 64; ++h) {
      const double f = h * f0;
      if (f >= 0.9 * nyquist) break;
      phase[h - 1] += 2.0 * M_PI * f / sample_rate_hz;
      const double amp = (0.15 + std::exp(-std::pow((f - formant) / 350.0, 2.0)) +
                          0.6 * std::exp(-std::pow((f - formant2) / 300.0, 2.0))) /
                         std::sqrt(static_cast<double>(h));
      s += amp * std::sin(phase[h - 1]);
    }
    // 30 ms raised-cosine attack and release.
    const double t = static_cast<double>(i) / sample_rate_hz;
    const double edge = 0.03;
    double env = 1.0;
    if (t < edge) env = 0.5 - 0.5 * std::cos(M_PI * t / edge);
    if (duration_s - t < edge) env = 0.5 - 0.5 * std::cos(M_PI * (duration_s - t) / edge);
    out[i] = s * env;
    peak = std::max(peak, std::abs(out[i]));
  }
  if (peak > 0.0) {
    for (double& v : out) v /= peak;
  }
  return out;
}

// --------------------------------------------------------------- session

namespace {

std::string frame_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.pgm", k);
  return buf;
}

}  // namespace

SessionSummary generate_session(const SynthConfig& cfg, const fs::path& out_dir) {
  validate_synth_config(cfg);
  std::error_code ec;
  if (fs::exists(out_dir)) {
    if (!fs::is_directory(out_dir)) throw Error(ErrorCode::IoFailure, "output path is not a directory", out_dir.string());
    if (!fs::is_empty(out_dir) && !fs::exists(out_dir / "manifest.json")) {
      throw Error(ErrorCode::IoFailure, "refusing to overwrite a non-session directory", out_dir.string());
    }
    fs::remove_all(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, ec.message(), out_dir.string());
  }
  fs::create_directories(out_dir / "templates", ec);
  if (ec) throw Error(ErrorCode::IoFailure, ec.message(), out_dir.string());

  const SynthScene scene = make_scene(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  const double a = cfg.audio_scale;
  const std::int64_t period = std::llround(1e9 / cfg.fps);

  // Event instants sit on camera-0 frame stamps.
  std::vector<std::int64_t> event_frame;
  std::vector<double> event_time;
  for (int e = 0; e < cfg.n_events; ++e) {
    const double desired = 3.0 + e * cfg.event_spacing_s + uniform(rng, -0.1, 0.1) * cfg.event_spacing_s;
    const std::int64_t k = std::llround(a * desired * 1e9 / static_cast<double>(period));
    event_frame.push_back(k);
    event_time.push_back(static_cast<double>(k * period) / (a * 1e9));
  }
  const double duration = event_time.back() + 3.0;
  const int rate = cfg.audio_rate_hz;
  const auto n_samples = static_cast<std::size_t>(std::ceil(duration * rate));

  // Audio: background noise, two claps, and a keyword marker per event.
  AudioBuffer audio;
  audio.sample_rate_hz = rate;
  audio.samples.resize(n_samples);
  for (auto& s : audio.samples) s = gaussian(rng, cfg.audio_noise);
  std::vector<double> clap_times;
  for (double t : {1.0, duration - 1.0}) {
    const auto n0 = static_cast<std::size_t>(std::llround(t * rate));
    clap_times.push_back(static_cast<double>(n0) / rate);
    audio.samples[n0] = 0.9;
    const double decay = 0.004 * rate;
    for (std::size_t i = 1; i < static_cast<std::size_t>(0.03 * rate) && n0 + i < n_samples; ++i) {
      const double v = 0.6 * std::exp(-static_cast<double>(i) / decay) * gaussian(rng, 1.0);
      audio.samples[n0 + i] = std::clamp(v, -0.85, 0.85);
    }
  }
  // Each event carries the keyword template itself (recorded over its own
  // background noise), centred on the event time.
  const auto marker = keyword_marker(rate, kMarkerDuration, 1.0);
  for (double t : event_time) {
    const auto n0 = static_cast<std::size_t>(std::llround((t - kMarkerDuration / 2.0) * rate));
    for (std::size_t i = 0; i < marker.size() && n0 + i < n_samples; ++i) audio.samples[n0 + i] += 0.1 * marker[i];
  }
  write_wav(out_dir / "audio.wav", audio);
  AudioBuffer tmpl;
  tmpl.sample_rate_hz = rate;
  tmpl.samples = marker;
  // Recorded over the same background noise as the session.
  std::mt19937_64 tmpl_rng(cfg.seed ^ 0x2545f491ULL);
  for (double& v : tmpl.samples) v = 0.1 * v + gaussian(tmpl_rng, cfg.audio_noise);
  write_wav(out_dir / "templates" / (normalize_word(cfg.trigger_word) + ".wav"), tmpl);

  // Transcript: the trigger word at every event with jittered endpoints, plus
  // filler and near-miss words.
  if (cfg.write_transcript) {
    static const char* const kFillers[] = {"okay", "next", "please", "hold", "still", "good"};
    static const char* const kNearMiss[] = {"captured", "recapture", "capturing"};
    json segments = json::array();
    for (int e = 0; e < cfg.n_events; ++e) {
      json words = json::array();
      const double t = event_time[e];
      if (uniform(rng, 0.0, 1.0) < 0.5) {
        const double s = t - 0.9 + uniform(rng, 0.0, 0.1);
        words.push_back({{"word", kFillers[rng() % 6]}, {"start", s}, {"end", s + 0.3}, {"score", uniform(rng, 0.6, 1.0)}});
      }
      const double start = t - 0.2 + truncated_gaussian(rng, cfg.transcript_jitter_s);
      const double end = t + 0.2 + truncated_gaussian(rng, cfg.transcript_jitter_s);
      words.push_back({{"word", cfg.trigger_word}, {"start", start}, {"end", end}, {"score", uniform(rng, 0.7, 1.0)}});
      if (uniform(rng, 0.0, 1.0) < 0.3) {
        const double s = t + 0.9 + uniform(rng, 0.0, 0.3);
        words.push_back({{"word", kNearMiss[rng() % 3]}, {"start", s}, {"end", s + 0.4}, {"score", uniform(rng, 0.5, 1.0)}});
      }
      segments.push_back({{"start", words.front()["start"]}, {"end", words.back()["end"]}, {"words", words}});
    }
    write_text_file(out_dir / "transcript.json", json({{"segments", segments}}).dump(2) + "\n");
  }

  // Frames: continuous streams; sharp at the event frame, blurred elsewhere
  // with sigma growing with the distance to the nearest event.
  const auto n_frames = static_cast<std::int64_t>(std::floor(a * duration * 1e9 / static_cast<double>(period))) + 1;
  json cams = json::array();
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const SynthCamera& cam = scene.cameras[c];
    fs::create_directories(out_dir / cam.id, ec);
    if (ec) throw Error(ErrorCode::IoFailure, ec.message(), (out_dir / cam.id).string());
    std::vector<ImageBuffer> textures;
    for (int e = 0; e < cfg.n_events; ++e) {
      ImageBuffer img;
      img.width = img.height = kFrameSize;
      img.channels = 1;
      img.data.resize(kFrameSize * kFrameSize);
      for (auto& px : img.data) px = static_cast<std::uint8_t>(rng() % 256);
      textures.push_back(std::move(img));
    }
    std::vector<FrameRecord> index;
    std::size_t next_event = 0;
    for (std::int64_t k = 0; k < n_frames; ++k) {
      const std::int64_t stamp = kEpochBase + cam.phase_ns + k * period;
      while (next_event + 1 < event_frame.size() &&
             std::abs(event_frame[next_event + 1] - k) < std::abs(event_frame[next_event] - k)) {
        ++next_event;
      }
      const int e = static_cast<int>(next_event);
      const auto& dropped = scene.events[e].dropped;
      if (std::find(dropped.begin(), dropped.end(), cam.id) != dropped.end() &&
          std::abs(stamp - (kEpochBase + event_frame[e] * period)) <= 300'000'000) {
        continue;
      }
      const std::int64_t d = std::abs(event_frame[e] - k);
      const double sigma = d == 0 ? 0.0 : std::min(0.6 + 0.5 * static_cast<double>(d), 3.0);
      const std::string rel = cam.id + "/" + frame_name(static_cast<int>(k));
      write_pnm(out_dir / rel, gaussian_blur(textures[e], sigma));
      index.push_back({rel, Timestamp{stamp}});
    }
    write_frame_index(out_dir / cam.id / "index.csv", index);
    cams.push_back({{"id", cam.id}, {"index", cam.id + "/index.csv"}});
  }

  const auto observations = render_observations(scene, cfg.pixel_noise_px, cfg.seed);
  write_observations(out_dir / "observations.csv", observations);

  json anchors = json::array();
  for (double t : clap_times) {
    anchors.push_back({{"audio_time_s", t}, {"camera_epoch_ns", kEpochBase + std::llround(a * t * 1e9)}});
  }
  json manifest = {{"cameras", cams},
                   {"audio", "audio.wav"},
                   {"transcript", cfg.write_transcript ? json("transcript.json") : json(nullptr)},
                   {"trigger_word", cfg.trigger_word},
                   {"clap_anchors", anchors}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  json pipeline = {{"target", {{"rows", cfg.rows}, {"cols", cfg.cols}, {"spacing_m", cfg.spacing_m}}}};
  json models = json::object(), sizes = json::object();
  for (const auto& cam : scene.cameras) {
    models[cam.id] = to_string(model_of(cam.intrinsics));
    sizes[cam.id] = {cam.size.width, cam.size.height};
  }
  pipeline["models"] = models;
  pipeline["image_sizes"] = sizes;
  write_text_file(out_dir / "pipeline.json", pipeline.dump(2) + "\n");

  json gt;
  gt["seed"] = cfg.seed;
  gt["config"] = synth_config_to_json(cfg);
  gt["clock"] = {{"scale_a", a}, {"offset_ns", kEpochBase}};
  gt["frame_period_ns"] = period;
  gt["claps_audio_s"] = clap_times;
  gt["target"] = {{"rows", cfg.rows}, {"cols", cfg.cols}, {"spacing_m", cfg.spacing_m}};
  json gcams = json::array();
  for (const auto& cam : scene.cameras) {
    gcams.push_back({{"id", cam.id},
                     {"intrinsics", intrinsics_to_json(cam.intrinsics)},
                     {"reference_from_camera", pose_to_json(pose_inverse(cam.camera_from_reference))},
                     {"image_size", {cam.size.width, cam.size.height}},
                     {"phase_ns", cam.phase_ns}});
  }
  gt["cameras"] = gcams;
  json gevents = json::array();
  for (int e = 0; e < cfg.n_events; ++e) {
    const auto& ev = scene.events[e];
    gevents.push_back({{"view_id", ev.view_id},
                       {"audio_time_s", event_time[e]},
                       {"camera_epoch_ns", kEpochBase + event_frame[e] * period},
                       {"sharp_frame", event_frame[e]},
                       {"board_in_reference", pose_to_json(ev.board_in_reference)},
                       {"visible", ev.visible},
                       {"dropped", ev.dropped}});
  }
  gt["events"] = gevents;
  write_text_file(out_dir / "ground_truth.json", gt.dump(2) + "\n");

  SessionSummary summary;
  summary.manifest = load_manifest(out_dir / "manifest.json");
  summary.n_observations = observations.size();
  return summary;
}

// ---------------------------------------------------------------- verify

RecoveryReport verify_recovery(const fs::path& session_dir, const ResultDocument& result, const json* sync_report) {
  const fs::path gt_path = session_dir / "ground_truth.json";
  if (!fs::exists(gt_path)) throw Error(ErrorCode::MissingGroundTruth, "no ground truth sidecar", gt_path.string());
  json gt;
  try {
    gt = json::parse(read_text_file(gt_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingGroundTruth, e.what(), gt_path.string());
  }
  RecoveryReport report;
  try {
    std::map<std::string, Pose> truth_ref_from_cam;
    for (const auto& c : gt.at("cameras")) {
      truth_ref_from_cam[c.at("id").get<std::string>()] = pose_from_json(c.at("reference_from_camera"));
    }
    // Align reference frames: express both sets relative to the result's
    // first camera.
    const std::string ref = result.cameras.empty() ? std::string() : result.cameras.front();
    const bool have_ref = truth_ref_from_cam.count(ref) && result.reference_from_camera.count(ref);
    for (const auto& c : gt.at("cameras")) {
      RecoveryReport::CameraErrors err;
      err.id = c.at("id").get<std::string>();
      const Intrinsics truth = intrinsics_from_json(c.at("intrinsics"));
      err.model = model_of(truth);
      const auto it = result.intrinsics.find(err.id);
      if (it == result.intrinsics.end() || model_of(it->second) != err.model) {
        err.max_focal_rel = err.max_intrinsic_rel = std::numeric_limits<double>::infinity();
        report.max_focal_rel = std::numeric_limits<double>::infinity();
        report.cameras.push_back(err);
        continue;
      }
      const auto tv = intrinsics_to_vector(truth);
      const auto ev = intrinsics_to_vector(it->second);
      auto rel = [&](std::size_t i) { return std::abs(ev[i] - tv[i]) / std::max(std::abs(tv[i]), 1e-12); };
      err.max_focal_rel = std::max(rel(0), rel(1));
      err.max_intrinsic_rel = std::max({rel(0), rel(1), rel(2), rel(3)});
      if (err.model == CameraModel::DoubleSphere) {
        err.max_intrinsic_rel = std::max({err.max_intrinsic_rel, rel(4), rel(5)});
      } else {
        for (std::size_t i = 4; i < tv.size(); ++i) {
          err.max_distortion_abs = std::max(err.max_distortion_abs, std::abs(ev[i] - tv[i]));
        }
      }
      report.max_focal_rel = std::max(report.max_focal_rel, err.max_focal_rel);
      const auto est = result.reference_from_camera.find(err.id);
      if (have_ref && est != result.reference_from_camera.end()) {
        const Pose truth_rel = pose_compose(pose_inverse(truth_ref_from_cam.at(ref)), truth_ref_from_cam.at(err.id));
        const Pose est_rel =
            pose_compose(pose_inverse(result.reference_from_camera.at(ref)), result.reference_from_camera.at(err.id));
        err.rotation_err_deg = rotation_angle_between(truth_rel.rotation, est_rel.rotation) * 180.0 / M_PI;
        err.translation_err_m = (truth_rel.translation - est_rel.translation).norm();
        err.baseline_m = truth_rel.translation.norm();
      }
      report.cameras.push_back(err);
    }

    if (sync_report) {
      const auto& events = gt.at("events");
      const auto& triggers = sync_report->at("triggers");
      report.n_events_truth = events.size();
      report.n_triggers = triggers.size();
      const std::size_t n = std::min(events.size(), triggers.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto truth_epoch = events[i].at("camera_epoch_ns").get<std::int64_t>();
        const auto est_epoch = triggers[i].at("camera_epoch_ns").get<std::int64_t>();
        report.max_trigger_error_ms =
            std::max(report.max_trigger_error_ms, std::abs(static_cast<double>(est_epoch - truth_epoch)) * 1e-6);
        const auto sharp = events[i].at("sharp_frame").get<std::int64_t>();
        for (const auto& [cam, res] : triggers[i].at("cameras").items()) {
          if (!res.at("resolved").get<bool>()) continue;
          ++report.n_resolved_frames;
          // Frame files are named by their stream index.
          const std::string path = res.at("path").get<std::string>();
          if (path.find(frame_name(static_cast<int>(sharp))) != std::string::npos) ++report.n_sharp_frames;
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingGroundTruth, std::string("malformed ground truth: ") + e.what(), gt_path.string());
  }
  return report;
}

}  // namespace calcap
