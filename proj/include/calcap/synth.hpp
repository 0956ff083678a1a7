#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "calcap/calib_io.hpp"
#include "calcap/calib_solver.hpp"
#include "calcap/session_store.hpp"

namespace calcap {

struct SynthConfig {
  std::uint64_t seed = 42;
  int n_pinhole = 4;
  bool include_double_sphere = true;
  int n_events = 50;
  int rows = 6;
  int cols = 6;
  double spacing_m = 0.2;
  double min_distance_m = 1.0;
  double max_distance_m = 4.0;
  double max_tilt_deg = 60.0;
  double pixel_noise_px = 0.2;
  double transcript_jitter_s = 0.030;
  double fps = 15.0;
  int audio_rate_hz = 16000;
  double audio_noise = 1e-4;  // background noise std (full scale 1)
  double audio_scale = 1.0 + 2e-5;  // camera seconds per audio second
  double event_spacing_s = 3.0;
  double max_phase_ms = 8.0;
  bool write_transcript = true;
  std::string trigger_word = "Capture!";
  // Probability that a non-reference camera loses its frames around an event.
  double frame_drop_probability = 0.0;
  // When nonempty, event e may only be seen by cameras in
  // visibility_groups[e % size] (models occlusion, e.g. a camera chain).
  std::vector<std::vector<std::string>> visibility_groups;
  // Camera layout override; empty means the default rig.
  std::vector<Eigen::Vector3d> camera_positions;
};

/// Reads a synth config, rejecting unknown keys (InvalidConfig names the key).
SynthConfig synth_config_from_json(const nlohmann::json& j, const SynthConfig& base = {});
nlohmann::json synth_config_to_json(const SynthConfig& cfg);
void validate_synth_config(const SynthConfig& cfg);

struct SynthCamera {
  std::string id;
  Intrinsics intrinsics;
  Pose camera_from_reference;
  ImageSize size;
  std::int64_t phase_ns = 0;
};

struct SynthEvent {
  int view_id = 0;
  Pose board_in_reference;
  std::vector<std::string> visible;  // cameras that see every corner
  std::vector<std::string> dropped;  // cameras whose frames were dropped
};

struct SynthScene {
  TargetGeometry target;
  std::vector<SynthCamera> cameras;  // cameras.front() is the reference
  std::vector<SynthEvent> events;
};

/// Ground-truth rig and board trajectory. Deterministic in cfg.seed.
SynthScene make_scene(const SynthConfig& cfg);

/// Projected corners plus Gaussian pixel noise for every visible,
/// non-dropped (camera, event).
std::vector<Observation> render_observations(const SynthScene& scene, double noise_px, std::uint64_t seed);

/// Problem description (target, cameras, models, image sizes) for `scene`.
CalibrationProblem scene_problem(const SynthScene& scene, std::vector<Observation> observations);

/// Ground-truth state: intrinsics, extrinsics, and per-event board poses.
CalibrationState scene_state(const SynthScene& scene);

/// Harmonic sweep with a moving formant, used as the keyword marker and as
/// the spotter template. `pitch` scales the fundamental.
std::vector<double> keyword_marker(int sample_rate_hz, double duration_s, double pitch = 1.0);

struct SessionSummary {
  SessionManifest manifest;
  std::size_t n_observations = 0;
};

/// Writes a complete session (manifest, frame indices and frames, audio,
/// transcript, templates, observations, pipeline.json, ground_truth.json).
SessionSummary generate_session(const SynthConfig& cfg, const std::filesystem::path& out_dir);

struct RecoveryReport {
  struct CameraErrors {
    std::string id;
    CameraModel model = CameraModel::Pinhole;
    double max_focal_rel = 0.0;      // fx, fy
    double max_intrinsic_rel = 0.0;  // fx, fy, cx, cy (+ xi, alpha for double sphere)
    double max_distortion_abs = 0.0; // pinhole k1..p2
    double rotation_err_deg = 0.0;   // extrinsic, vs truth
    double translation_err_m = 0.0;
    double baseline_m = 0.0;
  };
  std::vector<CameraErrors> cameras;
  double max_focal_rel = 0.0;
  // Trigger checks; only filled when a sync report is supplied.
  std::size_t n_events_truth = 0;
  std::size_t n_triggers = 0;
  double max_trigger_error_ms = 0.0;
  std::size_t n_resolved_frames = 0;
  std::size_t n_sharp_frames = 0;
};

/// Compares a calibration result (and optionally a sync report) against
/// `session_dir/ground_truth.json`. Throws MissingGroundTruth.
RecoveryReport verify_recovery(const std::filesystem::path& session_dir, const ResultDocument& result,
                               const nlohmann::json* sync_report = nullptr);

}  // namespace calcap
