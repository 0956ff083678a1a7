#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "calcap/audio_dsp.hpp"
#include "calcap/calib_solver.hpp"
#include "calcap/image_quality.hpp"
#include "calcap/time_sync.hpp"

namespace calcap {

struct ExtractConfig {
  double trigger_min_separation_s = 1.0;
  // Clap anchors are moved onto the nearest detected clap within this window.
  bool snap_claps = true;
  double clap_snap_window_s = 0.25;
  bool refine_frames = true;
  int min_views = 3;
};

struct TargetConfig {
  int rows = 6;
  int cols = 6;
  double spacing_m = 0.2;
};

struct PipelineConfig {
  ExtractConfig extract;
  ClapConfig clap;
  MfccConfig mfcc;
  SpotterConfig spotter;
  SyncConfig sync;
  RefineConfig quality;
  SolverConfig solver;
  TargetConfig target;
  double max_rms_px = 0.5;
  std::map<std::string, CameraModel> models;  // cameras not listed are pinhole
  std::map<std::string, ImageSize> image_sizes;
};

/// Overlays `j` onto `base`. Unknown keys and wrongly typed values throw
/// InvalidConfig naming the key path; the result is validated.
PipelineConfig apply_config(const PipelineConfig& base, const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base = {});
nlohmann::json config_to_json(const PipelineConfig& cfg);
void validate_config(const PipelineConfig& cfg);

}  // namespace calcap
