#pragma once

#include <filesystem>
#include <string>
#include <map>
#include <vector>

#include <json.hpp>

#include "calcap/calib_solver.hpp"

namespace calcap {

/// CSV `camera_id,view_id,corner_id,u,v`; a header row with exactly those
/// names is optional. Throws MalformedObservations with the line number.
std::vector<Observation> read_observations(const std::filesystem::path& path);
std::vector<Observation> parse_observations(const std::string& text, const std::string& where = {});
void write_observations(const std::filesystem::path& path, const std::vector<Observation>& obs);

/// {"model": "pinhole", "params": {"fx": .., ...}}
nlohmann::json intrinsics_to_json(const Intrinsics& k);
Intrinsics intrinsics_from_json(const nlohmann::json& j);

/// {"quaternion": [w, x, y, z], "translation": [x, y, z]}
nlohmann::json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);

/// Result document. Extrinsics are written as the pose of each camera in the
/// reference-camera frame (reference_from_camera).
nlohmann::json result_to_json(const CalibrationResult& result, const std::vector<std::string>& camera_order);

/// Parsed result document; throws MalformedResult.
struct ResultDocument {
  std::vector<std::string> cameras;
  std::map<std::string, Intrinsics> intrinsics;
  std::map<std::string, Pose> reference_from_camera;
  double rms_px = 0.0;
  std::map<std::string, double> per_camera_rms;
  std::map<std::string, std::map<int, double>> per_view_rms;
  std::vector<TraceEntry> trace;
  std::string termination;
};

ResultDocument result_from_json(const nlohmann::json& j);
ResultDocument load_result(const std::filesystem::path& path);

}  // namespace calcap
