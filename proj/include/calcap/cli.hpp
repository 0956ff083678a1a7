#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "calcap/calib_solver.hpp"
#include "calcap/config.hpp"
#include "calcap/error.hpp"

namespace calcap {

/// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,
  kExitExtraction = 2,
  kExitSolver = 3,
  kExitGraph = 4,
};

int exit_code_for(ErrorCode code);

struct ExtractOptions {
  std::filesystem::path session_dir;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> spotter_dir;
  std::optional<int> threads;
};

struct CalibrateOptions {
  std::filesystem::path session_dir;
  std::optional<std::filesystem::path> observations;  // default <session>/observations.csv
  std::optional<std::filesystem::path> sync_report;   // default <session>/sync_report.json
  std::optional<std::filesystem::path> output;        // default <session>/calibration.json
  std::optional<std::filesystem::path> config;
  std::vector<std::pair<std::string, std::string>> model_overrides;  // (camera, model)
  std::optional<double> max_rms_px;
  std::optional<int> threads;
};

struct ReportOptions {
  std::filesystem::path result;
  std::optional<std::filesystem::path> out_dir;  // default: next to the result
};

struct SynthOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

/// Pipeline configuration for a session: defaults, then
/// `<session>/pipeline.json` when present, then `explicit_config`.
PipelineConfig session_config(const std::filesystem::path& session_dir,
                              const std::optional<std::filesystem::path>& explicit_config);

/// Views usable per camera and fully synchronized views, from a sync report.
ViewSelection selection_from_sync_report(const nlohmann::json& report);

int cmd_extract(const ExtractOptions& opts, std::ostream& out, std::ostream& err);
int cmd_calibrate(const CalibrateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err);

/// Parses `calib-capture <extract|calibrate|report|synth> [flags]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace calcap
