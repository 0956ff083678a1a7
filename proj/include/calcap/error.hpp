#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace calcap {

enum class ErrorCode {
  // session_store
  MissingFile,
  MalformedManifest,
  InvariantViolation,
  MalformedRow,
  NonMonotonicStamp,
  UnsupportedFormat,
  TruncatedData,
  UnsupportedEncoding,
  MalformedRiff,
  IoFailure,
  // audio_dsp
  MalformedTranscript,
  AudioTooShort,
  TemplateTooShort,
  // time_sync
  DriftTooLarge,
  DegenerateAnchors,
  // image_quality
  ImageTooSmall,
  // camera_models
  BehindCamera,
  NoConvergence,
  OutsideValidRegion,
  OutsideDomain,
  // calib_solver
  DegenerateConfiguration,
  IllConditioned,
  InvalidConfig,
  DivergedOrStalled,
  NotEnoughViews,
  DisconnectedGraph,
  InsufficientSharedViews,
  MalformedObservations,
  // synth / cli
  MissingGroundTruth,
  MalformedResult,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library is reported through this exception. `line`
// is set for row-oriented parsers (1-based), `where` carries a field path
// or file name when one is known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string where = {},
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  const std::string& where() const noexcept { return where_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::string where_;
  std::optional<std::size_t> line_;
};

}  // namespace calcap
