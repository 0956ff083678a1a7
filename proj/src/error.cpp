#include "calcap/error.hpp"

namespace calcap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonMonotonicStamp: return "NonMonotonicStamp";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::MalformedRiff: return "MalformedRiff";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedTranscript: return "MalformedTranscript";
    case ErrorCode::AudioTooShort: return "AudioTooShort";
    case ErrorCode::TemplateTooShort: return "TemplateTooShort";
    case ErrorCode::DriftTooLarge: return "DriftTooLarge";
    case ErrorCode::DegenerateAnchors: return "DegenerateAnchors";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::OutsideValidRegion: return "OutsideValidRegion";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DivergedOrStalled: return "DivergedOrStalled";
    case ErrorCode::NotEnoughViews: return "NotEnoughViews";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::InsufficientSharedViews: return "InsufficientSharedViews";
    case ErrorCode::MalformedObservations: return "MalformedObservations";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::MalformedResult: return "MalformedResult";
  }
  return "Unknown";
}

namespace {

std::string compose(ErrorCode code, const std::string& message,
                    const std::string& where, std::optional<std::size_t> line) {
  std::string out(to_string(code));
  if (!where.empty()) out += " [" + where + "]";
  if (line) out += " (line " + std::to_string(*line) + ")";
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message, std::string where,
             std::optional<std::size_t> line)
    : std::runtime_error(compose(code, message, where, line)),
      code_(code),
      where_(std::move(where)),
      line_(line) {}

}  // namespace calcap
