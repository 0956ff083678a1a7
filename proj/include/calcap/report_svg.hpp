#pragma once

#include <string>
#include <vector>

#include "calcap/calib_io.hpp"
#include "calcap/least_squares.hpp"

namespace calcap {

/// log10(cost) against iteration, one <circle> per trace entry joined by a
/// polyline. The trace must be nonempty.
std::string convergence_svg(const std::vector<TraceEntry>& trace, const std::string& title = "LM convergence");

/// Human-readable summary: intrinsics, RMS table, and extrinsics as
/// translation (m) plus rotation angle (deg) relative to the reference camera.
std::string format_summary(const ResultDocument& doc);

}  // namespace calcap
