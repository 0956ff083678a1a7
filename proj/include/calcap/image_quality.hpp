#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>

#include "calcap/session_store.hpp"

namespace calcap {

struct QualityScore {
  double laplacian_variance = 0.0;
  double tenengrad = 0.0;
  bool accepted = true;
  int chosen_offset = 0;
};

struct RefineConfig {
  int radius = 2;
  // Absolute sharpness floor on laplacian_variance; 0 disables it.
  double absolute_floor = 0.0;
};

ImageBuffer to_grayscale(const ImageBuffer& img);

/// Population variance of the 4-neighbour Laplacian over interior pixels.
double laplacian_variance(const ImageBuffer& gray);

/// Mean squared 3x3 Sobel gradient magnitude over interior pixels.
double tenengrad(const ImageBuffer& gray);

/// Separable Gaussian blur with clamped borders; sigma <= 0 copies the input.
ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma);

using FrameLoader = std::function<ImageBuffer(const FrameRecord&)>;

/// Loads frames from `root / record.path`.
FrameLoader disk_loader(std::filesystem::path root);

struct RefinedSelection {
  std::size_t frame_index = 0;
  QualityScore score;
};

/// Picks the sharpest frame within +/- radius of `chosen`. Ties go to
/// `chosen`, then to the earlier frame.
RefinedSelection refine_selection(const CameraStreamDescriptor& stream, std::size_t chosen,
                                  const FrameLoader& loader, const RefineConfig& config = {});

}  // namespace calcap
