#include "calcap/image_quality.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "calcap/error.hpp"

namespace calcap {

ImageBuffer to_grayscale(const ImageBuffer& img) {
  validate_image(img);
  if (img.channels == 1) return img;
  ImageBuffer out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 1;
  out.data.resize(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double luma = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::floor(luma + 0.5), 0.0, 255.0));
  }
  return out;
}

namespace {

void require_gray_interior(const ImageBuffer& img) {
  validate_image(img);
  if (img.channels != 1) throw Error(ErrorCode::InvariantViolation, "expected a single-channel image");
  if (img.width < 3 || img.height < 3) {
    throw Error(ErrorCode::ImageTooSmall,
                std::to_string(img.width) + "x" + std::to_string(img.height) + " has no interior pixels");
  }
}

}  // namespace

double laplacian_variance(const ImageBuffer& gray) {
  require_gray_interior(gray);
  // Integer responses summed exactly in 64-bit, so the result does not depend
  // on traversal order.
  std::int64_t sum = 0;
  std::int64_t sum_sq = 0;
  for (int y = 1; y < gray.height - 1; ++y) {
    for (int x = 1; x < gray.width - 1; ++x) {
      const int r = gray.at(x, y - 1) + gray.at(x, y + 1) + gray.at(x - 1, y) + gray.at(x + 1, y) - 4 * gray.at(x, y);
      sum += r;
      sum_sq += static_cast<std::int64_t>(r) * r;
    }
  }
  // n * sum_sq - sum^2 is an exact integer; it is zero iff the response is constant.
  const auto n = static_cast<__int128>(gray.width - 2) * (gray.height - 2);
  const __int128 scaled = n * sum_sq - static_cast<__int128>(sum) * sum;
  const auto nd = static_cast<double>(n);
  return static_cast<double>(scaled) / (nd * nd);
}

double tenengrad(const ImageBuffer& gray) {
  require_gray_interior(gray);
  std::int64_t sum = 0;
  for (int y = 1; y < gray.height - 1; ++y) {
    for (int x = 1; x < gray.width - 1; ++x) {
      const int gx = (gray.at(x + 1, y - 1) + 2 * gray.at(x + 1, y) + gray.at(x + 1, y + 1)) -
                     (gray.at(x - 1, y - 1) + 2 * gray.at(x - 1, y) + gray.at(x - 1, y + 1));
      const int gy = (gray.at(x - 1, y + 1) + 2 * gray.at(x, y + 1) + gray.at(x + 1, y + 1)) -
                     (gray.at(x - 1, y - 1) + 2 * gray.at(x, y - 1) + gray.at(x + 1, y - 1));
      sum += static_cast<std::int64_t>(gx) * gx + static_cast<std::int64_t>(gy) * gy;
    }
  }
  const auto n = static_cast<double>(gray.width - 2) * static_cast<double>(gray.height - 2);
  return static_cast<double>(sum) / n;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
  validate_image(img);
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  const int w = img.width, h = img.height, ch = img.channels;
  std::vector<double> tmp(img.data.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * img.at(xx, y, c);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }
    }
  }
  ImageBuffer out = img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] * tmp[(static_cast<std::size_t>(yy) * w + x) * ch + c];
        }
        out.data[(static_cast<std::size_t>(y) * w + x) * ch + c] =
            static_cast<std::uint8_t>(std::clamp(std::floor(acc + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

FrameLoader disk_loader(std::filesystem::path root) {
  return [root = std::move(root)](const FrameRecord& rec) { return load_pnm(root / rec.path); };
}

RefinedSelection refine_selection(const CameraStreamDescriptor& stream, std::size_t chosen, const FrameLoader& loader,
                                  const RefineConfig& config) {
  if (chosen >= stream.frames.size()) {
    throw Error(ErrorCode::InvariantViolation, "chosen frame " + std::to_string(chosen) + " out of range",
                stream.camera_id);
  }
  const int radius = std::max(0, config.radius);
  const auto first = static_cast<std::ptrdiff_t>(chosen) - radius;
  const auto last = static_cast<std::ptrdiff_t>(chosen) + radius;

  RefinedSelection best;
  best.frame_index = chosen;
  bool have_best = false;
  // Visit `chosen` first, then neighbours in ascending index order; a
  // candidate must be strictly sharper to displace the incumbent.
  std::vector<std::ptrdiff_t> order{static_cast<std::ptrdiff_t>(chosen)};
  for (auto i = first; i <= last; ++i) {
    if (i != static_cast<std::ptrdiff_t>(chosen)) order.push_back(i);
  }
  for (auto i : order) {
    if (i < 0 || i >= static_cast<std::ptrdiff_t>(stream.frames.size())) continue;
    const ImageBuffer gray = to_grayscale(loader(stream.frames[static_cast<std::size_t>(i)]));
    const double lv = laplacian_variance(gray);
    if (!have_best || lv > best.score.laplacian_variance) {
      best.frame_index = static_cast<std::size_t>(i);
      best.score.laplacian_variance = lv;
      best.score.tenengrad = tenengrad(gray);
      best.score.chosen_offset = static_cast<int>(i - static_cast<std::ptrdiff_t>(chosen));
      have_best = true;
    }
  }
  best.score.accepted = config.absolute_floor <= 0.0 || best.score.laplacian_variance >= config.absolute_floor;
  return best;
}

}  // namespace calcap
