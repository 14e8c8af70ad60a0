#pragma once

#include <optional>
#include <vector>

#include "caustics/image.hpp"

namespace caustics {

/// sigma used when none is given: 0.3 * ((kernel - 1) / 2 - 1) + 0.8.
double default_gaussian_sigma(int kernel);

/// Normalized 1-D Gaussian taps (sum 1).
std::vector<double> gaussian_kernel(int kernel, double sigma);

/// Separable Gaussian blur with replicated borders. Works on every channel.
ImageF gaussian_blur(const ImageF& img, int kernel, std::optional<double> sigma = std::nullopt);

/// Per-pixel median over a window x window neighbourhood, replicated
/// borders. Single channel only. Even-sized windows are rejected.
ImageF median_filter(const ImageF& img, int window);

/// Canny edges on a single-channel image. Thresholds are in units of the
/// Sobel gradient magnitude of the input. Output is 255 on edges, 0 elsewhere.
ImageU8 canny_edges(const ImageF& img, double low, double high);

struct NormalizedImage {
  ImageU8 image;
  bool degenerate = false;  // max == min; image is all zero
};

/// Affine remap of all samples so the minimum becomes 0 and the maximum 255.
NormalizedImage normalize_minmax(const ImageF& img);

}  // namespace caustics
