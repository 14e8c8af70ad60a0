#pragma once

#include <cstdint>
#include <vector>

#include "caustics/image.hpp"

namespace caustics {

/// Exposures taken from one fixed camera pose.
struct ImageStack {
  std::vector<ImageU8> images;
  double interval_s = 5.0;
};

struct ReferenceImage {
  ImageU8 image;
  Image<std::uint16_t> source;  // index of the stack member each pixel came from
  ValidityMask suspicious;      // winner differs from >= 90% of its 8 neighbours' winners
};

/// Per pixel, the RGB of the stack member with the lowest l value (ties go
/// to the earlier image). A single image is returned as is with a warning.
/// Throws ParameterError for an empty stack, DimensionError for mixed sizes.
ReferenceImage reference_min_luminosity(const ImageStack& stack);

/// max over channels of |img - reference|, on the 0..255 scale.
ImageF difference_image(const ImageU8& img, const ImageU8& reference);

struct GroundTruthParams {
  int blur_kernel = 5;       // 3, 5 or 7
  std::uint8_t threshold = 40;
  bool transfer_color = true;
};

struct GroundTruth {
  BinaryMask mask;
  ImageU8 overlay;     // input with the mask contours drawn in kContourColor
  ImageF difference;   // before blurring
  ImageU8 normalized;  // blurred difference stretched to 0..255
  bool degenerate = false;
};

inline constexpr std::uint8_t kContourColor[3] = {255, 0, 255};

/// Colour transfer of `img` onto the reference statistics, difference,
/// Gaussian blur, min-max stretch, threshold (CAUSTICS where the stretched
/// value exceeds it) and a Canny contour overlay for inspection. A flat
/// difference gives an empty mask and a warning.
GroundTruth generate_ground_truth(const ImageU8& img, const ImageU8& reference, const GroundTruthParams& params = {});

}  // namespace caustics
