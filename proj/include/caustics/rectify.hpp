#pragma once

#include <optional>

#include <json.hpp>

#include "caustics/calibration.hpp"
#include "caustics/fundamental.hpp"

namespace caustics {

struct Size {
  int width = 0;
  int height = 0;
  friend bool operator==(const Size&, const Size&) = default;
};

/// H = common * shear * similarity * projective.
struct HomographyParts {
  Mat3 projective = Mat3::Identity();
  Mat3 similarity = Mat3::Identity();
  Mat3 shear = Mat3::Identity();
  Mat3 common = Mat3::Identity();  // flips, uniform scale and output-frame translation
};

struct RectifyingPair {
  Mat3 H_left = Mat3::Identity();
  Mat3 H_right = Mat3::Identity();
  Size size;
  HomographyParts left_parts;
  HomographyParts right_parts;
};

/// Uncalibrated rectification of a pair with fundamental matrix F
/// (x_right^T F x_left = 0). Throws GeometryError when an epipole lies
/// inside its image or the pair cannot be mapped without folding.
RectifyingPair rectify_pair(const Mat3& F, Size left_size, Size right_size);

Point2 apply_homography(const Mat3& H, Point2 p) noexcept;

/// Maps between original pixels of one view and its rectified frame. With a
/// calibration the original pixels are first undistorted.
struct ViewMapping {
  Mat3 H = Mat3::Identity();
  std::optional<CameraCalibration> calibration;

  Point2 to_rectified(Point2 original) const noexcept;
  Point2 to_original(Point2 rectified) const;
};

struct WarpedImage {
  ImageU8 image;
  ValidityMask valid;
};

struct WarpedMask {
  BinaryMask mask;  // outside the source defaults to NON_CAUSTICS; check `valid`
  ValidityMask valid;
};

/// Inverse mapping with bilinear sampling. Throws GeometryError for a singular H.
WarpedImage warp_image(const ImageU8& img, const Mat3& H, Size out);
WarpedImage warp_image(const ImageU8& img, const ViewMapping& map, Size out);
/// Nearest-neighbour variant for label rasters.
WarpedMask warp_mask(const BinaryMask& mask, const Mat3& H, Size out);
WarpedMask warp_mask(const BinaryMask& mask, const ViewMapping& map, Size out);

nlohmann::json matrix_to_json(const Mat3& m);
Mat3 matrix_from_json(const nlohmann::json& j);

}  // namespace caustics
