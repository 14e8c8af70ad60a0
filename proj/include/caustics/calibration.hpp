#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "caustics/image.hpp"

namespace caustics {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Pinhole intrinsics plus OpenCV-model radial (k1, k2, k3) and tangential
/// (p1, p2) distortion.
struct CameraCalibration {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  int width = 0;
  int height = 0;

  /// Throws ParameterError unless fx, fy > 0 and the principal point lies
  /// inside the image.
  void validate() const;

  bool has_distortion() const noexcept {
    return k1 != 0.0 || k2 != 0.0 || k3 != 0.0 || p1 != 0.0 || p2 != 0.0;
  }

  /// Ideal (undistorted) pixel -> observed (distorted) pixel.
  Point2 distort(Point2 ideal) const noexcept;
  /// Observed pixel -> ideal pixel, by fixed-point iteration.
  Point2 undistort(Point2 observed) const noexcept;

  static CameraCalibration from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

CameraCalibration load_calibration(const std::filesystem::path& path);

struct UndistortedImage {
  ImageU8 image;
  ValidityMask valid;
};

/// Resamples `img` onto the ideal pinhole grid (bilinear). Pixels whose
/// distorted location falls outside the source are 0 and marked invalid.
UndistortedImage undistort(const ImageU8& img, const CameraCalibration& calib);

}  // namespace caustics
