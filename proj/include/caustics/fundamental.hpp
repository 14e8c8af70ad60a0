#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "caustics/calibration.hpp"
#include "caustics/features.hpp"

namespace caustics {

using Mat3 = Eigen::Matrix3d;

/// Frobenius norm 1, largest-magnitude entry positive.
Mat3 normalize_fundamental(const Mat3& F);

/// Normalized 8-point estimate over all given pairs (at least 8), rank 2.
/// Returns nullopt for degenerate configurations.
std::optional<Mat3> eight_point(std::span<const Point2> left, std::span<const Point2> right);

/// Levenberg-Marquardt on the Sampson error of the given correspondences,
/// under a Cauchy loss of scale `robust_scale` px when that is positive.
/// One column of F stays a combination of the other two, so rank 2 holds
/// throughout. Returns the input when no step lowers the error.
Mat3 refine_fundamental(const Mat3& F, std::span<const Point2> left, std::span<const Point2> right,
                        double robust_scale = 0.0, int max_iterations = 30);

/// Distance of `right` from the epipolar line F*left, and of `left` from
/// F^T*right; the larger of the two.
double epipolar_distance(const Mat3& F, Point2 left, Point2 right) noexcept;
/// First-order geometric error, in pixels (square root of the Sampson distance).
double sampson_error(const Mat3& F, Point2 left, Point2 right) noexcept;

struct RansacOptions {
  double threshold_px = 1.0;
  double confidence = 0.999;
  int max_iterations = 10000;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Mat3 F = Mat3::Zero();
  std::vector<std::uint8_t> inliers;
  std::size_t inlier_count = 0;
  int iterations = 0;
};

/// Throws ParameterError with fewer than 8 correspondences and
/// GeometryError when no non-degenerate model is found.
RansacResult ransac_fundamental(std::span<const Point2> left, std::span<const Point2> right,
                                const RansacOptions& opt = {});

/// Runs RANSAC on the keypoints referenced by `matches` and stores the
/// inlier flags in `matches.inliers`.
RansacResult ransac_fundamental(MatchSet& matches, std::span<const Point2> left_points,
                                std::span<const Point2> right_points, const RansacOptions& opt = {});

/// Epipoles as unit homogeneous vectors: F e = 0 in the left image,
/// F^T e' = 0 in the right one.
Eigen::Vector3d epipole_in_left(const Mat3& F);
Eigen::Vector3d epipole_in_right(const Mat3& F);

}  // namespace caustics
