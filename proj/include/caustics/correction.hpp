#pragma once

#include <cstddef>
#include <optional>

#include <json.hpp>

#include "caustics/features.hpp"
#include "caustics/rectify.hpp"
#include "caustics/stereo.hpp"

namespace caustics {

/// Everything needed to replace pixels of one rectified view with pixels of
/// the other. All rasters share the rectified frame size.
struct RectifiedBundle {
  ImageU8 left;
  ImageU8 right;
  BinaryMask left_mask;
  BinaryMask right_mask;
  DisparityMap left_disparity;   // left x pairs with right x - d
  DisparityMap right_disparity;  // right x pairs with left x + d
  RectifyingPair rectification;
  ValidityMask left_valid;
  ValidityMask right_valid;
};

enum class FixDirection { FixLeft, FixRight };

struct CorrectionReport {
  std::size_t caustics_pixels = 0;  // inside the valid rectified area of the fixed view
  std::size_t replaced = 0;
  std::size_t unreplaceable = 0;    // no clean donor: outside the overlap, invalid or caustics

  double replaced_fraction() const noexcept {
    return caustics_pixels == 0 ? 0.0 : static_cast<double>(replaced) / static_cast<double>(caustics_pixels);
  }
  CorrectionReport& operator+=(const CorrectionReport& o) noexcept;
  nlohmann::json to_json() const;
};

struct Replacement {
  ImageU8 image;           // corrected rectified view
  ValidityMask replaced;   // 1 where a donor was copied
  CorrectionReport report;
};

/// Donor of fixed pixel x is x - d (left fixed, left disparity) or x + d
/// (right fixed, right disparity), sampled linearly between its two
/// horizontal neighbours. Both neighbours with nonzero weight must be valid
/// and NON_CAUSTICS in the donor view. Non-caustics pixels are copied as is.
/// Throws DimensionError when rasters are missing or differ in size.
Replacement replace_pixels(const RectifiedBundle& bundle, FixDirection direction);

struct BackProjection {
  ImageU8 image;
  ValidityMask composited;  // original-frame pixels that took a corrected value
};

/// Writes corrected content back into the original frame. An original pixel
/// is touched only when every rectified pixel its bilinear sample draws on
/// was replaced and, if `original_mask` is given, when it is CAUSTICS there.
/// Throws GeometryError for a singular homography.
BackProjection back_project(const ImageU8& corrected_rect, const ImageU8& original, const ViewMapping& map,
                            const ValidityMask& replaced_rect, const BinaryMask* original_mask = nullptr);
BackProjection back_project(const ImageU8& corrected_rect, const ImageU8& original, const Mat3& H,
                            const ValidityMask& replaced_rect, const BinaryMask* original_mask = nullptr);

/// Nearest-neighbour mask warp that marks a rectified pixel CAUSTICS as soon
/// as any source pixel of its bilinear footprint is CAUSTICS.
WarpedMask warp_mask_conservative(const BinaryMask& mask, const ViewMapping& map, Size out);

struct CorrectionParams {
  FeatureOptions features;
  std::size_t max_keypoints = 5000;
  double ratio = 0.8;
  RansacOptions ransac;
  SgmParams sgm;
  bool auto_disparity_range = true;  // derive d_min/d_max from the rectified inliers
  int disparity_margin = 8;
  double disparity_trim = 0.05;  // fraction of inlier disparities ignored at each end of the range
  bool transfer_color = true;

  void validate() const;
};

struct MatchStats {
  std::size_t left_keypoints = 0;
  std::size_t right_keypoints = 0;
  std::size_t ratio_passed = 0;
  std::size_t cross_checked = 0;
  std::size_t inliers = 0;
};

struct PairCorrection {
  ImageU8 left;
  ImageU8 right;
  BinaryMask left_mask;   // caustics that are still in place after correction
  BinaryMask right_mask;
  CorrectionReport left_report;
  CorrectionReport right_report;
  CorrectionReport report;  // both views
  MatchStats matches;
  int d_min = 0;
  int d_max = 0;
  std::optional<RectifiedBundle> bundle;  // empty when nothing had to be corrected
};

/// Colour transfer, masked matching, RANSAC, rectification, disparity in
/// both directions, replacement in both directions and back-projection.
/// Fewer than 8 inlier matches raise PipelineError("matching", "insufficient
/// matches"). A pair without caustics is returned unchanged.
PairCorrection correct_pair(const ImageU8& left, const ImageU8& right, const BinaryMask& left_mask,
                            const BinaryMask& right_mask, const std::optional<CameraCalibration>& calib,
                            const CorrectionParams& params = {});

}  // namespace caustics
