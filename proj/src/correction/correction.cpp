#include "caustics/correction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/LU>

#include "caustics/color_transfer.hpp"
#include "caustics/log.hpp"

namespace caustics {

CorrectionReport& CorrectionReport::operator+=(const CorrectionReport& o) noexcept {
  caustics_pixels += o.caustics_pixels;
  replaced += o.replaced;
  unreplaceable += o.unreplaceable;
  return *this;
}

nlohmann::json CorrectionReport::to_json() const {
  return {{"caustics_pixels", caustics_pixels},
          {"replaced_pixel_count", replaced},
          {"unreplaceable_pixel_count", unreplaceable},
          {"replaced_fraction", replaced_fraction()}};
}

namespace {

template <typename A, typename B>
void require_shape(const A& a, const B& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height() || a.width() == 0 || a.height() == 0)
    throw DimensionError(std::string("replace_pixels: ") + what);
}

void require_shape(const ImageU8& a, const DisparityMap& d, const char* what) {
  if (a.width() != d.width || a.height() != d.height || d.disparity.empty())
    throw DimensionError(std::string("replace_pixels: ") + what);
}

// Sample weights along one axis: the pixels at floor(v) and floor(v) + 1
// and the weight of the second one. A zero weight means that pixel is not read.
struct Span1 {
  int i0;
  double t;
};

Span1 split(double v) {
  const double f = std::floor(v);
  return {static_cast<int>(f), v - f};
}

}  // namespace

Replacement replace_pixels(const RectifiedBundle& b, FixDirection direction) {
  require_shape(b.left, b.right, "left and right images differ in size");
  require_shape(b.left, b.left_mask, "left mask missing or mis-sized");
  require_shape(b.left, b.right_mask, "right mask missing or mis-sized");
  require_shape(b.left, b.left_valid, "left validity missing or mis-sized");
  require_shape(b.left, b.right_valid, "right validity missing or mis-sized");
  require_shape(b.left, b.left_disparity, "left disparity missing or mis-sized");
  require_shape(b.left, b.right_disparity, "right disparity missing or mis-sized");
  if (b.left.channels() != b.right.channels()) throw DimensionError("replace_pixels: channel counts differ");

  const bool fix_left = direction == FixDirection::FixLeft;
  const ImageU8& fixed = fix_left ? b.left : b.right;
  const ImageU8& donor = fix_left ? b.right : b.left;
  const BinaryMask& fixed_mask = fix_left ? b.left_mask : b.right_mask;
  const BinaryMask& donor_mask = fix_left ? b.right_mask : b.left_mask;
  const ValidityMask& fixed_valid = fix_left ? b.left_valid : b.right_valid;
  const ValidityMask& donor_valid = fix_left ? b.right_valid : b.left_valid;
  const DisparityMap& disp = fix_left ? b.left_disparity : b.right_disparity;
  const double sign = fix_left ? -1.0 : 1.0;

  const int w = fixed.width();
  const int channels = fixed.channels();
  Replacement out{fixed, ValidityMask(w, fixed.height(), 1), {}};
  auto clean = [&](int x, int y) {
    return x >= 0 && x < w && donor_valid.at(x, y) != 0 && !donor_mask.is_caustics(x, y);
  };

  for (int y = 0; y < fixed.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fixed_mask.is_caustics(x, y) || fixed_valid.at(x, y) == 0) continue;
      ++out.report.caustics_pixels;
      if (!disp.valid(x, y)) {
        ++out.report.unreplaceable;
        continue;
      }
      const auto [x0, t] = split(x + sign * disp.at(x, y));
      if ((t < 1.0 && !clean(x0, y)) || (t > 0.0 && !clean(x0 + 1, y))) {
        ++out.report.unreplaceable;
        continue;
      }
      for (int c = 0; c < channels; ++c) {
        double v = (1.0 - t) * donor.at(x0, y, c);
        if (t > 0.0) v += t * donor.at(x0 + 1, y, c);
        out.image.at(x, y, c) = round_to_u8(v);
      }
      out.replaced.at(x, y) = 1;
      ++out.report.replaced;
    }
  }
  return out;
}

BackProjection back_project(const ImageU8& corrected, const ImageU8& original, const ViewMapping& map,
                            const ValidityMask& replaced, const BinaryMask* original_mask) {
  if (!corrected.same_shape(replaced)) throw DimensionError("back_project: replaced mask does not match the image");
  if (corrected.channels() != original.channels()) throw DimensionError("back_project: channel counts differ");
  if (original_mask && !original_mask->same_shape(original))
    throw DimensionError("back_project: original mask does not match the image");
  map.to_original({0.0, 0.0});  // throws for a singular H

  BackProjection out{original, ValidityMask(original.width(), original.height(), 1)};
  const int rw = corrected.width();
  const int rh = corrected.height();
  auto usable = [&](int x, int y) { return x >= 0 && y >= 0 && x < rw && y < rh && replaced.at(x, y) != 0; };

  for (int y = 0; y < original.height(); ++y) {
    for (int x = 0; x < original.width(); ++x) {
      if (original_mask && !original_mask->is_caustics(x, y)) continue;
      const Point2 q = map.to_rectified({static_cast<double>(x), static_cast<double>(y)});
      if (!std::isfinite(q.x) || !std::isfinite(q.y)) continue;
      const auto [x0, tx] = split(q.x);
      const auto [y0, ty] = split(q.y);
      const double wts[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) ok = wts[k] == 0.0 || usable(xs[k], ys[k]);
      if (!ok) continue;
      for (int c = 0; c < original.channels(); ++c) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k)
          if (wts[k] != 0.0) v += wts[k] * corrected.at(xs[k], ys[k], c);
        out.image.at(x, y, c) = round_to_u8(v);
      }
      out.composited.at(x, y) = 1;
    }
  }
  return out;
}

BackProjection back_project(const ImageU8& corrected, const ImageU8& original, const Mat3& H,
                            const ValidityMask& replaced, const BinaryMask* original_mask) {
  return back_project(corrected, original, ViewMapping{H, {}}, replaced, original_mask);
}

WarpedMask warp_mask_conservative(const BinaryMask& mask, const ViewMapping& map, Size out) {
  if (out.width <= 0 || out.height <= 0) throw ParameterError("output size must be positive");
  map.to_original({0.0, 0.0});
  const Mat3 Hi = map.H.inverse();
  WarpedMask res{BinaryMask(out.width, out.height), ValidityMask(out.width, out.height, 1)};
  const int w = mask.width();
  const int h = mask.height();
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const Eigen::Vector3d p = Hi * Eigen::Vector3d(x, y, 1.0);
      if (!(std::abs(p(2)) > 0.0)) continue;
      Point2 s{p(0) / p(2), p(1) / p(2)};
      if (map.calibration) s = map.calibration->distort(s);
      if (!(s.x >= 0.0 && s.y >= 0.0 && s.x <= w - 1 && s.y <= h - 1)) continue;
      res.valid.at(x, y) = 1;
      const auto [x0, tx] = split(s.x);
      const auto [y0, ty] = split(s.y);
      bool caustics = false;
      for (int dy = 0; dy <= (ty > 0.0 ? 1 : 0); ++dy)
        for (int dx = 0; dx <= (tx > 0.0 ? 1 : 0); ++dx) caustics = caustics || mask.is_caustics(x0 + dx, y0 + dy);
      if (caustics) res.mask.set(x, y, Label::Caustics);
    }
  }
  return res;
}

void CorrectionParams::validate() const {
  if (ratio <= 0.0 || ratio > 1.0) throw ParameterError("matching ratio must be in (0, 1]");
  if (disparity_margin < 0) throw ParameterError("disparity margin must be non-negative");
  if (!(disparity_trim >= 0.0 && disparity_trim < 0.5)) throw ParameterError("disparity trim must be in [0, 0.5)");
  if (ransac.threshold_px <= 0.0) throw ParameterError("RANSAC threshold must be positive");
  if (!auto_disparity_range) sgm.validate();
}

namespace {

std::vector<Point2> keypoint_positions(std::span<const Feature> f, const std::optional<CameraCalibration>& calib) {
  std::vector<Point2> out;
  out.reserve(f.size());
  for (const auto& x : f) {
    const Point2 p{x.kp.x, x.kp.y};
    out.push_back(calib ? calib->undistort(p) : p);
  }
  return out;
}

// Caustics or outside the source image: both are unusable for matching costs.
BinaryMask disparity_mask(const WarpedMask& m) {
  BinaryMask out = m.mask;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (m.valid.at(x, y) == 0) out.set(x, y, Label::Caustics);
  return out;
}

BinaryMask remaining(const BinaryMask& mask, const ValidityMask& composited) {
  BinaryMask out = mask;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (composited.at(x, y) != 0) out.set(x, y, Label::NonCaustics);
  return out;
}

}  // namespace

PairCorrection correct_pair(const ImageU8& left, const ImageU8& right, const BinaryMask& left_mask,
                            const BinaryMask& right_mask, const std::optional<CameraCalibration>& calib,
                            const CorrectionParams& params) {
  params.validate();
  if (!left_mask.same_shape(left) || !right_mask.same_shape(right))
    throw DimensionError("correct_pair: mask does not match its image");
  if (left.channels() != right.channels()) throw DimensionError("correct_pair: channel counts differ");
  if (calib) calib->validate();

  PairCorrection res{left, right, left_mask, right_mask, {}, {}, {}, {}, 0, 0, std::nullopt};
  if (left_mask.count(Label::Caustics) == 0 && right_mask.count(Label::Caustics) == 0) return res;

  // donors are moved to the colour statistics of the view they repair
  bool transfer = params.transfer_color && left.channels() == 3;
  if (transfer && (left_mask.count(Label::NonCaustics) < 2 || right_mask.count(Label::NonCaustics) < 2)) {
    log_warning("correct_pair: too few non-caustics pixels for colour transfer, skipping it");
    transfer = false;
  }
  const ImageU8 right_as_left = transfer ? transfer_color_rgb(right, right_mask, left, left_mask) : right;
  const ImageU8 left_as_right = transfer ? transfer_color_rgb(left, left_mask, right, right_mask) : left;

  const auto lf = detect_masked_features(to_gray(left), left_mask, params.max_keypoints, params.features);
  const auto rf = detect_masked_features(to_gray(right_as_left), right_mask, params.max_keypoints, params.features);
  res.matches.left_keypoints = lf.size();
  res.matches.right_keypoints = rf.size();
  MatchSet ms = match_features(lf, rf, params.ratio);
  res.matches.ratio_passed = ms.ratio_passed;
  res.matches.cross_checked = ms.matches.size();
  if (ms.matches.size() < 8) throw PipelineError("matching", "insufficient matches");

  const auto lp = keypoint_positions(lf, calib);
  const auto rp = keypoint_positions(rf, calib);
  RansacResult ransac;
  try {
    ransac = ransac_fundamental(ms, lp, rp, params.ransac);
  } catch (const GeometryError&) {
    throw PipelineError("matching", "insufficient matches");
  }
  res.matches.inliers = ransac.inlier_count;
  if (ransac.inlier_count < 8) throw PipelineError("matching", "insufficient matches");

  RectifyingPair rect;
  try {
    rect = rectify_pair(ransac.F, {left.width(), left.height()}, {right.width(), right.height()});
  } catch (const GeometryError& e) {
    throw PipelineError("rectify", e.what());
  }
  const ViewMapping lmap{rect.H_left, calib};
  const ViewMapping rmap{rect.H_right, calib};

  SgmParams sgm = params.sgm;
  if (params.auto_disparity_range) {
    // inliers that slid along their epipolar line carry wild disparities; trim both tails
    std::vector<double> ds;
    for (std::size_t i = 0; i < ms.matches.size(); ++i) {
      if (!ms.inliers[i]) continue;
      const Point2 a = apply_homography(rect.H_left, lp[static_cast<std::size_t>(ms.matches[i].left)]);
      const Point2 b = apply_homography(rect.H_right, rp[static_cast<std::size_t>(ms.matches[i].right)]);
      ds.push_back(a.x - b.x);
    }
    std::sort(ds.begin(), ds.end());
    const auto k = static_cast<std::size_t>(params.disparity_trim * static_cast<double>(ds.size()));
    const double lo = ds[k];
    const double hi = ds[ds.size() - 1 - k];
    sgm.d_min = static_cast<int>(std::floor(lo)) - params.disparity_margin;
    sgm.d_max = static_cast<int>(std::ceil(hi)) + params.disparity_margin;
    if (sgm.d_max == sgm.d_min) ++sgm.d_max;
  }
  sgm.validate();
  res.d_min = sgm.d_min;
  res.d_max = sgm.d_max;

  const WarpedImage rl = warp_image(left, lmap, rect.size);
  const WarpedImage rr = warp_image(right, rmap, rect.size);
  const WarpedImage rr_donor = warp_image(right_as_left, rmap, rect.size);
  const WarpedImage rl_donor = warp_image(left_as_right, lmap, rect.size);
  const WarpedMask lm = warp_mask_conservative(left_mask, lmap, rect.size);
  const WarpedMask rm = warp_mask_conservative(right_mask, rmap, rect.size);

  const BinaryMask ldm = disparity_mask(lm);
  const BinaryMask rdm = disparity_mask(rm);
  StereoResult stereo;
  try {
    stereo = compute_disparity(rl.image, rr_donor.image, sgm, &ldm, &rdm);
  } catch (const StateError& e) {
    throw PipelineError("disparity", e.what());
  }

  RectifiedBundle bundle{rl.image,      rr_donor.image, lm.mask, rm.mask, std::move(stereo.left),
                         std::move(stereo.right), rect,  lm.valid, rm.valid};
  const Replacement fix_left = replace_pixels(bundle, FixDirection::FixLeft);
  bundle.left = rl_donor.image;
  bundle.right = rr.image;
  const Replacement fix_right = replace_pixels(bundle, FixDirection::FixRight);
  bundle.right = rr_donor.image;  // keep the pair the disparities were computed on

  const BackProjection bl = back_project(fix_left.image, left, lmap, fix_left.replaced, &left_mask);
  const BackProjection br = back_project(fix_right.image, right, rmap, fix_right.replaced, &right_mask);
  res.left = bl.image;
  res.right = br.image;
  res.left_mask = remaining(left_mask, bl.composited);
  res.right_mask = remaining(right_mask, br.composited);
  res.left_report = fix_left.report;
  res.right_report = fix_right.report;
  res.report = fix_left.report;
  res.report += fix_right.report;
  bundle.left = rl.image;
  res.bundle = std::move(bundle);
  return res;
}

}  // namespace caustics
