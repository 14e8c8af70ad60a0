#include "caustics/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "caustics/color.hpp"
#include "caustics/color_transfer.hpp"
#include "caustics/filters.hpp"
#include "caustics/log.hpp"

namespace caustics {

namespace {

// l of l-alpha-beta; gray inputs use the intensity itself
std::vector<float> luminosity(const ImageU8& img) {
  if (img.channels() == 3) return rgb_to_lab(img).l;
  std::vector<float> out(img.data().begin(), img.data().end());
  return out;
}

}  // namespace

ReferenceImage reference_min_luminosity(const ImageStack& stack) {
  if (stack.images.empty()) throw ParameterError("reference: empty image stack");
  const ImageU8& first = stack.images.front();
  for (const auto& img : stack.images)
    if (!img.same_shape(first) || img.channels() != first.channels())
      throw DimensionError("reference: stack images differ in size or channel count");
  if (stack.images.size() > 65535) throw ParameterError("reference: stack too large");

  const int w = first.width();
  const int h = first.height();
  ReferenceImage out{first, Image<std::uint16_t>(w, h, 1, 0), ValidityMask(w, h, 1, 0)};
  if (stack.images.size() == 1) {
    log_warning("reference: single image stack, returned unchanged");
    return out;
  }

  std::vector<float> best = luminosity(first);
  for (std::size_t k = 1; k < stack.images.size(); ++k) {
    const ImageU8& img = stack.images[k];
    const std::vector<float> l = luminosity(img);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!(l[i] < best[i])) continue;  // ties keep the earlier image
        best[i] = l[i];
        out.source.at(x, y) = static_cast<std::uint16_t>(k);
        for (int c = 0; c < img.channels(); ++c) out.image.at(x, y, c) = img.at(x, y, c);
      }
    }
  }

  // moving objects leave isolated winners; flag them for manual review
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int n = 0;
      int differ = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || !out.source.contains(x + dx, y + dy)) continue;
          ++n;
          differ += out.source.at(x + dx, y + dy) != out.source.at(x, y);
        }
      if (n > 0 && 10 * differ >= 9 * n) out.suspicious.at(x, y) = 1;
    }
  }
  return out;
}

ImageF difference_image(const ImageU8& img, const ImageU8& reference) {
  if (!img.same_shape(reference) || img.channels() != reference.channels())
    throw DimensionError("difference: image and reference differ in size or channel count");
  ImageF out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      int m = 0;
      for (int c = 0; c < img.channels(); ++c) m = std::max(m, std::abs(img.at(x, y, c) - reference.at(x, y, c)));
      out.at(x, y) = static_cast<float>(m);
    }
  return out;
}

GroundTruth generate_ground_truth(const ImageU8& img, const ImageU8& reference, const GroundTruthParams& p) {
  if (p.blur_kernel != 3 && p.blur_kernel != 5 && p.blur_kernel != 7)
    throw ParameterError("ground truth: blur kernel must be 3, 5 or 7");
  if (!img.same_shape(reference) || img.channels() != reference.channels())
    throw DimensionError("ground truth: image and reference differ in size or channel count");

  const int w = img.width();
  const int h = img.height();
  const ImageU8 moved = p.transfer_color && img.channels() == 3
                            ? transfer_color_rgb(img, BinaryMask(w, h), reference, BinaryMask(w, h))
                            : img;
  GroundTruth gt;
  gt.difference = difference_image(moved, reference);
  const NormalizedImage norm = normalize_minmax(gaussian_blur(gt.difference, p.blur_kernel));
  gt.normalized = norm.image;
  gt.degenerate = norm.degenerate;
  gt.mask = BinaryMask(w, h);
  gt.overlay = img.channels() == 3 ? img : ImageU8(w, h, 3);
  if (img.channels() == 1)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) gt.overlay.at(x, y, c) = img.at(x, y);
  if (gt.degenerate) {
    log_warning("ground truth: difference image is flat, mask left empty");
    return gt;
  }

  ImageF binary(w, h, 1, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (gt.normalized.at(x, y) > p.threshold) {
        gt.mask.set(x, y, Label::Caustics);
        binary.at(x, y) = 255.0f;
      }
  const ImageU8 edges = canny_edges(binary, 100.0, 200.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (edges.at(x, y) != 0)
        for (int c = 0; c < 3; ++c) gt.overlay.at(x, y, c) = kContourColor[c];
  return gt;
}

}  // namespace caustics
