#include "caustics/image.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace caustics {

BinaryMask::BinaryMask(int width, int height, Label fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DimensionError("negative mask size");
  labels_.assign(static_cast<std::size_t>(width) * height, fill);
}

std::size_t BinaryMask::count(Label label) const noexcept {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

BinaryMask BinaryMask::from_raster(const ImageU8& raster) {
  if (raster.channels() != 1) throw DimensionError("mask raster must be single channel");
  bool has_other = false;
  bool has_one = false;
  bool has_255 = false;
  for (auto v : raster.data()) {
    if (v == 1) has_one = true;
    else if (v == 255) has_255 = true;
    else if (v != 0) has_other = true;
  }
  if (has_other || (has_one && has_255))
    throw DimensionError("mask raster must contain only {0,255} or only {0,1}");
  const std::uint8_t non_caustics = has_one ? 1 : 255;
  BinaryMask mask(raster.width(), raster.height());
  auto src = raster.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    mask.labels_[i] = src[i] == non_caustics ? Label::NonCaustics : Label::Caustics;
  return mask;
}

ImageU8 BinaryMask::to_raster() const {
  ImageU8 out(width_, height_, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < labels_.size(); ++i) dst[i] = static_cast<std::uint8_t>(labels_[i]);
  return out;
}

std::uint8_t round_to_u8(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

ImageF to_float(const ImageU8& img) {
  ImageF out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = round_to_u8(static_cast<double>(src[i]) * 255.0);
  return out;
}

ImageU8 to_u8_unscaled(const ImageF& img) {
  ImageU8 out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = round_to_u8(src[i]);
  return out;
}

namespace {

template <typename T>
Image<T> gray_impl(const Image<T>& img) {
  if (img.channels() == 1) return img;
  Image<T> out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      if constexpr (std::is_same_v<T, std::uint8_t>)
        out.at(x, y) = round_to_u8(v);
      else
        out.at(x, y) = static_cast<T>(v);
    }
  }
  return out;
}

}  // namespace

ImageU8 to_gray(const ImageU8& img) { return gray_impl(img); }
ImageF to_gray(const ImageF& img) { return gray_impl(img); }

template <typename T>
Image<T> crop(const Image<T>& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width < 0 || height < 0 || x0 + width > img.width() ||
      y0 + height > img.height())
    throw DimensionError("crop rectangle outside image");
  Image<T> out(width, height, img.channels());
  for (int y = 0; y < height; ++y) {
    auto src = img.row(y0 + y).subspan(static_cast<std::size_t>(x0) * img.channels(),
                                       static_cast<std::size_t>(width) * img.channels());
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

template <typename T>
bool sample_bilinear(const Image<T>& img, double x, double y, std::span<float> out) noexcept {
  const int w = img.width();
  const int h = img.height();
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return false;
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  double fx = x - x0;
  double fy = y - y0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - fy) * top + fy * bottom);
  }
  return true;
}

template ImageU8 crop(const ImageU8&, int, int, int, int);
template ImageF crop(const ImageF&, int, int, int, int);
template bool sample_bilinear(const ImageU8&, double, double, std::span<float>) noexcept;
template bool sample_bilinear(const ImageF&, double, double, std::span<float>) noexcept;

}  // namespace caustics
