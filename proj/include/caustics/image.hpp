#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "caustics/errors.hpp"

namespace caustics {

/// Row-major interleaved raster with 1 or 3 channels.
///
/// Two sample depths are used throughout the library: 8-bit (`ImageU8`) for
/// anything read from or written to disk, and 32-bit float (`ImageF`) for
/// intermediate results. Float samples are expected to be finite.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0) throw DimensionError("negative image size");
    if (channels != 1 && channels != 3) throw DimensionError("channels must be 1 or 3");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Image(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (channels != 1 && channels != 3) throw DimensionError("channels must be 1 or 3");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
      throw DimensionError("data length does not match width x height x channels");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& at(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& at(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<T> pixel(int x, int y) noexcept {
    return {&at(x, y), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int x, int y) const noexcept {
    return {&at(x, y), static_cast<std::size_t>(channels_)};
  }

  std::span<T> row(int y) noexcept {
    return {&at(0, y), static_cast<std::size_t>(width_) * channels_};
  }
  std::span<const T> row(int y) const noexcept {
    return {&at(0, y), static_cast<std::size_t>(width_) * channels_};
  }

  std::span<T> data() & noexcept { return data_; }
  std::span<const T> data() const& noexcept { return data_; }
  void data() && = delete;

  bool same_shape(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;

/// Single-channel 0/1 raster marking samples that came from inside a source
/// image after a geometric mapping.
using ValidityMask = Image<std::uint8_t>;

enum class Label : std::uint8_t { Caustics = 0, NonCaustics = 255 };

/// Per-pixel caustics / non-caustics labels. Serialized as 8-bit single
/// channel with 0 = caustics and 255 = non-caustics.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, Label fill = Label::NonCaustics);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  Label at(int x, int y) const noexcept {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int x, int y, Label label) noexcept {
    labels_[static_cast<std::size_t>(y) * width_ + x] = label;
  }
  bool is_caustics(int x, int y) const noexcept { return at(x, y) == Label::Caustics; }

  std::span<const Label> labels() const& noexcept { return labels_; }
  std::span<Label> labels() & noexcept { return labels_; }
  void labels() && = delete;

  std::size_t count(Label label) const noexcept;

  template <typename U>
  bool same_shape(const Image<U>& img) const noexcept {
    return width_ == img.width() && height_ == img.height();
  }
  bool same_shape(const BinaryMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  /// Accepts rasters holding only {0, 255} or only {0, 1}; anything else is
  /// a DimensionError since the labeling would be ambiguous.
  static BinaryMask from_raster(const ImageU8& raster);
  ImageU8 to_raster() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Label> labels_;
};

/// Planar l-alpha-beta image produced by rgb_to_lab.
struct LabImage {
  int width = 0;
  int height = 0;
  std::vector<float> l;
  std::vector<float> alpha;
  std::vector<float> beta;

  LabImage() = default;
  LabImage(int w, int h)
      : width(w), height(h),
        l(static_cast<std::size_t>(w) * h),
        alpha(static_cast<std::size_t>(w) * h),
        beta(static_cast<std::size_t>(w) * h) {}

  std::size_t pixel_count() const noexcept { return l.size(); }
  std::span<float> plane(int c) noexcept { return c == 0 ? std::span(l) : c == 1 ? std::span(alpha) : std::span(beta); }
  std::span<const float> plane(int c) const noexcept {
    return c == 0 ? std::span(l) : c == 1 ? std::span(alpha) : std::span(beta);
  }
};

/// 8-bit to float, scaled by 1/255.
ImageF to_float(const ImageU8& img);
/// Float in [0,1] to 8-bit: scale by 255, round half away from zero, clamp.
ImageU8 to_u8(const ImageF& img);
/// Float already on the 0..255 scale to 8-bit with the same rounding rule.
ImageU8 to_u8_unscaled(const ImageF& img);
std::uint8_t round_to_u8(double v) noexcept;

/// ITU-R BT.601 luma; single-channel inputs are returned as is.
ImageU8 to_gray(const ImageU8& img);
ImageF to_gray(const ImageF& img);

/// Extracts a sub-rectangle (must lie inside the image).
template <typename T>
Image<T> crop(const Image<T>& img, int x0, int y0, int width, int height);

/// Bilinear sample at (x, y). Returns false when the point is outside
/// [0, w-1] x [0, h-1]; `out` must hold `channels()` values.
template <typename T>
bool sample_bilinear(const Image<T>& img, double x, double y, std::span<float> out) noexcept;

}  // namespace caustics
