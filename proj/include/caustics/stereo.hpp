#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "caustics/image.hpp"

namespace caustics {

enum class CostKind { Census, MutualInformation };
enum class SubpixelMode { Parabola, Equiangular };

struct SgmParams {
  int d_min = 0;
  int d_max = 64;
  int p1 = 10;
  int p2 = 120;
  CostKind cost = CostKind::Census;
  double lr_threshold = 1.0;
  SubpixelMode subpixel = SubpixelMode::Parabola;
  int median_window = 3;  // 1 disables the final median filter
  int mi_levels = 2;      // pyramid levels for the MI cost; the coarsest uses census

  int range() const noexcept { return d_max - d_min + 1; }
  void validate() const;
};

/// Census window is 5x5; a pixel with no partner in range costs the window
/// size.
inline constexpr int kCensusBits = 25;
inline constexpr std::uint16_t kCensusMaxCost = kCensusBits;
/// MI costs are quantized to [0, kMiMaxCost]; penalties are scaled by
/// kMiPenaltyScale to stay comparable with census.
inline constexpr std::uint16_t kMiMaxCost = 200;
inline constexpr int kMiPenaltyScale = 8;

/// Dense width x height x (d_max - d_min + 1) array, disparity fastest.
template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(int width, int height, int d_min, int d_max, T fill = T{})
      : width_(width), height_(height), d_min_(d_min), d_max_(d_max),
        data_(static_cast<std::size_t>(width) * height * (d_max - d_min + 1), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int d_min() const noexcept { return d_min_; }
  int d_max() const noexcept { return d_max_; }
  int range() const noexcept { return d_max_ - d_min_ + 1; }

  /// `di` is the disparity index, d - d_min.
  T& at(int x, int y, int di) noexcept { return data_[offset(x, y) + static_cast<std::size_t>(di)]; }
  T at(int x, int y, int di) const noexcept { return data_[offset(x, y) + static_cast<std::size_t>(di)]; }
  T* cell(int x, int y) noexcept { return data_.data() + offset(x, y); }
  const T* cell(int x, int y) const noexcept { return data_.data() + offset(x, y); }
  std::span<const T> data() const& noexcept { return data_; }
  void data() && = delete;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * static_cast<std::size_t>(range());
  }
  int width_ = 0;
  int height_ = 0;
  int d_min_ = 0;
  int d_max_ = 0;
  std::vector<T> data_;
};

using CostVolume = Volume<std::uint16_t>;
using AggregatedVolume = Volume<std::uint32_t>;

enum class DisparityStatus : std::uint8_t { Valid = 0, Occluded = 1, Mismatched = 2 };

/// Left-referenced maps pair left x with right x - d; right-referenced maps
/// pair right x with left x + d.
struct DisparityMap {
  static constexpr float kInvalid = -std::numeric_limits<float>::infinity();

  int width = 0;
  int height = 0;
  int d_min = 0;
  int d_max = 0;
  std::vector<float> disparity;
  std::vector<DisparityStatus> status;

  DisparityMap() = default;
  DisparityMap(int w, int h, int dmin, int dmax)
      : width(w), height(h), d_min(dmin), d_max(dmax),
        disparity(static_cast<std::size_t>(w) * h, kInvalid),
        status(static_cast<std::size_t>(w) * h, DisparityStatus::Mismatched) {}

  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width + x; }
  float at(int x, int y) const noexcept { return disparity[index(x, y)]; }
  DisparityStatus status_at(int x, int y) const noexcept { return status[index(x, y)]; }
  bool valid(int x, int y) const noexcept { return status[index(x, y)] == DisparityStatus::Valid; }
  void set(int x, int y, float d) noexcept {
    disparity[index(x, y)] = d;
    status[index(x, y)] = DisparityStatus::Valid;
  }
  void invalidate(int x, int y, DisparityStatus s) noexcept {
    disparity[index(x, y)] = kInvalid;
    status[index(x, y)] = s;
  }
  std::size_t count(DisparityStatus s) const noexcept;
};

/// 25 bits per pixel (bit k set when neighbour k of the 5x5 window is darker
/// than the centre), replicated borders. Colour input is converted to luma.
std::vector<std::uint32_t> census_transform(const ImageU8& img);

/// Throws DimensionError for unequal heights.
CostVolume census_cost(const ImageU8& left, const ImageU8& right, int d_min, int d_max);

struct MiCost {
  CostVolume volume;
  bool fell_back = false;  // histogram was degenerate; census costs returned
};

/// Per-pixel mutual-information cost from the joint histogram of the pairs
/// selected by `init` (valid pixels only), Gaussian-smoothed.
MiCost mi_cost(const ImageU8& left, const ImageU8& right, const DisparityMap& init, int d_min, int d_max);

/// One path: L(p,d) = C(p,d) + min(L(p-r,d), L(p-r,d+-1) + P1, min_k L(p-r,k) + P2) - min_k L(p-r,k).
AggregatedVolume aggregate_direction(const CostVolume& cost, int p1, int p2, int dx, int dy);
/// Sum over the 8 directions.
AggregatedVolume aggregate_paths(const CostVolume& cost, int p1, int p2);

/// Sub-disparity offset in [-0.5, 0.5] from the costs at d-1, d, d+1.
double subpixel_offset(double c_minus, double c0, double c_plus, SubpixelMode mode) noexcept;

/// Argmin per pixel (ties to the smaller d), refined to sub-pixel.
DisparityMap wta_disparity(const AggregatedVolume& agg, SubpixelMode mode = SubpixelMode::Parabola);

/// Marks left pixels whose right partner disagrees by more than `threshold`.
/// A failed pixel is MISMATCHED when some right pixel maps onto it, else
/// OCCLUDED (also when its partner lies outside the right image).
DisparityMap lr_consistency(const DisparityMap& left, const DisparityMap& right, double threshold);

/// Fills every invalid pixel from the values propagated along 8 directions:
/// median for mismatches, second lowest for occlusions, nearest valid pixel
/// when fewer than two directions reach a valid value. Throws StateError
/// when there is no valid pixel at all.
DisparityMap interpolate_invalid(const DisparityMap& disp);

struct StereoResult {
  DisparityMap left;
  DisparityMap right;
  bool mi_fell_back = false;
};

/// Full chain on a rectified pair. Pixels marked CAUSTICS in a reference
/// mask are treated as mismatches and re-filled from their surroundings.
StereoResult compute_disparity(const ImageU8& left, const ImageU8& right, const SgmParams& params,
                               const BinaryMask* left_mask = nullptr, const BinaryMask* right_mask = nullptr);

/// 16-bit PNG holding round(16 d), clamped to [0, 65535]; invalid pixels are 0.
void write_disparity_png16(const std::filesystem::path& path, const DisparityMap& disp);
/// 8-bit PNG: VALID 255, MISMATCHED 128, OCCLUDED 0.
void write_status_png(const std::filesystem::path& path, const DisparityMap& disp);
void write_disparity_pfm(const std::filesystem::path& path, const DisparityMap& disp);
/// Reads a PFM written by write_disparity_pfm; non-finite values come back invalid.
DisparityMap read_disparity_pfm(const std::filesystem::path& path, int d_min, int d_max);

ImageF disparity_to_image(const DisparityMap& disp);

}  // namespace caustics
