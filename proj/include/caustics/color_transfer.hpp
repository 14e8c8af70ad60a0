#pragma once

#include <array>

#include "caustics/image.hpp"

namespace caustics {

/// Population mean / standard deviation of the l, alpha and beta planes
/// (index 0, 1, 2).
struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};

  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

inline constexpr double kStdGuard = 1e-6;

ChannelStats channel_stats(const LabImage& img);
/// Statistics over the non-caustics pixels only.
ChannelStats channel_stats(const LabImage& img, const BinaryMask& mask);

struct TransferResult {
  LabImage image;
  std::array<bool, 3> degenerate{};  // source stddev <= kStdGuard, scale forced to 1

  bool any_degenerate() const noexcept { return degenerate[0] || degenerate[1] || degenerate[2]; }
};

/// out = (in - source_mean) * target_std / source_std + target_mean, per channel.
TransferResult transfer_color(const LabImage& source, const ChannelStats& target_stats,
                              const ChannelStats& source_stats);

/// RGB convenience: moves `source` towards the colour statistics of `target`,
/// both measured on their non-caustics pixels.
ImageU8 transfer_color_rgb(const ImageU8& source, const BinaryMask& source_mask, const ImageU8& target,
                           const BinaryMask& target_mask);

}  // namespace caustics
