#include "caustics/color_transfer.hpp"

#include <cmath>

#include "caustics/color.hpp"

namespace caustics {
namespace {

template <typename Include>
ChannelStats stats_impl(const LabImage& img, Include include) {
  ChannelStats s;
  std::size_t n = 0;
  std::array<double, 3> sum{};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!include(i)) continue;
    ++n;
    for (int c = 0; c < 3; ++c) sum[c] += img.plane(c)[i];
  }
  if (n < 2) throw ParameterError("channel_stats needs at least two contributing pixels");
  for (int c = 0; c < 3; ++c) s.mean[c] = sum[c] / static_cast<double>(n);
  // Second pass on centred values for accuracy.
  std::array<double, 3> sq{};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!include(i)) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = img.plane(c)[i] - s.mean[c];
      sq[c] += d * d;
    }
  }
  for (int c = 0; c < 3; ++c) s.stddev[c] = std::sqrt(sq[c] / static_cast<double>(n));
  return s;
}

}  // namespace

ChannelStats channel_stats(const LabImage& img) {
  return stats_impl(img, [](std::size_t) { return true; });
}

ChannelStats channel_stats(const LabImage& img, const BinaryMask& mask) {
  if (mask.width() != img.width || mask.height() != img.height)
    throw DimensionError("channel_stats: mask size differs from image");
  const auto labels = mask.labels();
  return stats_impl(img, [&](std::size_t i) { return labels[i] == Label::NonCaustics; });
}

TransferResult transfer_color(const LabImage& source, const ChannelStats& target_stats,
                              const ChannelStats& source_stats) {
  TransferResult result{LabImage(source.width, source.height), {}};
  for (int c = 0; c < 3; ++c) {
    double scale = 1.0;
    if (source_stats.stddev[c] <= kStdGuard)
      result.degenerate[c] = true;
    else
      scale = target_stats.stddev[c] / source_stats.stddev[c];
    const double src_mean = source_stats.mean[c];
    const double dst_mean = target_stats.mean[c];
    const auto in = source.plane(c);
    auto out = result.image.plane(c);
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = static_cast<float>((static_cast<double>(in[i]) - src_mean) * scale + dst_mean);
  }
  return result;
}

ImageU8 transfer_color_rgb(const ImageU8& source, const BinaryMask& source_mask, const ImageU8& target,
                           const BinaryMask& target_mask) {
  const LabImage src_lab = rgb_to_lab(source);
  const LabImage dst_lab = rgb_to_lab(target);
  const auto moved = transfer_color(src_lab, channel_stats(dst_lab, target_mask),
                                    channel_stats(src_lab, source_mask));
  return to_u8(lab_to_rgb(moved.image));
}

}  // namespace caustics
