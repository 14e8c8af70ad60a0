#pragma once

#include <cstdint>
#include <vector>

#include "caustics/stereo.hpp"

namespace caustics::detail {

// Quantized MI cost indexed by [reference intensity * 256 + other intensity].
struct MiTable {
  std::vector<std::uint16_t> cost;
  bool degenerate = true;
};

MiTable mi_table(const ImageU8& left_gray, const ImageU8& right_gray, const DisparityMap& init);
MiTable transposed(const MiTable& t);
CostVolume mi_volume(const ImageU8& ref_gray, const ImageU8& other_gray, const MiTable& t, int d_min, int d_max);

}  // namespace caustics::detail
