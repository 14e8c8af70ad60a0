#include "support/rds.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

namespace testsupport {

using caustics::DisparityMap;
using caustics::ImageU8;

Rds make_rds(int w, int h, int background, const std::vector<Rect>& rects, std::uint64_t seed, int d_min, int d_max) {
  std::mt19937_64 rng(seed);
  Rds s{ImageU8(w, h, 1), ImageU8(w, h, 1), DisparityMap(w, h, d_min, d_max), DisparityMap(w, h, d_min, d_max),
        std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  std::vector<int> d(static_cast<std::size_t>(w) * h, background);
  for (const auto& r : rects)
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) d[static_cast<std::size_t>(y) * w + x] = r.d;
  for (auto& v : s.left.data()) v = static_cast<std::uint8_t>(rng() & 0xff);
  for (int y = 0; y < h; ++y) {
    std::vector<int> owner(static_cast<std::size_t>(w), -1);
    for (int x = 0; x < w; ++x) {
      const int dx = d[static_cast<std::size_t>(y) * w + x];
      s.gt_left.set(x, y, static_cast<float>(dx));
      const int xr = x - dx;
      if (xr < 0 || xr >= w) continue;
      int& o = owner[static_cast<std::size_t>(xr)];
      if (o < 0 || dx > d[static_cast<std::size_t>(y) * w + o]) o = x;
    }
    for (int xr = 0; xr < w; ++xr) {
      const int o = owner[static_cast<std::size_t>(xr)];
      if (o >= 0) {
        s.right.at(xr, y) = s.left.at(o, y);
        s.gt_right.set(xr, y, static_cast<float>(o - xr));
      } else {
        s.right.at(xr, y) = static_cast<std::uint8_t>(rng() & 0xff);
        // seen by the right camera only: background side of the neighbours
        int best = 1 << 30;
        for (int nx : {xr - 1, xr + 1})
          if (nx >= 0 && nx < w && owner[static_cast<std::size_t>(nx)] >= 0)
            best = std::min(best, owner[static_cast<std::size_t>(nx)] - nx);
        s.gt_right.set(xr, y, static_cast<float>(best == (1 << 30) ? background : best));
      }
    }
    for (int x = 0; x < w; ++x) {
      const int xr = x - d[static_cast<std::size_t>(y) * w + x];
      s.occluded_left[static_cast<std::size_t>(y) * w + x] = xr < 0 || xr >= w || owner[static_cast<std::size_t>(xr)] != x;
    }
  }
  return s;
}

Rds random_rds(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> disp(0, 32);
  std::vector<Rect> rects;
  const int n = 2 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) {
    const int rw = w / 6 + static_cast<int>(rng() % static_cast<std::uint64_t>(w / 4));
    const int rh = h / 6 + static_cast<int>(rng() % static_cast<std::uint64_t>(h / 4));
    const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(w - rw));
    const int y0 = static_cast<int>(rng() % static_cast<std::uint64_t>(h - rh));
    rects.push_back({x0, y0, x0 + rw, y0 + rh, disp(rng)});
  }
  return make_rds(w, h, disp(rng), rects, rng());
}

std::vector<std::uint32_t> exhaustive_path_minimum(const caustics::CostVolume& c, int p1, int p2, int upto) {
  const int D = c.range();
  std::vector<std::uint32_t> best(static_cast<std::size_t>(D), std::numeric_limits<std::uint32_t>::max());
  std::vector<int> seq(static_cast<std::size_t>(upto + 1), 0);
  while (true) {
    std::uint32_t e = 0;
    for (int i = 0; i <= upto; ++i) {
      e += c.at(i, 0, seq[static_cast<std::size_t>(i)]);
      if (i > 0) {
        const int jump = std::abs(seq[static_cast<std::size_t>(i)] - seq[static_cast<std::size_t>(i - 1)]);
        e += jump == 0 ? 0 : jump == 1 ? static_cast<std::uint32_t>(p1) : static_cast<std::uint32_t>(p2);
      }
    }
    auto& b = best[static_cast<std::size_t>(seq.back())];
    b = std::min(b, e);
    int k = 0;
    while (k <= upto && ++seq[static_cast<std::size_t>(k)] == D) seq[static_cast<std::size_t>(k++)] = 0;
    if (k > upto) break;
  }
  return best;
}

}  // namespace testsupport
