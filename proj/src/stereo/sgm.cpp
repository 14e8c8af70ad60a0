#include <algorithm>
#include <bit>
#include <cmath>

#include "caustics/filters.hpp"
#include "caustics/log.hpp"
#include "caustics/stereo.hpp"
#include "mi_table.hpp"

namespace caustics {

void SgmParams::validate() const {
  if (d_max <= d_min) throw ParameterError("disparity range: d_max must exceed d_min");
  if (!(p1 > 0 && p2 > p1)) throw ParameterError("penalties must satisfy p2 > p1 > 0");
  if (p2 > (1 << 20)) throw ParameterError("p2 is unreasonably large");
  if (!(lr_threshold >= 0.0)) throw ParameterError("lr_threshold must be non-negative");
  if (median_window < 1 || median_window % 2 == 0) throw ParameterError("median_window must be odd");
  if (mi_levels < 1) throw ParameterError("mi_levels must be at least 1");
}

std::size_t DisparityMap::count(DisparityStatus s) const noexcept {
  return static_cast<std::size_t>(std::count(status.begin(), status.end(), s));
}

std::vector<std::uint32_t> census_transform(const ImageU8& img) {
  const ImageU8 gray = to_gray(img);
  const int w = gray.width();
  const int h = gray.height();
  std::vector<std::uint32_t> out(gray.pixel_count());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::uint8_t c = gray.at(x, y);
      std::uint32_t bits = 0;
      int k = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -2; dx <= 2; ++dx, ++k)
          if (gray.at(std::clamp(x + dx, 0, w - 1), yy) < c) bits |= 1u << k;
      }
      out[static_cast<std::size_t>(y) * w + x] = bits;
    }
  return out;
}

CostVolume census_cost(const ImageU8& left, const ImageU8& right, int d_min, int d_max) {
  if (left.height() != right.height()) throw DimensionError("census_cost: images differ in height");
  if (d_max < d_min) throw ParameterError("census_cost: empty disparity range");
  const auto cl = census_transform(left);
  const auto cr = census_transform(right);
  const int w = left.width();
  const int wr = right.width();
  CostVolume vol(w, left.height(), d_min, d_max, kCensusMaxCost);
  for (int y = 0; y < left.height(); ++y)
    for (int x = 0; x < w; ++x) {
      const std::uint32_t a = cl[static_cast<std::size_t>(y) * w + x];
      std::uint16_t* c = vol.cell(x, y);
      for (int d = d_min; d <= d_max; ++d) {
        const int xr = x - d;
        if (xr < 0 || xr >= wr) continue;
        c[d - d_min] = static_cast<std::uint16_t>(std::popcount(a ^ cr[static_cast<std::size_t>(y) * wr + xr]));
      }
    }
  return vol;
}

namespace {

// Calls sink(x, y, L) with the path costs of every pixel, in path order.
template <typename Sink>
void aggregate_one(const CostVolume& cost, int p1, int p2, int dx, int dy, Sink&& sink) {
  const int w = cost.width();
  const int h = cost.height();
  const int D = cost.range();
  const auto uD = static_cast<std::size_t>(D);
  std::vector<std::uint32_t> prev(static_cast<std::size_t>(w) * uD);
  std::vector<std::uint32_t> cur(static_cast<std::size_t>(w) * uD);
  std::vector<std::uint32_t> prev_min(static_cast<std::size_t>(w));
  std::vector<std::uint32_t> cur_min(static_cast<std::size_t>(w));
  const auto P1 = static_cast<std::uint32_t>(p1);
  const auto P2 = static_cast<std::uint32_t>(p2);
  for (int i = 0; i < h; ++i) {
    const int y = dy >= 0 ? i : h - 1 - i;
    for (int j = 0; j < w; ++j) {
      const int x = dx >= 0 ? j : w - 1 - j;
      std::uint32_t* L = cur.data() + static_cast<std::size_t>(x) * uD;
      const std::uint16_t* C = cost.cell(x, y);
      const int px = x - dx;
      const int py = y - dy;
      std::uint32_t m = std::numeric_limits<std::uint32_t>::max();
      if (px < 0 || px >= w || py < 0 || py >= h) {
        for (int d = 0; d < D; ++d) {
          L[d] = C[d];
          m = std::min(m, L[d]);
        }
      } else {
        const std::uint32_t* Lp = (dy == 0 ? cur.data() : prev.data()) + static_cast<std::size_t>(px) * uD;
        const std::uint32_t mp = dy == 0 ? cur_min[static_cast<std::size_t>(px)] : prev_min[static_cast<std::size_t>(px)];
        for (int d = 0; d < D; ++d) {
          std::uint32_t v = std::min(Lp[d], mp + P2);
          if (d > 0) v = std::min(v, Lp[d - 1] + P1);
          if (d + 1 < D) v = std::min(v, Lp[d + 1] + P1);
          L[d] = C[d] + v - mp;
          m = std::min(m, L[d]);
        }
      }
      cur_min[static_cast<std::size_t>(x)] = m;
      sink(x, y, static_cast<const std::uint32_t*>(L));
    }
    std::swap(prev, cur);
    std::swap(prev_min, cur_min);
  }
}

constexpr int kDirections[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {-1, 1}, {1, -1}};

}  // namespace

AggregatedVolume aggregate_direction(const CostVolume& cost, int p1, int p2, int dx, int dy) {
  if (p1 < 0 || p2 < 0) throw ParameterError("penalties must be non-negative");
  if ((dx == 0 && dy == 0) || std::abs(dx) > 1 || std::abs(dy) > 1) throw ParameterError("invalid path direction");
  AggregatedVolume out(cost.width(), cost.height(), cost.d_min(), cost.d_max());
  const int D = cost.range();
  aggregate_one(cost, p1, p2, dx, dy, [&](int x, int y, const std::uint32_t* L) { std::copy(L, L + D, out.cell(x, y)); });
  return out;
}

AggregatedVolume aggregate_paths(const CostVolume& cost, int p1, int p2) {
  if (p1 < 0 || p2 < 0) throw ParameterError("penalties must be non-negative");
  AggregatedVolume out(cost.width(), cost.height(), cost.d_min(), cost.d_max());
  const int D = cost.range();
  for (const auto& dir : kDirections)
    aggregate_one(cost, p1, p2, dir[0], dir[1], [&](int x, int y, const std::uint32_t* L) {
      std::uint32_t* S = out.cell(x, y);
      for (int d = 0; d < D; ++d) S[d] += L[d];
    });
  return out;
}

double subpixel_offset(double cm, double c0, double cp, SubpixelMode mode) noexcept {
  double off = 0.0;
  if (mode == SubpixelMode::Parabola) {
    const double den = cm - 2.0 * c0 + cp;
    if (den > 0.0) off = (cm - cp) / (2.0 * den);
  } else {
    const double slope = std::max(cm - c0, cp - c0);
    if (slope > 0.0) off = (cm - cp) / (2.0 * slope);
  }
  return std::clamp(off, -0.5, 0.5);
}

DisparityMap wta_disparity(const AggregatedVolume& agg, SubpixelMode mode) {
  DisparityMap out(agg.width(), agg.height(), agg.d_min(), agg.d_max());
  const int D = agg.range();
  for (int y = 0; y < agg.height(); ++y)
    for (int x = 0; x < agg.width(); ++x) {
      const std::uint32_t* S = agg.cell(x, y);
      int best = 0;
      for (int d = 1; d < D; ++d)
        if (S[d] < S[best]) best = d;
      double off = 0.0;
      if (best > 0 && best + 1 < D) off = subpixel_offset(S[best - 1], S[best], S[best + 1], mode);
      const double d = std::clamp(agg.d_min() + best + off, static_cast<double>(agg.d_min()),
                                  static_cast<double>(agg.d_max()));
      out.set(x, y, static_cast<float>(d));
    }
  return out;
}

DisparityMap lr_consistency(const DisparityMap& left, const DisparityMap& right, double threshold) {
  if (left.height != right.height) throw DimensionError("lr_consistency: maps differ in height");
  if (left.disparity.size() != static_cast<std::size_t>(left.width) * left.height ||
      right.disparity.size() != static_cast<std::size_t>(right.width) * right.height)
    throw DimensionError("lr_consistency: malformed disparity map");
  DisparityMap out = left;
  for (int y = 0; y < left.height; ++y)
    for (int x = 0; x < left.width; ++x) {
      if (!left.valid(x, y)) continue;
      const double d = left.at(x, y);
      const long xr = std::lround(x - d);
      if (xr < 0 || xr >= right.width) {
        out.invalidate(x, y, DisparityStatus::Occluded);
        continue;
      }
      const int ixr = static_cast<int>(xr);
      if (right.valid(ixr, y) && std::abs(d - right.at(ixr, y)) <= threshold) continue;
      // Does any right pixel land on this one? Then the pixel is visible in
      // both views and merely matched wrongly.
      bool witness = false;
      for (int dd = right.d_min; dd <= right.d_max && !witness; ++dd) {
        const int x2 = x - dd;
        if (x2 < 0 || x2 >= right.width || !right.valid(x2, y)) continue;
        witness = std::abs(right.at(x2, y) - dd) <= threshold;
      }
      out.invalidate(x, y, witness ? DisparityStatus::Mismatched : DisparityStatus::Occluded);
    }
  return out;
}

namespace {

float median_of(std::vector<float>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5f * (v[n / 2 - 1] + v[n / 2]);
}

float nearest_valid(const DisparityMap& m, int x, int y) {
  const int limit = std::max(m.width, m.height);
  int found_ring = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  float best = 0.0f;
  for (int r = 1; r <= limit; ++r) {
    if (found_ring >= 0 && r > static_cast<int>(std::ceil(found_ring * std::sqrt(2.0)))) break;
    for (int yy = y - r; yy <= y + r; ++yy) {
      if (yy < 0 || yy >= m.height) continue;
      const bool edge_row = yy == y - r || yy == y + r;
      for (int xx = x - r; xx <= x + r; xx += edge_row ? 1 : 2 * r) {
        if (xx < 0 || xx >= m.width || !m.valid(xx, yy)) continue;
        const double d2 = static_cast<double>(xx - x) * (xx - x) + static_cast<double>(yy - y) * (yy - y);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = m.at(xx, yy);
        }
        if (found_ring < 0) found_ring = r;
      }
    }
  }
  return best;
}

}  // namespace

DisparityMap interpolate_invalid(const DisparityMap& disp) {
  const int w = disp.width;
  const int h = disp.height;
  if (disp.count(DisparityStatus::Valid) == 0) throw StateError("interpolate_invalid: no valid disparity to propagate");
  if (disp.count(DisparityStatus::Valid) == disp.status.size()) return disp;

  const float none = std::numeric_limits<float>::quiet_NaN();
  const std::size_t n = disp.status.size();
  std::vector<std::array<float, 8>> seen(n);
  std::vector<float> carry(n);
  for (int k = 0; k < 8; ++k) {
    const int dx = kDirections[k][0];
    const int dy = kDirections[k][1];
    for (int i = 0; i < h; ++i) {
      const int y = dy >= 0 ? i : h - 1 - i;
      for (int j = 0; j < w; ++j) {
        const int x = dx >= 0 ? j : w - 1 - j;
        const std::size_t idx = disp.index(x, y);
        if (disp.status[idx] == DisparityStatus::Valid) {
          carry[idx] = disp.disparity[idx];
          continue;
        }
        const int px = x - dx;
        const int py = y - dy;
        carry[idx] = (px < 0 || px >= w || py < 0 || py >= h) ? none : carry[disp.index(px, py)];
        seen[idx][static_cast<std::size_t>(k)] = carry[idx];
      }
    }
  }

  DisparityMap out = disp;
  std::vector<float> vals;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = disp.index(x, y);
      if (disp.status[idx] == DisparityStatus::Valid) continue;
      vals.clear();
      for (float v : seen[idx])
        if (!std::isnan(v)) vals.push_back(v);
      float fill;
      if (vals.size() < 2) {
        fill = nearest_valid(disp, x, y);
      } else if (disp.status[idx] == DisparityStatus::Occluded) {
        std::sort(vals.begin(), vals.end());
        fill = vals[1];
      } else {
        fill = median_of(vals);
      }
      out.set(x, y, fill);
    }
  return out;
}

namespace {

DisparityMap mirror(const DisparityMap& m) {
  DisparityMap out = m;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const std::size_t a = m.index(x, y);
      const std::size_t b = m.index(m.width - 1 - x, y);
      out.disparity[a] = m.disparity[b];
      out.status[a] = m.status[b];
    }
  return out;
}

ImageU8 flip_x(const ImageU8& img) {
  ImageU8 out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(img.width() - 1 - x, y, c);
  return out;
}

ImageU8 half_size(const ImageU8& g) {
  ImageU8 out(std::max(1, g.width() / 2), std::max(1, g.height() / 2), 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const int x1 = std::min(2 * x + 1, g.width() - 1);
      const int y1 = std::min(2 * y + 1, g.height() - 1);
      const int s = g.at(2 * x, 2 * y) + g.at(x1, 2 * y) + g.at(2 * x, y1) + g.at(x1, y1);
      out.at(x, y) = static_cast<std::uint8_t>((s + 2) / 4);
    }
  return out;
}

// Nearest-neighbour upsampling of a dense map to (w, h), values doubled.
DisparityMap upsample(const DisparityMap& m, int w, int h, int d_min, int d_max) {
  DisparityMap out(w, h, d_min, d_max);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x / 2, m.width - 1);
      const int sy = std::min(y / 2, m.height - 1);
      if (m.valid(sx, sy))
        out.set(x, y, std::clamp(2.0f * m.at(sx, sy), static_cast<float>(d_min), static_cast<float>(d_max)));
    }
  return out;
}

DisparityMap median_smooth(const DisparityMap& m, int window) {
  if (window <= 1) return m;
  ImageF img(m.width, m.height, 1, m.disparity);
  const ImageF f = median_filter(img, window);
  DisparityMap out = m;
  auto src = f.data();
  std::copy(src.begin(), src.end(), out.disparity.begin());
  return out;
}

struct Sgm {
  int p1;
  int p2;
  SubpixelMode mode;
  DisparityMap run(const CostVolume& v) const { return wta_disparity(aggregate_paths(v, p1, p2), mode); }
};

// Left map, right map (via the mirrored pair), both LR-checked.
std::pair<DisparityMap, DisparityMap> checked_pair(const DisparityMap& l_raw, const DisparityMap& r_raw, double t) {
  DisparityMap l = lr_consistency(l_raw, r_raw, t);
  DisparityMap r = mirror(lr_consistency(mirror(r_raw), mirror(l_raw), t));
  return {std::move(l), std::move(r)};
}

}  // namespace

StereoResult compute_disparity(const ImageU8& left_in, const ImageU8& right_in, const SgmParams& p,
                               const BinaryMask* left_mask, const BinaryMask* right_mask) {
  p.validate();
  if (left_in.height() != right_in.height()) throw DimensionError("compute_disparity: images differ in height");
  if (left_mask && !left_mask->same_shape(left_in)) throw DimensionError("left mask size mismatch");
  if (right_mask && !right_mask->same_shape(right_in)) throw DimensionError("right mask size mismatch");
  const ImageU8 left = to_gray(left_in);
  const ImageU8 right = to_gray(right_in);
  const ImageU8 left_f = flip_x(left);
  const ImageU8 right_f = flip_x(right);

  StereoResult res;
  DisparityMap l_raw;
  DisparityMap r_raw;
  if (p.cost == CostKind::Census) {
    const Sgm sgm{p.p1, p.p2, p.subpixel};
    l_raw = sgm.run(census_cost(left, right, p.d_min, p.d_max));
    r_raw = mirror(sgm.run(census_cost(right_f, left_f, p.d_min, p.d_max)));
  } else {
    // Census on the coarsest level seeds MI, which is refined once per level.
    std::vector<std::pair<ImageU8, ImageU8>> pyr{{left, right}};
    for (int l = 1; l < p.mi_levels; ++l) pyr.emplace_back(half_size(pyr.back().first), half_size(pyr.back().second));
    std::vector<std::pair<int, int>> ranges(pyr.size());
    for (std::size_t l = 0; l < pyr.size(); ++l) {
      const double s = std::ldexp(1.0, -static_cast<int>(l));
      ranges[l] = {static_cast<int>(std::floor(p.d_min * s)), static_cast<int>(std::ceil(p.d_max * s))};
      if (ranges[l].second == ranges[l].first) ++ranges[l].second;
    }
    const Sgm census_sgm{p.p1, p.p2, p.subpixel};
    const Sgm mi_sgm{p.p1 * kMiPenaltyScale, p.p2 * kMiPenaltyScale, p.subpixel};

    DisparityMap init;
    if (pyr.size() == 1) {
      init = census_sgm.run(census_cost(left, right, p.d_min, p.d_max));
    } else {
      const auto& [cl, cr] = pyr.back();
      const auto [lo, hi] = ranges.back();
      const DisparityMap a = census_sgm.run(census_cost(cl, cr, lo, hi));
      const DisparityMap b = mirror(census_sgm.run(census_cost(flip_x(cr), flip_x(cl), lo, hi)));
      init = interpolate_invalid(lr_consistency(a, b, p.lr_threshold));
      for (int l = static_cast<int>(pyr.size()) - 2; l >= 1; --l) {
        const auto& [il, ir] = pyr[static_cast<std::size_t>(l)];
        const auto [dlo, dhi] = ranges[static_cast<std::size_t>(l)];
        init = upsample(init, il.width(), il.height(), dlo, dhi);
        const detail::MiTable t = detail::mi_table(il, ir, init);
        if (t.degenerate) continue;  // keep the upsampled estimate
        init = interpolate_invalid(mi_sgm.run(detail::mi_volume(il, ir, t, dlo, dhi)));
      }
      init = upsample(init, left.width(), left.height(), p.d_min, p.d_max);
    }
    const detail::MiTable table = detail::mi_table(left, right, init);
    if (table.degenerate) {
      log_warning("mutual information histogram is degenerate; using census costs");
      res.mi_fell_back = true;
      l_raw = census_sgm.run(census_cost(left, right, p.d_min, p.d_max));
      r_raw = mirror(census_sgm.run(census_cost(right_f, left_f, p.d_min, p.d_max)));
    } else {
      // the mirrored pass reuses the joint statistics with the roles swapped
      l_raw = mi_sgm.run(detail::mi_volume(left, right, table, p.d_min, p.d_max));
      r_raw = mirror(mi_sgm.run(detail::mi_volume(right_f, left_f, detail::transposed(table), p.d_min, p.d_max)));
    }
  }

  auto [l, r] = checked_pair(l_raw, r_raw, p.lr_threshold);
  auto mark = [](DisparityMap& m, const BinaryMask* mask) {
    if (!mask) return;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (mask->is_caustics(x, y)) m.invalidate(x, y, DisparityStatus::Mismatched);
  };
  mark(l, left_mask);
  mark(r, right_mask);
  res.left = median_smooth(interpolate_invalid(l), p.median_window);
  res.right = median_smooth(interpolate_invalid(r), p.median_window);
  return res;
}

}  // namespace caustics
