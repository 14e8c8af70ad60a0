#include <algorithm>
#include <array>
#include <cmath>

#include "caustics/filters.hpp"
#include "caustics/log.hpp"
#include "mi_table.hpp"

namespace caustics {

namespace detail {

namespace {

constexpr int kBins = 256;
constexpr double kFloor = 1e-9;
constexpr int kKernel = 7;
constexpr double kSigma = 1.0;

void smooth_1d(std::vector<double>& v, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  const int n = static_cast<int>(v.size());
  std::vector<double> out(v.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = -r; j <= r; ++j) out[static_cast<std::size_t>(i)] += k[static_cast<std::size_t>(j + r)] * v[static_cast<std::size_t>(std::clamp(i + j, 0, n - 1))];
  v = std::move(out);
}

void smooth_2d(std::vector<double>& m, const std::vector<double>& k) {
  std::vector<double> line(kBins);
  for (int a = 0; a < kBins; ++a) {
    std::copy_n(m.begin() + a * kBins, kBins, line.begin());
    smooth_1d(line, k);
    std::copy(line.begin(), line.end(), m.begin() + a * kBins);
  }
  for (int b = 0; b < kBins; ++b) {
    for (int a = 0; a < kBins; ++a) line[static_cast<std::size_t>(a)] = m[static_cast<std::size_t>(a * kBins + b)];
    smooth_1d(line, k);
    for (int a = 0; a < kBins; ++a) m[static_cast<std::size_t>(a * kBins + b)] = line[static_cast<std::size_t>(a)];
  }
}

// -log of the smoothed distribution, smoothed again.
void entropy_terms(std::vector<double>& p, const std::vector<double>& k, bool two_d) {
  two_d ? smooth_2d(p, k) : smooth_1d(p, k);
  for (auto& v : p) v = -std::log(std::max(v, kFloor));
  two_d ? smooth_2d(p, k) : smooth_1d(p, k);
}

}  // namespace

MiTable mi_table(const ImageU8& left, const ImageU8& right, const DisparityMap& init) {
  MiTable t;
  std::vector<double> joint(kBins * kBins, 0.0);
  std::size_t n = 0;
  for (int y = 0; y < std::min(left.height(), init.height); ++y)
    for (int x = 0; x < std::min(left.width(), init.width); ++x) {
      if (!init.valid(x, y)) continue;
      const long xr = std::lround(x - init.at(x, y));
      if (xr < 0 || xr >= right.width()) continue;
      joint[static_cast<std::size_t>(left.at(x, y)) * kBins + right.at(static_cast<int>(xr), y)] += 1.0;
      ++n;
    }
  if (n == 0) return t;
  std::vector<double> pl(kBins, 0.0);
  std::vector<double> pr(kBins, 0.0);
  for (int a = 0; a < kBins; ++a)
    for (int b = 0; b < kBins; ++b) {
      auto& v = joint[static_cast<std::size_t>(a * kBins + b)];
      v /= static_cast<double>(n);
      pl[static_cast<std::size_t>(a)] += v;
      pr[static_cast<std::size_t>(b)] += v;
    }
  auto occupied = [](const std::vector<double>& p) { return std::count_if(p.begin(), p.end(), [](double v) { return v > 0.0; }); };
  if (occupied(pl) < 2 || occupied(pr) < 2) return t;

  const auto k = gaussian_kernel(kKernel, kSigma);
  entropy_terms(joint, k, true);
  entropy_terms(pl, k, false);
  entropy_terms(pr, k, false);
  // cost = -mi = h12 - h1 - h2
  std::vector<double> c(kBins * kBins);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int a = 0; a < kBins; ++a)
    for (int b = 0; b < kBins; ++b) {
      const double v = joint[static_cast<std::size_t>(a * kBins + b)] - pl[static_cast<std::size_t>(a)] - pr[static_cast<std::size_t>(b)];
      c[static_cast<std::size_t>(a * kBins + b)] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) return t;
  t.cost.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    t.cost[i] = static_cast<std::uint16_t>(std::lround(kMiMaxCost * (c[i] - lo) / (hi - lo)));
  t.degenerate = false;
  return t;
}

MiTable transposed(const MiTable& t) {
  MiTable out;
  out.degenerate = t.degenerate;
  if (t.cost.empty()) return out;
  out.cost.resize(t.cost.size());
  for (int a = 0; a < kBins; ++a)
    for (int b = 0; b < kBins; ++b) out.cost[static_cast<std::size_t>(b * kBins + a)] = t.cost[static_cast<std::size_t>(a * kBins + b)];
  return out;
}

CostVolume mi_volume(const ImageU8& ref, const ImageU8& other, const MiTable& t, int d_min, int d_max) {
  CostVolume vol(ref.width(), ref.height(), d_min, d_max, kMiMaxCost);
  for (int y = 0; y < ref.height(); ++y)
    for (int x = 0; x < ref.width(); ++x) {
      const std::uint16_t* row = t.cost.data() + static_cast<std::size_t>(ref.at(x, y)) * kBins;
      std::uint16_t* c = vol.cell(x, y);
      for (int d = d_min; d <= d_max; ++d) {
        const int xr = x - d;
        if (xr >= 0 && xr < other.width()) c[d - d_min] = row[other.at(xr, y)];
      }
    }
  return vol;
}

}  // namespace detail

MiCost mi_cost(const ImageU8& left, const ImageU8& right, const DisparityMap& init, int d_min, int d_max) {
  if (left.height() != right.height()) throw DimensionError("mi_cost: images differ in height");
  if (init.width != left.width() || init.height != left.height()) throw DimensionError("mi_cost: init size mismatch");
  if (d_max < d_min) throw ParameterError("mi_cost: empty disparity range");
  const ImageU8 l = to_gray(left);
  const ImageU8 r = to_gray(right);
  const auto t = detail::mi_table(l, r, init);
  if (t.degenerate) {
    log_warning("mutual information histogram is degenerate; using census costs");
    return {census_cost(l, r, d_min, d_max), true};
  }
  return {detail::mi_volume(l, r, t, d_min, d_max), false};
}

}  // namespace caustics
