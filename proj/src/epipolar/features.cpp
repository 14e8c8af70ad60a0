#include "caustics/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "caustics/filters.hpp"

namespace caustics {

namespace {

constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};
constexpr int kArc = 9;
constexpr int kPatternRadius = 12;
constexpr int kBorder = kPatternRadius + 2;

struct PatternPoint {
  double dx;
  double dy;
};

struct Pattern {
  std::vector<PatternPoint> points;
  std::vector<std::pair<int, int>> pairs;
};

// Concentric rings; 256 point pairs drawn once from a fixed seed. Raw engine
// output is used so the layout does not depend on the standard library.
const Pattern& pattern() {
  static const Pattern p = [] {
    Pattern out;
    const int radii[] = {0, 3, 6, 9, 12};
    const int counts[] = {1, 8, 12, 16, 20};
    for (int r = 0; r < 5; ++r)
      for (int k = 0; k < counts[r]; ++k) {
        const double a = 2.0 * std::numbers::pi * k / counts[r] + (r % 2 ? std::numbers::pi / counts[r] : 0.0);
        out.points.push_back({radii[r] * std::cos(a), radii[r] * std::sin(a)});
      }
    std::vector<std::pair<int, int>> all;
    const int n = static_cast<int>(out.points.size());
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) all.emplace_back(i, j);
    std::mt19937 rng(0x42a17c3u);
    for (std::size_t i = all.size() - 1; i > 0; --i) std::swap(all[i], all[rng() % (i + 1)]);
    out.pairs.assign(all.begin(), all.begin() + 256);
    return out;
  }();
  return p;
}

ImageF downsample(const ImageF& src) {
  const int w = src.width() / 2;
  const int h = src.height() / 2;
  ImageF out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = 0.25f * (src.at(2 * x, 2 * y) + src.at(2 * x + 1, 2 * y) + src.at(2 * x, 2 * y + 1) +
                              src.at(2 * x + 1, 2 * y + 1));
  return out;
}

// Sum of absolute excess over the threshold on the winning side; 0 if the
// pixel is not a FAST-9 corner.
float fast_score(const ImageF& img, int x, int y, float t) {
  const float c = img.at(x, y);
  float v[16];
  for (int i = 0; i < 16; ++i) v[i] = img.at(x + kCircle[i][0], y + kCircle[i][1]);
  auto has_arc = [&](auto pred) {
    int run = 0;
    for (int i = 0; i < 32; ++i) {
      run = pred(v[i % 16]) ? run + 1 : 0;
      if (run >= kArc) return true;
    }
    return false;
  };
  const bool bright = has_arc([&](float s) { return s > c + t; });
  const bool dark = !bright && has_arc([&](float s) { return s < c - t; });
  if (!bright && !dark) return 0.0f;
  float score = 0.0f;
  for (float s : v) {
    if (bright && s > c + t) score += s - c - t;
    if (dark && s < c - t) score += c - t - s;
  }
  return score;
}

double parabola_offset(float l, float c, float r) {
  const double den = static_cast<double>(l) - 2.0 * c + r;
  if (den >= 0.0) return 0.0;
  return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
}

void describe(const ImageF& smooth, double x, double y, Descriptor& d) {
  const auto& pat = pattern();
  float vals[64];
  float tmp[1];
  for (std::size_t i = 0; i < pat.points.size(); ++i) {
    sample_bilinear(smooth, x + pat.points[i].dx, y + pat.points[i].dy, std::span<float>(tmp, 1));
    vals[i] = tmp[0];
  }
  d.fill(0);
  for (std::size_t b = 0; b < pat.pairs.size(); ++b)
    if (vals[pat.pairs[b].first] < vals[pat.pairs[b].second]) d[b / 64] |= std::uint64_t{1} << (b % 64);
}

std::vector<Feature> detect_all(const ImageU8& img, const FeatureOptions& opt) {
  if (opt.octaves < 1) throw ParameterError("octaves must be at least 1");
  ImageF level(img.width(), img.height(), 1);
  {
    const ImageU8 gray = to_gray(img);
    auto src = gray.data();
    auto dst = level.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  }
  std::vector<Feature> out;
  double scale = 1.0;
  for (int o = 0; o < opt.octaves; ++o) {
    if (o > 0) {
      level = downsample(level);
      scale *= 2.0;
    }
    const int w = level.width();
    const int h = level.height();
    if (w <= 2 * kBorder || h <= 2 * kBorder) break;
    ImageF score(w, h, 1, 0.0f);
    for (int y = 3; y < h - 3; ++y)
      for (int x = 3; x < w - 3; ++x) score.at(x, y) = fast_score(level, x, y, static_cast<float>(opt.fast_threshold));
    const ImageF smooth = gaussian_blur(level, 9, 2.0);
    for (int y = kBorder; y < h - kBorder; ++y) {
      for (int x = kBorder; x < w - kBorder; ++x) {
        const float s = score.at(x, y);
        if (s <= 0.0f) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy) continue;
            const float n = score.at(x + dx, y + dy);
            // ties go to the first pixel in raster order
            if (n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0)))) {
              peak = false;
              break;
            }
          }
        if (!peak) continue;
        const double lx = x + parabola_offset(score.at(x - 1, y), s, score.at(x + 1, y));
        const double ly = y + parabola_offset(score.at(x, y - 1), s, score.at(x, y + 1));
        Feature f;
        f.kp.x = (lx + 0.5) * scale - 0.5;
        f.kp.y = (ly + 0.5) * scale - 0.5;
        f.kp.response = s;
        f.kp.scale = static_cast<float>(scale);
        describe(smooth, lx, ly, f.desc);
        out.push_back(f);
      }
    }
  }
  return out;
}

void sort_and_truncate(std::vector<Feature>& f, std::size_t max_kp) {
  std::stable_sort(f.begin(), f.end(), [](const Feature& a, const Feature& b) { return a.kp.response > b.kp.response; });
  if (max_kp > 0 && f.size() > max_kp) f.resize(max_kp);
}

bool touches_caustics(const BinaryMask& mask, double x, double y, int r) {
  const int x0 = static_cast<int>(std::floor(x - r - 1));
  const int x1 = static_cast<int>(std::ceil(x + r + 1));
  const int y0 = static_cast<int>(std::floor(y - r - 1));
  const int y1 = static_cast<int>(std::ceil(y + r + 1));
  const double r2 = static_cast<double>(r) * r;
  for (int py = std::max(0, y0); py <= std::min(mask.height() - 1, y1); ++py) {
    const double dy = std::max(std::abs(py - y) - 0.5, 0.0);
    for (int px = std::max(0, x0); px <= std::min(mask.width() - 1, x1); ++px) {
      const double dx = std::max(std::abs(px - x) - 0.5, 0.0);
      if (dx * dx + dy * dy <= r2 && mask.is_caustics(px, py)) return true;
    }
  }
  return false;
}

}  // namespace

int hamming(const Descriptor& a, const Descriptor& b) noexcept {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::vector<Feature> detect_features(const ImageU8& img, std::size_t max_kp, const FeatureOptions& opt) {
  auto f = detect_all(img, opt);
  sort_and_truncate(f, max_kp);
  return f;
}

std::vector<Feature> detect_masked_features(const ImageU8& img, const BinaryMask& mask, std::size_t max_kp,
                                            const FeatureOptions& opt) {
  if (!mask.same_shape(img)) throw DimensionError("mask and image differ in size");
  if (mask.count(Label::NonCaustics) == 0) return {};
  auto f = detect_all(img, opt);
  std::erase_if(f, [&](const Feature& k) { return touches_caustics(mask, k.kp.x, k.kp.y, opt.gate_radius); });
  sort_and_truncate(f, max_kp);
  return f;
}

namespace {

struct Nearest {
  int index = -1;
  int best = 1 << 30;
  int second = 1 << 30;
};

Nearest nearest(const Descriptor& q, std::span<const Descriptor> set) {
  Nearest n;
  for (std::size_t j = 0; j < set.size(); ++j) {
    const int d = hamming(q, set[j]);
    if (d < n.best) {
      n.second = n.best;
      n.best = d;
      n.index = static_cast<int>(j);
    } else if (d < n.second) {
      n.second = d;
    }
  }
  return n;
}

}  // namespace

MatchSet match_descriptors(std::span<const Descriptor> left, std::span<const Descriptor> right, double ratio) {
  MatchSet out;
  if (left.empty() || right.empty()) return out;
  std::vector<int> back(right.size(), -2);
  for (std::size_t i = 0; i < left.size(); ++i) {
    const Nearest n = nearest(left[i], right);
    // a lone candidate has no second neighbour and passes
    if (right.size() > 1 && !(n.best < ratio * n.second)) continue;
    ++out.ratio_passed;
    int& b = back[static_cast<std::size_t>(n.index)];
    if (b == -2) b = nearest(right[static_cast<std::size_t>(n.index)], left).index;
    if (b == static_cast<int>(i)) out.matches.push_back({static_cast<int>(i), n.index, n.best});
  }
  out.inliers.assign(out.matches.size(), 0);
  return out;
}

MatchSet match_features(std::span<const Feature> left, std::span<const Feature> right, double ratio) {
  std::vector<Descriptor> l(left.size());
  std::vector<Descriptor> r(right.size());
  for (std::size_t i = 0; i < left.size(); ++i) l[i] = left[i].desc;
  for (std::size_t i = 0; i < right.size(); ++i) r[i] = right[i].desc;
  return match_descriptors(l, r, ratio);
}

}  // namespace caustics
