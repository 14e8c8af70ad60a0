#include "caustics/filters.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace caustics {
namespace {

int clamp_index(int i, int n) noexcept { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

void require_odd(int size, const char* what) {
  if (size < 1 || size % 2 == 0) throw ParameterError(std::string(what) + " must be odd and positive");
}

}  // namespace

double default_gaussian_sigma(int kernel) { return 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8; }

std::vector<double> gaussian_kernel(int kernel, double sigma) {
  require_odd(kernel, "gaussian kernel size");
  if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be positive");
  const int r = kernel / 2;
  std::vector<double> taps(kernel);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += taps[i + r];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

ImageF gaussian_blur(const ImageF& img, int kernel, std::optional<double> sigma) {
  const auto taps = gaussian_kernel(kernel, sigma.value_or(default_gaussian_sigma(kernel)));
  const int r = kernel / 2;
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();

  ImageF tmp(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += taps[k + r] * img.at(clamp_index(x + k, w), y, c);
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  ImageF out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp.at(x, clamp_index(y + k, h), c);
        out.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ImageF median_filter(const ImageF& img, int window) {
  require_odd(window, "median window");
  if (img.channels() != 1) throw DimensionError("median_filter expects a single-channel image");
  const int r = window / 2;
  const int w = img.width();
  const int h = img.height();
  ImageF out(w, h, 1);
  std::vector<float> buf(static_cast<std::size_t>(window) * window);
  const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t n = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) buf[n++] = img.at(clamp_index(x + dx, w), clamp_index(y + dy, h));
      std::nth_element(buf.begin(), mid, buf.end());
      out.at(x, y) = *mid;
    }
  }
  return out;
}

ImageU8 canny_edges(const ImageF& img, double low, double high) {
  if (!(low < high)) throw ParameterError("canny: low threshold must be below high threshold");
  if (img.channels() != 1) throw DimensionError("canny_edges expects a single-channel image");
  const int w = img.width();
  const int h = img.height();
  auto px = [&](int x, int y) { return static_cast<double>(img.at(clamp_index(x, w), clamp_index(y, h))); };

  std::vector<double> mag(static_cast<std::size_t>(w) * h);
  std::vector<std::uint8_t> dir(mag.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      mag[i] = std::hypot(gx, gy);
      // Undirected gradient direction quantized to 0, 45, 90, 135 degrees.
      double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
      if (angle < 0) angle += 180.0;
      dir[i] = angle < 22.5 || angle >= 157.5 ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
    }
  }

  static constexpr int kStep[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  auto mag_at = [&](int x, int y) {
    return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag[static_cast<std::size_t>(y) * w + x];
  };

  // 0 = suppressed, 1 = weak, 2 = strong
  std::vector<std::uint8_t> cls(mag.size(), 0);
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = mag[i];
      if (m <= low) continue;
      const auto [sx, sy] = kStep[dir[i]];
      // Asymmetric comparison keeps exactly one pixel of a flat-topped ridge.
      if (!(m > mag_at(x - sx, y - sy) && m >= mag_at(x + sx, y + sy))) continue;
      if (m > high) {
        cls[i] = 2;
        frontier.emplace_back(x, y);
      } else {
        cls[i] = 1;
      }
    }
  }

  while (!frontier.empty()) {
    const auto [x, y] = frontier.front();
    frontier.pop_front();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        auto& c = cls[static_cast<std::size_t>(ny) * w + nx];
        if (c == 1) {
          c = 2;
          frontier.emplace_back(nx, ny);
        }
      }
    }
  }

  ImageU8 out(w, h, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < cls.size(); ++i) dst[i] = cls[i] == 2 ? 255 : 0;
  return out;
}

NormalizedImage normalize_minmax(const ImageF& img) {
  NormalizedImage result{ImageU8(img.width(), img.height(), img.channels()), false};
  const auto src = img.data();
  if (src.empty()) return result;
  const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    result.degenerate = true;
    return result;
  }
  const double scale = 255.0 / (hi - lo);
  auto dst = result.image.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = round_to_u8((src[i] - lo) * scale);
  return result;
}

}  // namespace caustics
