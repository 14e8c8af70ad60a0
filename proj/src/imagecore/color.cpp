#include "caustics/color.hpp"

#include <algorithm>
#include <cmath>

namespace caustics {
namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr Mat3 kRgbToXyz{{{0.5141, 0.3239, 0.1604},
                          {0.2651, 0.6702, 0.0641},
                          {0.0241, 0.1228, 0.8444}}};

constexpr Mat3 kXyzToLms{{{0.3897, 0.6890, -0.0787},
                          {-0.2298, 1.1834, 0.0464},
                          {0.0000, 0.0000, 1.0000}}};

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

struct Chain {
  Mat3 rgb_to_lms;
  Mat3 lms_to_rgb;
};

const Chain& chain() {
  static const Chain c = [] {
    Chain out;
    out.rgb_to_lms = multiply(kXyzToLms, kRgbToXyz);
    out.lms_to_rgb = inverse(out.rgb_to_lms);
    return out;
  }();
  return c;
}

const double kInvSqrt3 = 1.0 / std::sqrt(3.0);
const double kInvSqrt6 = 1.0 / std::sqrt(6.0);
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

template <typename T>
LabImage rgb_to_lab_impl(const Image<T>& img, double scale) {
  if (img.channels() != 3) throw DimensionError("rgb_to_lab needs a 3-channel image");
  LabImage lab(img.width(), img.height());
  const auto src = img.data();
  for (std::size_t i = 0; i < lab.pixel_count(); ++i) {
    const auto v = rgb_to_lab_pixel(src[3 * i] * scale, src[3 * i + 1] * scale, src[3 * i + 2] * scale);
    lab.l[i] = static_cast<float>(v[0]);
    lab.alpha[i] = static_cast<float>(v[1]);
    lab.beta[i] = static_cast<float>(v[2]);
  }
  return lab;
}

}  // namespace

std::array<double, 3> rgb_to_lab_pixel(double r, double g, double b) noexcept {
  const auto& m = chain().rgb_to_lms;
  double log_lms[3];
  for (int i = 0; i < 3; ++i) {
    const double v = m[i][0] * r + m[i][1] * g + m[i][2] * b;
    log_lms[i] = std::log10(std::max(v, kLabEpsilon));
  }
  const double ll = log_lms[0];
  const double mm = log_lms[1];
  const double ss = log_lms[2];
  return {kInvSqrt3 * (ll + mm + ss), kInvSqrt6 * (ll + mm - 2.0 * ss), kInvSqrt2 * (ll - mm)};
}

std::array<double, 3> lab_to_rgb_pixel(double l, double alpha, double beta) noexcept {
  const double a = l * kInvSqrt3;
  const double b = alpha * kInvSqrt6;
  const double c = beta * kInvSqrt2;
  const double lms[3] = {std::pow(10.0, a + b + c), std::pow(10.0, a + b - c),
                         std::pow(10.0, a - 2.0 * b)};
  const auto& m = chain().lms_to_rgb;
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i)
    rgb[i] = std::clamp(m[i][0] * lms[0] + m[i][1] * lms[1] + m[i][2] * lms[2], 0.0, 1.0);
  return rgb;
}

LabImage rgb_to_lab(const ImageU8& img) { return rgb_to_lab_impl(img, 1.0 / 255.0); }
LabImage rgb_to_lab(const ImageF& img) { return rgb_to_lab_impl(img, 1.0); }

ImageF lab_to_rgb(const LabImage& lab) {
  if (lab.alpha.size() != lab.pixel_count() || lab.beta.size() != lab.pixel_count() ||
      lab.pixel_count() != static_cast<std::size_t>(lab.width) * lab.height)
    throw DimensionError("lab planes do not match image size");
  ImageF out(lab.width, lab.height, 3);
  auto dst = out.data();
  for (std::size_t i = 0; i < lab.pixel_count(); ++i) {
    const auto rgb = lab_to_rgb_pixel(lab.l[i], lab.alpha[i], lab.beta[i]);
    for (int c = 0; c < 3; ++c) dst[3 * i + c] = static_cast<float>(rgb[c]);
  }
  return out;
}

}  // namespace caustics
