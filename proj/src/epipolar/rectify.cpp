#include "caustics/rectify.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace caustics {

namespace {

using Vec3 = Eigen::Vector3d;

Mat3 cross_matrix(const Vec3& e) {
  Mat3 m;
  m << 0, -e(2), e(1), e(2), 0, -e(0), -e(1), e(0), 0;
  return m;
}

bool epipole_inside(const Vec3& e, Size s) {
  if (std::abs(e(2)) < 1e-12 * e.head<2>().norm()) return false;
  const double x = e(0) / e(2);
  const double y = e(1) / e(2);
  return x >= 0.0 && x <= s.width - 1.0 && y >= 0.0 && y <= s.height - 1.0;
}

std::array<Vec3, 4> corners(Size s) {
  const double W = s.width - 1.0;
  const double H = s.height - 1.0;
  return {Vec3(0, 0, 1), Vec3(W, 0, 1), Vec3(W, H, 1), Vec3(0, H, 1)};
}

Vec3 dehomog(const Vec3& v) { return v / v(2); }

// Quadratic forms of the projective-distortion criterion for one image, with
// M mapping the direction z to that image's line through the epipole.
struct DistortionTerms {
  Mat3 A;
  Mat3 B;
};

DistortionTerms distortion_terms(const Mat3& M, Size s) {
  const double w = s.width;
  const double h = s.height;
  Mat3 PPt = Mat3::Zero();
  PPt(0, 0) = w * h / 12.0 * (w * w - 1.0);
  PPt(1, 1) = w * h / 12.0 * (h * h - 1.0);
  const Vec3 pc((w - 1.0) / 2.0, (h - 1.0) / 2.0, 1.0);
  return {M.transpose() * PPt * M, M.transpose() * pc * pc.transpose() * M};
}

// w . p keeps one sign over the image: the projective map does not fold it.
bool keeps_sign(const Vec3& w, Size s) {
  int pos = 0;
  int neg = 0;
  for (const auto& c : corners(s)) {
    const double v = w.dot(c);
    pos += v > 0.0;
    neg += v <= 0.0;
  }
  return pos == 4 || neg == 4;
}

struct ProjectiveChoice {
  Vec3 w;
  Vec3 wp;
  double cost;
};

std::optional<ProjectiveChoice> evaluate(double theta, const Mat3& ex, const Mat3& F, const DistortionTerms& l,
                                         const DistortionTerms& r, Size ls, Size rs) {
  const Vec3 z(std::cos(theta), std::sin(theta), 0.0);
  Vec3 w = ex * z;
  Vec3 wp = F * z;
  if (std::abs(w(2)) < 1e-12 * w.norm() || std::abs(wp(2)) < 1e-12 * wp.norm()) return std::nullopt;
  const double bl = z.dot(l.B * z);
  const double br = z.dot(r.B * z);
  if (bl <= 0.0 || br <= 0.0) return std::nullopt;
  w /= w(2);
  wp /= wp(2);
  if (!keeps_sign(w, ls) || !keeps_sign(wp, rs)) return std::nullopt;
  return ProjectiveChoice{w, wp, z.dot(l.A * z) / bl + z.dot(r.A * z) / br};
}

Mat3 shear_for(const Mat3& T, Size s) {
  const double W = s.width - 1.0;
  const double H = s.height - 1.0;
  const Vec3 a = dehomog(T * Vec3(W / 2.0, 0.0, 1.0));
  const Vec3 b = dehomog(T * Vec3(W, H / 2.0, 1.0));
  const Vec3 c = dehomog(T * Vec3(W / 2.0, H, 1.0));
  const Vec3 d = dehomog(T * Vec3(0.0, H / 2.0, 1.0));
  const Vec3 x = b - d;
  const Vec3 y = c - a;
  const double den = H * W * (x(1) * y(0) - x(0) * y(1));
  if (std::abs(den) < 1e-12) throw GeometryError("rectification: degenerate shear");
  double sa = (H * H * x(1) * x(1) + W * W * y(1) * y(1)) / den;
  double sb = (H * H * x(0) * x(1) + W * W * y(0) * y(1)) / -den;
  if (sa < 0.0) {
    sa = -sa;
    sb = -sb;
  }
  Mat3 S = Mat3::Identity();
  S(0, 0) = sa;
  S(0, 1) = sb;
  return S;
}

double polygon_area(const Mat3& H, Size s) {
  std::array<Vec3, 4> p;
  const auto c = corners(s);
  for (int i = 0; i < 4; ++i) p[static_cast<std::size_t>(i)] = dehomog(H * c[static_cast<std::size_t>(i)]);
  double a = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& q = p[i];
    const auto& r = p[(i + 1) % 4];
    a += q(0) * r(1) - r(0) * q(1);
  }
  return std::abs(a) / 2.0;
}

Mat3 checked_inverse(const Mat3& H) {
  const double scale = H.norm();
  if (!H.allFinite() || scale == 0.0 || std::abs(H.determinant()) < 1e-12 * scale * scale * scale)
    throw GeometryError("homography is singular");
  return H.inverse();
}

}  // namespace

Point2 apply_homography(const Mat3& H, Point2 p) noexcept {
  const Vec3 q = H * Vec3(p.x, p.y, 1.0);
  return {q(0) / q(2), q(1) / q(2)};
}

RectifyingPair rectify_pair(const Mat3& F_in, Size ls, Size rs) {
  if (ls.width < 2 || ls.height < 2 || rs.width < 2 || rs.height < 2)
    throw ParameterError("rectification: image sizes must be at least 2x2");
  if (!F_in.allFinite() || F_in.norm() == 0.0) throw ParameterError("rectification: invalid fundamental matrix");
  const Mat3 F = normalize_fundamental(F_in);
  const Vec3 e = epipole_in_left(F);
  const Vec3 ep = epipole_in_right(F);
  if (epipole_inside(e, ls) || epipole_inside(ep, rs))
    throw GeometryError("rectification undefined: epipole inside the image");

  const Mat3 ex = cross_matrix(e);
  const auto tl = distortion_terms(ex, ls);
  const auto tr = distortion_terms(F, rs);

  constexpr int kSamples = 3600;
  std::optional<ProjectiveChoice> best;
  double best_theta = 0.0;
  for (int i = 0; i < kSamples; ++i) {
    const double th = std::numbers::pi * i / kSamples;
    const auto c = evaluate(th, ex, F, tl, tr, ls, rs);
    if (c && (!best || c->cost < best->cost)) {
      best = c;
      best_theta = th;
    }
  }
  if (!best) throw GeometryError("rectification: no projective transform keeps both images unfolded");
  // golden-section polish around the best sample
  {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = best_theta - std::numbers::pi / kSamples;
    double b = best_theta + std::numbers::pi / kSamples;
    auto cost = [&](double th) {
      const auto c = evaluate(th, ex, F, tl, tr, ls, rs);
      return c ? c->cost : std::numeric_limits<double>::infinity();
    };
    for (int it = 0; it < 60; ++it) {
      const double c = b - g * (b - a);
      const double d = a + g * (b - a);
      if (cost(c) < cost(d)) b = d;
      else a = c;
    }
    const auto c = evaluate((a + b) / 2.0, ex, F, tl, tr, ls, rs);
    if (c && c->cost < best->cost) best = c;
  }
  const Vec3& w = best->w;
  const Vec3& wp = best->wp;

  RectifyingPair out;
  auto& L = out.left_parts;
  auto& R = out.right_parts;
  L.projective << 1, 0, 0, 0, 1, 0, w(0), w(1), 1;
  R.projective << 1, 0, 0, 0, 1, 0, wp(0), wp(1), 1;

  // Second rows: v from the last row of F, v' from its last column, so that
  // F is proportional to w' v^T - v' w^T.
  const Vec3 v(F(2, 0), F(2, 1), F(2, 2));
  const Vec3 vp(wp(0) * F(2, 2) - F(0, 2), wp(1) * F(2, 2) - F(1, 2), 0.0);
  const double va = v(0) - v(2) * w(0);
  const double vb = v(1) - v(2) * w(1);
  L.similarity << vb, -va, 0, va, vb, v(2), 0, 0, 1;
  R.similarity << vp(1), -vp(0), 0, vp(0), vp(1), 0, 0, 0, 1;

  L.shear = shear_for(L.similarity * L.projective, ls);
  R.shear = shear_for(R.similarity * R.projective, rs);

  Mat3 Hl = L.shear * L.similarity * L.projective;
  Mat3 Hr = R.shear * R.similarity * R.projective;

  auto direction = [](const Mat3& H, Size s, bool along_x) {
    const double W = s.width - 1.0;
    const double Hh = s.height - 1.0;
    if (along_x) return (dehomog(H * Vec3(W, Hh / 2, 1)) - dehomog(H * Vec3(0, Hh / 2, 1)))(0);
    return (dehomog(H * Vec3(W / 2, Hh, 1)) - dehomog(H * Vec3(W / 2, 0, 1)))(1);
  };
  Mat3 Cl = Mat3::Identity();
  Mat3 Cr = Mat3::Identity();
  if (direction(Hl, ls, true) < 0.0) Cl(0, 0) = -1.0;
  if (direction(Hr, rs, true) < 0.0) Cr(0, 0) = -1.0;
  // a vertical flip has to hit both images or the rows stop matching
  if (direction(Hl, ls, false) < 0.0) {
    Cl(1, 1) = -1.0;
    Cr(1, 1) = -1.0;
  }
  Hl = Cl * Hl;
  Hr = Cr * Hr;

  const double area = polygon_area(Hl, ls);
  if (!(area > 0.0) || !std::isfinite(area)) throw GeometryError("rectification: degenerate left frame");
  const double s = std::sqrt((ls.width - 1.0) * (ls.height - 1.0) / area);
  Mat3 S = Mat3::Identity();
  S(0, 0) = s;
  S(1, 1) = s;

  double minx = std::numeric_limits<double>::infinity();
  double miny = minx;
  double maxx = -minx;
  double maxy = -minx;
  for (const auto& [H, sz] : {std::pair{S * Hl, ls}, std::pair{S * Hr, rs}}) {
    for (const auto& c : corners(sz)) {
      const Vec3 p = dehomog(H * c);
      minx = std::min(minx, p(0));
      maxx = std::max(maxx, p(0));
      miny = std::min(miny, p(1));
      maxy = std::max(maxy, p(1));
    }
  }
  const double limit = 8.0 * std::max({ls.width, ls.height, rs.width, rs.height});
  if (!(maxx - minx < limit) || !(maxy - miny < limit))
    throw GeometryError("rectification: warped frame is unreasonably large");
  Mat3 T = Mat3::Identity();
  T(0, 2) = -std::floor(minx);
  T(1, 2) = -std::floor(miny);
  out.size = {static_cast<int>(std::ceil(maxx) - std::floor(minx)) + 1,
              static_cast<int>(std::ceil(maxy) - std::floor(miny)) + 1};

  L.common = T * S * Cl;
  R.common = T * S * Cr;
  out.H_left = L.common * L.shear * L.similarity * L.projective;
  out.H_right = R.common * R.shear * R.similarity * R.projective;
  checked_inverse(out.H_left);
  checked_inverse(out.H_right);
  return out;
}

Point2 ViewMapping::to_rectified(Point2 original) const noexcept {
  const Point2 ideal = calibration ? calibration->undistort(original) : original;
  return apply_homography(H, ideal);
}

Point2 ViewMapping::to_original(Point2 rectified) const {
  const Point2 ideal = apply_homography(checked_inverse(H), rectified);
  return calibration ? calibration->distort(ideal) : ideal;
}

namespace {

// Calls fn(x, y, source point) for every output pixel whose pre-image lies
// in front of the camera.
template <typename Fn>
void inverse_map(const ViewMapping& map, Size out, Fn&& fn) {
  if (out.width <= 0 || out.height <= 0) throw ParameterError("output size must be positive");
  const Mat3 Hi = checked_inverse(map.H);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const Vec3 p = Hi * Vec3(x, y, 1.0);
      if (!(std::abs(p(2)) > 0.0)) continue;
      Point2 src{p(0) / p(2), p(1) / p(2)};
      if (map.calibration) src = map.calibration->distort(src);
      fn(x, y, src);
    }
  }
}

}  // namespace

WarpedImage warp_image(const ImageU8& img, const ViewMapping& map, Size out) {
  WarpedImage res{ImageU8(out.width, out.height, img.channels()), ValidityMask(out.width, out.height, 1)};
  std::vector<float> sample(static_cast<std::size_t>(img.channels()));
  inverse_map(map, out, [&](int x, int y, Point2 s) {
    if (!sample_bilinear(img, s.x, s.y, sample)) return;
    res.valid.at(x, y) = 1;
    for (int c = 0; c < img.channels(); ++c) res.image.at(x, y, c) = round_to_u8(sample[static_cast<std::size_t>(c)]);
  });
  return res;
}

WarpedImage warp_image(const ImageU8& img, const Mat3& H, Size out) { return warp_image(img, ViewMapping{H, {}}, out); }

WarpedMask warp_mask(const BinaryMask& mask, const ViewMapping& map, Size out) {
  WarpedMask res{BinaryMask(out.width, out.height), ValidityMask(out.width, out.height, 1)};
  inverse_map(map, out, [&](int x, int y, Point2 s) {
    const long ix = std::lround(s.x);
    const long iy = std::lround(s.y);
    if (ix < 0 || iy < 0 || ix >= mask.width() || iy >= mask.height()) return;
    res.valid.at(x, y) = 1;
    res.mask.set(x, y, mask.at(static_cast<int>(ix), static_cast<int>(iy)));
  });
  return res;
}

WarpedMask warp_mask(const BinaryMask& mask, const Mat3& H, Size out) { return warp_mask(mask, ViewMapping{H, {}}, out); }

nlohmann::json matrix_to_json(const Mat3& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) j.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return j;
}

Mat3 matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ParameterError("matrix must be a 3x3 nested array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || row.size() != 3) throw ParameterError("matrix must be a 3x3 nested array");
    for (int c = 0; c < 3; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace caustics
