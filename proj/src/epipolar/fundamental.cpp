#include "caustics/fundamental.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace caustics {

namespace {

constexpr int kMinPoints = 8;

// Hartley normalization: centroid to the origin, mean distance sqrt(2).
Mat3 normalizing_transform(std::span<const Point2> pts) {
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double md = 0.0;
  for (const auto& p : pts) md += std::hypot(p.x - mx, p.y - my);
  md /= static_cast<double>(pts.size());
  const double s = md > 0.0 ? std::sqrt(2.0) / md : 1.0;
  Mat3 T;
  T << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  return T;
}

// All points (nearly) on one line after normalization.
bool collinear(std::span<const Point2> pts, const Mat3& T) {
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d q(T(0, 0) * p.x + T(0, 2), T(1, 1) * p.y + T(1, 2));
    cov += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov / static_cast<double>(pts.size()));
  return es.eigenvalues()(0) < 1e-8;
}

}  // namespace

Mat3 normalize_fundamental(const Mat3& F) {
  const double n = F.norm();
  if (n == 0.0) return F;
  Mat3 out = F / n;
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  out.cwiseAbs().maxCoeff(&r, &c);
  if (out(r, c) < 0.0) out = -out;
  return out;
}

std::optional<Mat3> eight_point(std::span<const Point2> left, std::span<const Point2> right) {
  if (left.size() != right.size()) throw DimensionError("point lists differ in length");
  if (left.size() < kMinPoints) throw ParameterError("eight_point needs at least 8 correspondences");
  const Mat3 Tl = normalizing_transform(left);
  const Mat3 Tr = normalizing_transform(right);
  if (collinear(left, Tl) || collinear(right, Tr)) return std::nullopt;

  const auto n = static_cast<Eigen::Index>(left.size());
  Eigen::MatrixXd A(std::max<Eigen::Index>(n, 9), 9);
  A.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = left[static_cast<std::size_t>(i)];
    const auto& b = right[static_cast<std::size_t>(i)];
    const double x = Tl(0, 0) * a.x + Tl(0, 2);
    const double y = Tl(1, 1) * a.y + Tl(1, 2);
    const double u = Tr(0, 0) * b.x + Tr(0, 2);
    const double v = Tr(1, 1) * b.y + Tr(1, 2);
    A.row(i) << u * x, u * y, u, v * x, v * y, v, x, y, 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A second (near) null direction means the sample does not pin down F.
  if (sv(7) <= 1e-9 * sv(0)) return std::nullopt;
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 Fn;
  Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  Eigen::JacobiSVD<Mat3> s2(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d = s2.singularValues();
  d(2) = 0.0;
  Fn = s2.matrixU() * d.asDiagonal() * s2.matrixV().transpose();

  const Mat3 F = Tr.transpose() * Fn * Tl;
  if (!F.allFinite() || F.norm() == 0.0) return std::nullopt;
  // Denormalization keeps rank 2 in exact arithmetic; truncate again so
  // det(F) stays at rounding level.
  Eigen::JacobiSVD<Mat3> s3(normalize_fundamental(F), Eigen::ComputeFullU | Eigen::ComputeFullV);
  d = s3.singularValues();
  d(2) = 0.0;
  return normalize_fundamental(s3.matrixU() * d.asDiagonal() * s3.matrixV().transpose());
}

double epipolar_distance(const Mat3& F, Point2 left, Point2 right) noexcept {
  const Eigen::Vector3d x(left.x, left.y, 1.0);
  const Eigen::Vector3d xp(right.x, right.y, 1.0);
  const Eigen::Vector3d l2 = F * x;
  const Eigen::Vector3d l1 = F.transpose() * xp;
  const double e = xp.dot(l2);
  const double n2 = std::hypot(l2(0), l2(1));
  const double n1 = std::hypot(l1(0), l1(1));
  if (n1 == 0.0 || n2 == 0.0) return std::numeric_limits<double>::infinity();
  return std::max(std::abs(e) / n2, std::abs(e) / n1);
}

double sampson_error(const Mat3& F, Point2 left, Point2 right) noexcept {
  const Eigen::Vector3d x(left.x, left.y, 1.0);
  const Eigen::Vector3d xp(right.x, right.y, 1.0);
  const Eigen::Vector3d l2 = F * x;
  const Eigen::Vector3d l1 = F.transpose() * xp;
  const double den = l2(0) * l2(0) + l2(1) * l2(1) + l1(0) * l1(0) + l1(1) * l1(1);
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(xp.dot(l2)) / std::sqrt(den);
}

namespace {

// Rank-2 parameters of a normalized F: two free columns plus the weights that
// rebuild the dependent column `dep` from them.
struct RankTwo {
  int dep = 2;
  int a = 0;
  int b = 1;

  explicit RankTwo(const Mat3& F) {
    Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullV);
    svd.matrixV().col(2).cwiseAbs().maxCoeff(&dep);
    a = dep == 0 ? 1 : 0;
    b = dep == 2 ? 1 : 2;
  }

  Eigen::Matrix<double, 8, 1> pack(const Mat3& F) const {
    Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullV);
    const Eigen::Vector3d e = svd.matrixV().col(2);
    Eigen::Matrix<double, 8, 1> p;
    p << F.col(a), F.col(b), -e(a) / e(dep), -e(b) / e(dep);
    return p;
  }

  Mat3 unpack(const Eigen::Matrix<double, 8, 1>& p) const {
    Mat3 F;
    F.col(a) = p.segment<3>(0);
    F.col(b) = p.segment<3>(3);
    F.col(dep) = p(6) * F.col(a) + p(7) * F.col(b);
    return F;
  }
};

}  // namespace

Mat3 refine_fundamental(const Mat3& F, std::span<const Point2> left, std::span<const Point2> right,
                        double robust_scale, int max_iterations) {
  if (left.size() != right.size()) throw DimensionError("point lists differ in length");
  if (left.size() < kMinPoints) return F;
  // work on the normalized problem so the parameters are of comparable size
  const Mat3 Tl = normalizing_transform(left);
  const Mat3 Tr = normalizing_transform(right);
  const Mat3 Fn0 = normalize_fundamental(Tr.transpose().inverse() * F * Tl.inverse());
  const RankTwo shape(Fn0);
  const auto n = static_cast<Eigen::Index>(left.size());

  auto residuals = [&](const Eigen::Matrix<double, 8, 1>& p) {
    const Mat3 Fp = Tr.transpose() * shape.unpack(p) * Tl;
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& pl = left[static_cast<std::size_t>(i)];
      const auto& pr = right[static_cast<std::size_t>(i)];
      const Eigen::Vector3d x(pl.x, pl.y, 1.0);
      const Eigen::Vector3d xp(pr.x, pr.y, 1.0);
      const Eigen::Vector3d l2 = Fp * x;
      const Eigen::Vector3d l1 = Fp.transpose() * xp;
      const double den = std::sqrt(l2(0) * l2(0) + l2(1) * l2(1) + l1(0) * l1(0) + l1(1) * l1(1));
      r(i) = den > 0.0 ? xp.dot(l2) / den : 0.0;
      if (robust_scale > 0.0) {
        const double u = r(i) / robust_scale;
        r(i) = std::copysign(robust_scale * std::sqrt(std::log1p(u * u)), u);
      }
    }
    return r;
  };

  Eigen::Matrix<double, 8, 1> p = shape.pack(Fn0);
  Eigen::VectorXd r = residuals(p);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  Eigen::MatrixXd J(n, 8);
  for (int it = 0; it < max_iterations; ++it) {
    for (int k = 0; k < 8; ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(p(k)));
      Eigen::Matrix<double, 8, 1> hi = p;
      Eigen::Matrix<double, 8, 1> lo = p;
      hi(k) += h;
      lo(k) -= h;
      J.col(k) = (residuals(hi) - residuals(lo)) / (2.0 * h);
    }
    const Eigen::Matrix<double, 8, 8> JtJ = J.transpose() * J;
    const Eigen::Matrix<double, 8, 1> g = J.transpose() * r;
    bool improved = false;
    while (lambda < 1e10) {
      Eigen::Matrix<double, 8, 8> A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 8, 1> step = A.ldlt().solve(-g);
      const Eigen::Matrix<double, 8, 1> q = p + step;
      const Eigen::VectorXd rq = residuals(q);
      const double c = rq.squaredNorm();
      if (std::isfinite(c) && c < cost) {
        const double gain = (cost - c) / std::max(cost, 1e-300);
        p = q;
        r = rq;
        cost = c;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = gain > 1e-12;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  const Mat3 out = Tr.transpose() * shape.unpack(p) * Tl;
  return out.allFinite() && out.norm() > 0.0 ? normalize_fundamental(out) : F;
}

namespace {

// MSAC: inliers cost their squared distance, everything else the squared threshold.
struct Consensus {
  std::size_t count = 0;
  double score = std::numeric_limits<double>::infinity();
};

Consensus classify(const Mat3& F, std::span<const Point2> l, std::span<const Point2> r, double thr,
                   std::vector<std::uint8_t>& flags) {
  Consensus c{0, 0.0};
  flags.resize(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double d = epipolar_distance(F, l[i], r[i]);
    flags[i] = d <= thr;
    c.count += flags[i];
    c.score += flags[i] ? d * d : thr * thr;
  }
  return c;
}

// Fits to the selected points, then alternates re-classification and refits
// on the consensus while the score improves.
void refit(RansacResult& best, Consensus& score, std::vector<std::uint8_t> use, std::span<const Point2> left,
           std::span<const Point2> right, double thr) {
  std::vector<std::uint8_t> flags;
  std::vector<Point2> il;
  std::vector<Point2> ir;
  for (int round = 0; round < 10; ++round) {
    il.clear();
    ir.clear();
    for (std::size_t i = 0; i < left.size(); ++i)
      if (use[i]) {
        il.push_back(left[i]);
        ir.push_back(right[i]);
      }
    if (il.size() < kMinPoints) return;
    const auto F8 = eight_point(il, ir);
    if (!F8) return;
    const Mat3 F = refine_fundamental(*F8, il, ir, thr / 2.0);
    const Consensus c = classify(F, left, right, thr, flags);
    if (!(c.score < score.score)) return;
    best.F = F;
    best.inliers = flags;
    best.inlier_count = c.count;
    score = c;
    if (flags == use) return;
    use = flags;
  }
}

// Local optimization: the whole consensus first, then random quarters of it,
// which can leave a local optimum that absorbed a few outliers.
void polish(RansacResult& best, Consensus& score, std::span<const Point2> left, std::span<const Point2> right,
            double thr, std::mt19937_64& rng) {
  refit(best, score, best.inliers, left, right, thr);
  constexpr int kInner = 20;
  for (int rep = 0; rep < kInner; ++rep) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < left.size(); ++i)
      if (best.inliers[i]) members.push_back(i);
    const std::size_t take = std::max<std::size_t>(kMinPoints * 2, members.size() / 4);
    if (members.size() <= take) return;
    std::vector<std::uint8_t> use(left.size(), 0);
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng() % (members.size() - k));
      std::swap(members[k], members[j]);
      use[members[k]] = 1;
    }
    refit(best, score, std::move(use), left, right, thr);
  }
}

int required_iterations(double confidence, double inlier_ratio, int cap) {
  const double w8 = std::pow(inlier_ratio, kMinPoints);
  if (w8 <= std::numeric_limits<double>::min()) return cap;
  if (w8 >= 1.0) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - w8);
  if (!std::isfinite(n) || n > cap) return cap;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

}  // namespace

RansacResult ransac_fundamental(std::span<const Point2> left, std::span<const Point2> right, const RansacOptions& opt) {
  if (left.size() != right.size()) throw DimensionError("point lists differ in length");
  if (left.size() < kMinPoints) throw ParameterError("RANSAC needs at least 8 correspondences");
  if (!(opt.threshold_px > 0.0)) throw ParameterError("threshold_px must be positive");
  if (!(opt.confidence > 0.0 && opt.confidence < 1.0)) throw ParameterError("confidence must lie in (0, 1)");
  if (opt.max_iterations < 1) throw ParameterError("max_iterations must be positive");

  const std::size_t n = left.size();
  std::mt19937_64 rng(opt.seed);
  RansacResult best;
  Consensus score;
  std::vector<std::uint8_t> flags;
  std::array<Point2, kMinPoints> sl;
  std::array<Point2, kMinPoints> sr;
  std::array<std::size_t, kMinPoints> idx{};
  int needed = opt.max_iterations;
  int it = 0;
  for (; it < needed && it < opt.max_iterations; ++it) {
    // distinct indices, raw engine output for portability
    for (int k = 0; k < kMinPoints; ++k) {
      std::size_t c;
      do {
        c = static_cast<std::size_t>(rng() % n);
      } while (std::find(idx.begin(), idx.begin() + k, c) != idx.begin() + k);
      idx[static_cast<std::size_t>(k)] = c;
      sl[static_cast<std::size_t>(k)] = left[c];
      sr[static_cast<std::size_t>(k)] = right[c];
    }
    const auto F = eight_point(sl, sr);
    if (!F) continue;
    const Consensus c = classify(*F, left, right, opt.threshold_px, flags);
    if (c.score < score.score) {
      best.F = *F;
      best.inliers = flags;
      best.inlier_count = c.count;
      score = c;
      // a minimal sample is noisy; refit on its consensus before judging it (local optimization)
      polish(best, score, left, right, opt.threshold_px, rng);
      needed = required_iterations(opt.confidence, static_cast<double>(best.inlier_count) / static_cast<double>(n),
                                   opt.max_iterations);
    }
  }
  best.iterations = it;
  if (best.inlier_count < kMinPoints) throw GeometryError("RANSAC found no consistent fundamental matrix");

  return best;
}

RansacResult ransac_fundamental(MatchSet& matches, std::span<const Point2> left_points,
                                std::span<const Point2> right_points, const RansacOptions& opt) {
  std::vector<Point2> l;
  std::vector<Point2> r;
  for (const auto& m : matches.matches) {
    l.push_back(left_points[static_cast<std::size_t>(m.left)]);
    r.push_back(right_points[static_cast<std::size_t>(m.right)]);
  }
  auto res = ransac_fundamental(l, r, opt);
  matches.inliers = res.inliers;
  return res;
}

Eigen::Vector3d epipole_in_left(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullV);
  return svd.matrixV().col(2);
}

Eigen::Vector3d epipole_in_right(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU);
  return svd.matrixU().col(2);
}

}  // namespace caustics
