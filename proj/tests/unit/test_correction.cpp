#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "caustics/correction.hpp"
#include "support/render.hpp"

using namespace caustics;

namespace {

RectifiedBundle blank_bundle(int w, int h, float d) {
  RectifiedBundle b;
  b.left = ImageU8(w, h, 3, 0);
  b.right = ImageU8(w, h, 3, 0);
  b.left_mask = BinaryMask(w, h);
  b.right_mask = BinaryMask(w, h);
  b.left_disparity = DisparityMap(w, h, -64, 64);
  b.right_disparity = DisparityMap(w, h, -64, 64);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      b.left_disparity.set(x, y, d);
      b.right_disparity.set(x, y, d);
    }
  b.left_valid = ValidityMask(w, h, 1, 1);
  b.right_valid = ValidityMask(w, h, 1, 1);
  return b;
}

// Smooth 1-D texture; the pair below is an exact fractional shift of it.
double stripe(double u, int c) { return 120.0 + 70.0 * std::sin(2.0 * std::numbers::pi * u / 26.0 + 0.9 * c); }

void disc(BinaryMask& m, ImageU8* img, int cx, int cy, int r) {
  for (int y = cy - r; y <= cy + r; ++y)
    for (int x = cx - r; x <= cx + r; ++x) {
      if (!m.contains(x, y) || (x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
      m.set(x, y, Label::Caustics);
      if (img)
        for (int c = 0; c < 3; ++c) img->at(x, y, c) = 250;
    }
}

std::size_t caustics_in_valid(const BinaryMask& m, const ValidityMask& v) {
  std::size_t n = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) n += m.is_caustics(x, y) && v.at(x, y) != 0;
  return n;
}

}  // namespace

TEST_CASE("pixel replacement") {
  SUBCASE("clean masks leave the image untouched") {
    std::mt19937_64 rng(3);
    auto b = blank_bundle(40, 20, 3.5f);
    for (auto& v : b.left.data()) v = static_cast<std::uint8_t>(rng());
    for (auto& v : b.right.data()) v = static_cast<std::uint8_t>(rng());
    for (auto dir : {FixDirection::FixLeft, FixDirection::FixRight}) {
      const auto r = replace_pixels(b, dir);
      CHECK(r.image == (dir == FixDirection::FixLeft ? b.left : b.right));
      CHECK(r.report.replaced == 0);
      CHECK(r.report.caustics_pixels == 0);
    }
  }
  SUBCASE("donor column follows the disparity") {
    auto b = blank_bundle(200, 10, 12.0f);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 200; ++x)
        for (int c = 0; c < 3; ++c) {
          b.right.at(x, y, c) = static_cast<std::uint8_t>(x);
          b.left.at(x, y, c) = static_cast<std::uint8_t>(x);
        }
    b.left_mask.set(100, 5, Label::Caustics);
    auto r = replace_pixels(b, FixDirection::FixLeft);
    CHECK(r.image.at(100, 5, 0) == 88);
    CHECK(r.report.replaced == 1);
    b.left_mask.set(100, 5, Label::NonCaustics);
    b.right_mask.set(88, 5, Label::Caustics);
    r = replace_pixels(b, FixDirection::FixRight);
    CHECK(r.image.at(88, 5, 0) == 100);
    CHECK(r.replaced.at(88, 5) == 1);
  }
  SUBCASE("fractional shift of a smooth texture is restored") {
    const int w = 160;
    const int h = 60;
    const float d = 7.3f;
    auto b = blank_bundle(w, h, d);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          b.left.at(x, y, c) = round_to_u8(stripe(x + 0.3 * y, c));
          b.right.at(x, y, c) = round_to_u8(stripe(x + d + 0.3 * y, c));
        }
    const ImageU8 clean_left = b.left;
    const ImageU8 clean_right = b.right;
    disc(b.left_mask, &b.left, 80, 30, 9);
    disc(b.right_mask, &b.right, 40, 25, 7);
    for (auto dir : {FixDirection::FixLeft, FixDirection::FixRight}) {
      const bool fl = dir == FixDirection::FixLeft;
      const auto r = replace_pixels(b, dir);
      const ImageU8& clean = fl ? clean_left : clean_right;
      const BinaryMask& m = fl ? b.left_mask : b.right_mask;
      CHECK(r.report.replaced == m.count(Label::Caustics));
      int worst = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) {
            if (m.is_caustics(x, y)) {
              worst = std::max(worst, std::abs(r.image.at(x, y, c) - clean.at(x, y, c)));
            } else {
              REQUIRE(r.image.at(x, y, c) == (fl ? b.left : b.right).at(x, y, c));
            }
          }
      CHECK(worst <= 2);
    }
  }
  SUBCASE("donors are clean, untouched pixels stay, counts add up") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
      const int w = 50;
      const int h = 12;
      auto b = blank_bundle(w, h, 0.0f);
      for (auto& v : b.left.data()) v = static_cast<std::uint8_t>(rng());
      for (auto& v : b.right.data()) v = static_cast<std::uint8_t>(rng());
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (rng() % 3 == 0) b.left_mask.set(x, y, Label::Caustics);
          if (rng() % 3 == 0) b.right_mask.set(x, y, Label::Caustics);
          if (rng() % 10 == 0) b.left_valid.at(x, y) = 0;
          if (rng() % 10 == 0) b.right_valid.at(x, y) = 0;
          const float dl = static_cast<float>(rng() % 400) / 20.0f - 5.0f;
          const float dr = static_cast<float>(rng() % 400) / 20.0f - 5.0f;
          b.left_disparity.set(x, y, dl);
          b.right_disparity.set(x, y, dr);
          if (rng() % 15 == 0) b.left_disparity.invalidate(x, y, DisparityStatus::Occluded);
        }
      for (auto dir : {FixDirection::FixLeft, FixDirection::FixRight}) {
        const bool fl = dir == FixDirection::FixLeft;
        const auto r = replace_pixels(b, dir);
        const ImageU8& in = fl ? b.left : b.right;
        const BinaryMask& m = fl ? b.left_mask : b.right_mask;
        const BinaryMask& dm = fl ? b.right_mask : b.left_mask;
        const ValidityMask& dv = fl ? b.right_valid : b.left_valid;
        const DisparityMap& disp = fl ? b.left_disparity : b.right_disparity;
        CHECK(r.report.replaced + r.report.unreplaceable == r.report.caustics_pixels);
        CHECK(r.report.caustics_pixels == caustics_in_valid(m, fl ? b.left_valid : b.right_valid));
        std::size_t replaced = 0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            if (r.replaced.at(x, y) == 0) {
              for (int c = 0; c < 3; ++c) REQUIRE(r.image.at(x, y, c) == in.at(x, y, c));
              continue;
            }
            ++replaced;
            REQUIRE(m.is_caustics(x, y));
            const double xs = x + (fl ? -1.0 : 1.0) * disp.at(x, y);
            const long xr = std::lround(xs);
            REQUIRE(xr >= 0);
            REQUIRE(xr < w);
            CHECK_FALSE(dm.is_caustics(static_cast<int>(xr), y));
            CHECK(dv.at(static_cast<int>(xr), y) == 1);
          }
        CHECK(replaced == r.report.replaced);
      }
    }
  }
  SUBCASE("missing rasters are rejected") {
    auto b = blank_bundle(10, 10, 1.0f);
    b.right_disparity = DisparityMap();
    CHECK_THROWS_AS(replace_pixels(b, FixDirection::FixLeft), DimensionError);
    b = blank_bundle(10, 10, 1.0f);
    b.left_mask = BinaryMask(9, 10);
    CHECK_THROWS_AS(replace_pixels(b, FixDirection::FixLeft), DimensionError);
  }
}

TEST_CASE("back projection") {
  std::mt19937_64 rng(5);
  ImageU8 original(60, 40, 3);
  ImageU8 corrected(60, 40, 3);
  for (auto& v : original.data()) v = static_cast<std::uint8_t>(rng());
  for (auto& v : corrected.data()) v = static_cast<std::uint8_t>(rng());

  SUBCASE("nothing replaced means nothing changes") {
    const auto out = back_project(corrected, original, Mat3::Identity(), ValidityMask(60, 40, 1, 0));
    CHECK(out.image == original);
  }
  SUBCASE("identity copies exactly the replaced block") {
    ValidityMask rep(60, 40, 1, 0);
    for (int y = 10; y < 20; ++y)
      for (int x = 5; x < 25; ++x) rep.at(x, y) = 1;
    const auto out = back_project(corrected, original, Mat3::Identity(), rep);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 60; ++x)
        for (int c = 0; c < 3; ++c) CHECK(out.image.at(x, y, c) == (rep.at(x, y) ? corrected : original).at(x, y, c));
    CHECK(out.composited == rep);
  }
  SUBCASE("subpixel translation samples only fully replaced footprints") {
    Mat3 H = Mat3::Identity();
    H(0, 2) = 3.5;  // rectified = original + (3.5, 2)
    H(1, 2) = 2.0;
    ValidityMask rep(60, 40, 1, 0);
    for (int y = 10; y < 20; ++y)
      for (int x = 10; x < 30; ++x) rep.at(x, y) = 1;
    const auto out = back_project(corrected, original, H, rep);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 60; ++x) {
        // footprint columns floor(x + 3.5) and the next one, row y + 2
        const bool inside = x + 3 >= 10 && x + 4 < 30 && y + 2 >= 10 && y + 2 < 20;
        CHECK(out.composited.at(x, y) == (inside ? 1 : 0));
        for (int c = 0; c < 3; ++c) {
          const int expect = inside ? round_to_u8(0.5 * corrected.at(x + 3, y + 2, c) + 0.5 * corrected.at(x + 4, y + 2, c))
                                    : original.at(x, y, c);
          CHECK(out.image.at(x, y, c) == expect);
        }
      }
  }
  SUBCASE("non-caustics pixels of the original mask are never written") {
    ValidityMask rep(60, 40, 1, 1);
    BinaryMask m(60, 40);
    disc(m, nullptr, 30, 20, 6);
    const auto out = back_project(corrected, original, Mat3::Identity(), rep, &m);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 60; ++x)
        for (int c = 0; c < 3; ++c)
          CHECK(out.image.at(x, y, c) == (m.is_caustics(x, y) ? corrected : original).at(x, y, c));
  }
  SUBCASE("singular homography") {
    Mat3 H = Mat3::Zero();
    H(0, 0) = 1.0;
    CHECK_THROWS_AS(back_project(corrected, original, H, ValidityMask(60, 40, 1, 1)), GeometryError);
  }
}

TEST_CASE("conservative mask warp") {
  BinaryMask m(30, 20);
  m.set(10, 10, Label::Caustics);
  SUBCASE("identity keeps the labels") {
    const auto w = warp_mask_conservative(m, ViewMapping{}, {30, 20});
    CHECK(w.mask == m);
  }
  SUBCASE("half-pixel shift widens a single pixel to two") {
    Mat3 H = Mat3::Identity();
    H(0, 2) = 0.5;  // rectified x = original x + 0.5
    const auto w = warp_mask_conservative(m, ViewMapping{H, {}}, {30, 20});
    CHECK(w.mask.count(Label::Caustics) == 2);
    CHECK(w.mask.is_caustics(10, 10));
    CHECK(w.mask.is_caustics(11, 10));
    // validity agrees with the image warp
    const auto wi = warp_image(ImageU8(30, 20, 1, 7), H, {30, 20});
    CHECK(w.valid == wi.valid);
  }
}

TEST_CASE("pair correction") {
  testsupport::SeabedRenderOptions opt;
  const auto scene = testsupport::render_seabed_pair(opt);

  SUBCASE("a pair without caustics is returned unchanged") {
    const BinaryMask clean(opt.width, opt.height);
    const auto r = correct_pair(scene.left_clean, scene.right_clean, clean, clean, std::nullopt);
    CHECK(r.left == scene.left_clean);
    CHECK(r.right == scene.right_clean);
    CHECK(r.report.replaced == 0);
  }
  SUBCASE("featureless images report insufficient matches") {
    const ImageU8 flat(80, 60, 3, 90);
    BinaryMask m(80, 60);
    disc(m, nullptr, 40, 30, 5);
    try {
      (void)correct_pair(flat, flat, m, m, std::nullopt);
      FAIL("expected an error");
    } catch (const PipelineError& e) {
      CHECK(e.stage() == "matching");
      CHECK(std::string(e.what()).find("insufficient matches") != std::string::npos);
    }
  }
  SUBCASE("planted caustics are replaced from the other view") {
    const auto r = correct_pair(scene.left, scene.right, scene.left_mask, scene.right_mask, std::nullopt);
    REQUIRE(r.bundle);
    CHECK(r.matches.inliers >= 8);
    CHECK(r.matches.inliers <= r.matches.cross_checked);

    // exact accounting in rectified space
    for (const auto* rep : {&r.left_report, &r.right_report})
      CHECK(rep->replaced + rep->unreplaceable == rep->caustics_pixels);
    CHECK(r.left_report.caustics_pixels == caustics_in_valid(r.bundle->left_mask, r.bundle->left_valid));
    CHECK(r.right_report.caustics_pixels == caustics_in_valid(r.bundle->right_mask, r.bundle->right_valid));

    for (int view = 0; view < 2; ++view) {
      const auto sc = testsupport::score_replacement(scene, view, view == 0 ? r.left : r.right,
                                                     view == 0 ? r.left_mask : r.right_mask);
      MESSAGE("view " << view << ": fixed " << sc.fixed << " of " << sc.caustics << " eligible " << sc.eligible << " ("
                      << sc.eligible_fixed << " fixed) mean err " << sc.mean_error << " worst " << sc.worst_error);
      CHECK(sc.preserved);
      CHECK(sc.eligible > 500);
      CHECK(sc.eligible_fixed >= 0.95 * static_cast<double>(sc.eligible));
      CHECK(sc.mean_error <= 3.0);
    }
  }
}
