#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "caustics/calibration.hpp"
#include "caustics/color.hpp"
#include "caustics/filters.hpp"
#include "caustics/image_io.hpp"

using namespace caustics;

namespace {

// Straight-line lαβ conversion written out step by step (RGB -> XYZ -> LMS ->
// log10 -> lαβ), kept apart from the library path it checks.
std::array<double, 3> lab_oracle(double r, double g, double b) {
  const double X = 0.5141 * r + 0.3239 * g + 0.1604 * b;
  const double Y = 0.2651 * r + 0.6702 * g + 0.0641 * b;
  const double Z = 0.0241 * r + 0.1228 * g + 0.8444 * b;
  const double L = 0.3897 * X + 0.6890 * Y - 0.0787 * Z;
  const double M = -0.2298 * X + 1.1834 * Y + 0.0464 * Z;
  const double S = Z;
  const double lg[3] = {std::log10(std::max(L, 1.0 / 255)), std::log10(std::max(M, 1.0 / 255)),
                        std::log10(std::max(S, 1.0 / 255))};
  return {(lg[0] + lg[1] + lg[2]) / std::sqrt(3.0), (lg[0] + lg[1] - 2 * lg[2]) / std::sqrt(6.0),
          (lg[0] - lg[1]) / std::sqrt(2.0)};
}

ImageF random_image(int w, int h, int ch, std::mt19937& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageF img(w, h, ch);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("rgb_to_lab keeps gray neutral") {
  ImageF gray(4, 4, 3, 0.5f);
  const auto lab = rgb_to_lab(gray);
  for (std::size_t i = 0; i < lab.pixel_count(); ++i) {
    CHECK(std::abs(lab.alpha[i]) <= 0.02);
    CHECK(std::abs(lab.beta[i]) <= 0.02);
  }
  for (int level = 0; level <= 255; ++level) {
    const auto v = rgb_to_lab_pixel(level / 255.0, level / 255.0, level / 255.0);
    CHECK(std::abs(v[1]) <= 0.02);
    CHECK(std::abs(v[2]) <= 0.02);
  }
}

TEST_CASE("rgb_to_lab on black stays finite") {
  ImageU8 black(1, 1, 3, 0);
  const auto lab = rgb_to_lab(black);
  CHECK(std::isfinite(lab.l[0]));
  CHECK(std::isfinite(lab.alpha[0]));
  CHECK(std::isfinite(lab.beta[0]));
}

TEST_CASE("rgb_to_lab matches the scalar oracle") {
  ImageU8 img(2, 2, 3);
  const std::uint8_t values[12] = {12, 200, 33, 255, 0, 128, 90, 90, 240, 7, 64, 180};
  std::copy(std::begin(values), std::end(values), img.data().begin());
  const auto lab = rgb_to_lab(img);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto o = lab_oracle(values[3 * i] / 255.0, values[3 * i + 1] / 255.0, values[3 * i + 2] / 255.0);
    CHECK(std::abs(lab.l[i] - o[0]) <= 1e-5);
    CHECK(std::abs(lab.alpha[i] - o[1]) <= 1e-5);
    CHECK(std::abs(lab.beta[i] - o[2]) <= 1e-5);
  }
}

TEST_CASE("rgb_to_lab rejects single-channel input") {
  ImageU8 gray(3, 3, 1);
  CHECK_THROWS_AS(rgb_to_lab(gray), DimensionError);
}

TEST_CASE("lab round trip on random in-gamut triples") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double rgb[3] = {u(rng), u(rng), u(rng)};
    const auto lab = rgb_to_lab_pixel(rgb[0], rgb[1], rgb[2]);
    const auto back = lab_to_rgb_pixel(lab[0], lab[1], lab[2]);
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back[c] - rgb[c]));
  }
  CHECK(worst <= 2.0 / 255.0);
}

TEST_CASE("lab_to_rgb of a zero plane is constant and clamped") {
  LabImage lab(3, 2);
  const auto rgb = lab_to_rgb(lab);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) CHECK(rgb.at(x, y, c) == rgb.at(0, 0, c));

  LabImage wild(2, 1);
  wild.l = {5.0f, -9.0f};
  wild.alpha = {3.0f, -4.0f};
  wild.beta = {-2.0f, 6.0f};
  const auto clamped = lab_to_rgb(wild);
  for (float v : clamped.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("gaussian_blur") {
  SUBCASE("constant image unchanged") {
    ImageF img(9, 7, 3, 0.25f);
    const auto out = gaussian_blur(img, 5);
    for (float v : out.data()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));
  }
  SUBCASE("impulse response equals the 2-D kernel weight") {
    ImageF img(7, 7, 1, 0.0f);
    img.at(3, 3) = 1.0f;
    const auto out = gaussian_blur(img, 3, 1.0);
    double total = 0.0;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) total += std::exp(-(i * i + j * j) / 2.0);
    CHECK(out.at(3, 3) == doctest::Approx(1.0 / total).epsilon(1e-6));
  }
  SUBCASE("even kernel rejected") {
    ImageF img(5, 5, 1);
    CHECK_THROWS_AS(gaussian_blur(img, 4), ParameterError);
  }
  SUBCASE("default sigma formula") { CHECK(default_gaussian_sigma(5) == doctest::Approx(1.1)); }
}

TEST_CASE("gaussian_blur preserves the mean of interior-dominated images") {
  std::mt19937 rng(11);
  for (int kernel : {3, 5, 7}) {
    const int r = kernel / 2;
    ImageF img = random_image(64, 64, 1, rng);
    // A constant frame at least one kernel radius wide keeps all of the
    // interior mass inside the image.
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (x < r || y < r || x >= 64 - r || y >= 64 - r) img.at(x, y) = 0.5f;
    const auto out = gaussian_blur(img, kernel);
    double before = 0.0;
    double after = 0.0;
    for (float v : img.data()) before += v;
    for (float v : out.data()) after += v;
    CHECK(std::abs(before - after) / img.pixel_count() <= 1e-4);
  }
}

TEST_CASE("median_filter") {
  SUBCASE("constant unchanged") {
    ImageF img(6, 5, 1, 3.0f);
    CHECK(median_filter(img, 3) == img);
  }
  SUBCASE("salt removed") {
    ImageF img(7, 7, 1, 0.2f);
    img.at(3, 3) = 1.0f;
    CHECK(median_filter(img, 3).at(3, 3) == doctest::Approx(0.2f));
  }
  SUBCASE("3x3 values against exhaustive sort") {
    ImageF img(3, 3, 1);
    const float values[9] = {9, 1, 7, 3, 8, 2, 6, 4, 5};
    std::copy(std::begin(values), std::end(values), img.data().begin());
    const auto out = median_filter(img, 3);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) {
        std::vector<float> win;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            win.push_back(img.at(std::clamp(x + dx, 0, 2), std::clamp(y + dy, 0, 2)));
        std::sort(win.begin(), win.end());
        CHECK(out.at(x, y) == win[4]);
      }
    }
  }
  SUBCASE("even window rejected") {
    ImageF img(3, 3, 1);
    CHECK_THROWS_AS(median_filter(img, 2), ParameterError);
  }
}

TEST_CASE("canny_edges") {
  SUBCASE("constant image has no edges") {
    ImageF img(16, 16, 1, 0.4f);
    const auto edges = canny_edges(img, 0.1, 0.3);
    for (auto v : edges.data()) CHECK(v == 0);
  }
  SUBCASE("vertical step gives one vertical line") {
    ImageF img(20, 12, 1, 0.0f);
    for (int y = 0; y < 12; ++y)
      for (int x = 10; x < 20; ++x) img.at(x, y) = 1.0f;
    const auto edges = canny_edges(img, 0.5, 1.0);
    for (int y = 0; y < 12; ++y) {
      int count = 0;
      int column = -1;
      for (int x = 0; x < 20; ++x)
        if (edges.at(x, y)) {
          ++count;
          column = x;
        }
      CHECK(count == 1);
      CHECK((column == 9 || column == 10));
    }
  }
  SUBCASE("lower low threshold never removes edges on noise") {
    std::mt19937 rng(3);
    const auto img = random_image(40, 40, 1, rng);
    const auto loose = canny_edges(img, 0.0, 1.5);
    const auto strict = canny_edges(img, 1.0, 1.5);
    std::size_t n_loose = 0;
    std::size_t n_strict = 0;
    for (std::size_t i = 0; i < loose.data().size(); ++i) {
      n_loose += loose.data()[i] != 0;
      n_strict += strict.data()[i] != 0;
      if (strict.data()[i]) CHECK(loose.data()[i]);
    }
    CHECK(n_loose > n_strict);
  }
  SUBCASE("low >= high rejected") {
    ImageF img(4, 4, 1);
    CHECK_THROWS_AS(canny_edges(img, 0.5, 0.5), ParameterError);
  }
}

TEST_CASE("normalize_minmax") {
  SUBCASE("three values") {
    ImageF img(3, 1, 1, std::vector<float>{10, 20, 30});
    const auto out = normalize_minmax(img);
    CHECK_FALSE(out.degenerate);
    CHECK(out.image.at(0, 0) == 0);
    CHECK(out.image.at(1, 0) == 128);
    CHECK(out.image.at(2, 0) == 255);
  }
  SUBCASE("full-range image unchanged") {
    ImageF img(4, 1, 1, std::vector<float>{0, 17, 200, 255});
    const auto out = normalize_minmax(img);
    CHECK(out.image.data()[1] == 17);
    CHECK(out.image.data()[2] == 200);
  }
  SUBCASE("constant image is degenerate") {
    ImageF img(5, 5, 1, 3.0f);
    const auto out = normalize_minmax(img);
    CHECK(out.degenerate);
    for (auto v : out.image.data()) CHECK(v == 0);
  }
  SUBCASE("random inputs attain both ends") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto img = random_image(9, 7, 3, rng);
      const auto normalized = normalize_minmax(img);
      const auto out = normalized.image.data();
      CHECK(*std::min_element(out.begin(), out.end()) == 0);
      CHECK(*std::max_element(out.begin(), out.end()) == 255);
    }
  }
}

TEST_CASE("filters are pure") {
  std::mt19937 rng(9);
  const auto img = random_image(32, 24, 1, rng);
  CHECK(gaussian_blur(img, 5) == gaussian_blur(img, 5));
  CHECK(median_filter(img, 5) == median_filter(img, 5));
  CHECK(canny_edges(img, 0.2, 0.8) == canny_edges(img, 0.2, 0.8));
}

namespace {

CameraCalibration grid_calibration() {
  CameraCalibration c;
  c.fx = c.fy = 150.0;
  c.cx = 100.0;
  c.cy = 75.0;
  c.width = 200;
  c.height = 150;
  return c;
}

// Mean RMS residual of straight-line fits to the horizontal grid lines.
double line_fit_residual(const ImageU8& img, const std::vector<double>& line_rows) {
  double total = 0.0;
  for (double row : line_rows) {
    std::vector<std::pair<double, double>> pts;
    for (int x = 20; x < img.width() - 20; ++x) {
      double wsum = 0.0;
      double ysum = 0.0;
      for (int y = static_cast<int>(row) - 10; y <= static_cast<int>(row) + 10; ++y) {
        const double v = img.at(x, y, 0);
        if (v < 50) continue;
        wsum += v;
        ysum += v * y;
      }
      if (wsum > 0) pts.emplace_back(x, ysum / wsum);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double b = (sy - a * sx) / n;
    double rss = 0.0;
    for (auto [x, y] : pts) rss += (y - a * x - b) * (y - a * x - b);
    total += std::sqrt(rss / n);
  }
  return total / static_cast<double>(line_rows.size());
}

}  // namespace

TEST_CASE("undistort") {
  SUBCASE("zero coefficients is the identity") {
    std::mt19937 rng(1);
    ImageU8 img(200, 150, 3);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng() & 0xff);
    const auto out = undistort(img, grid_calibration());
    CHECK(out.image == img);
    for (auto v : out.valid.data()) CHECK(v == 1);
  }
  SUBCASE("radial distortion straightens grid lines") {
    auto calib = grid_calibration();
    calib.k1 = 0.1;
    const std::vector<double> rows = {25, 50, 75, 100, 125};
    ImageU8 observed(200, 150, 1);
    for (int v = 0; v < 150; ++v) {
      for (int u = 0; u < 200; ++u) {
        const double y = calib.undistort({static_cast<double>(u), static_cast<double>(v)}).y;
        double best = 1e9;
        for (double r : rows) best = std::min(best, std::abs(y - r));
        observed.at(u, v) = round_to_u8(255.0 * std::exp(-best * best / (2 * 1.2 * 1.2)));
      }
    }
    const double before = line_fit_residual(observed, rows);
    const double after = line_fit_residual(undistort(observed, calib).image, rows);
    INFO("before " << before << " after " << after);
    CHECK(before > 0.1);
    CHECK(after < before * 0.25);
  }
  SUBCASE("non-positive focal length rejected") {
    auto j = grid_calibration().to_json();
    j["fx"] = 0.0;
    CHECK_THROWS_AS(CameraCalibration::from_json(j), ParameterError);
  }
  SUBCASE("unknown calibration key rejected") {
    auto j = grid_calibration().to_json();
    j["skew"] = 0.0;
    CHECK_THROWS_AS(CameraCalibration::from_json(j), ParameterError);
  }
  SUBCASE("distort and undistort are inverse") {
    auto calib = grid_calibration();
    calib.k1 = 0.08;
    calib.k2 = -0.02;
    calib.p1 = 0.001;
    calib.p2 = -0.002;
    for (double x = 0; x < 200; x += 37)
      for (double y = 0; y < 150; y += 29) {
        const auto back = calib.undistort(calib.distort({x, y}));
        CHECK(back.x == doctest::Approx(x).epsilon(1e-6));
        CHECK(back.y == doctest::Approx(y).epsilon(1e-6));
      }
  }
}

TEST_CASE("png and mask round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "caustics_io_test";
  std::filesystem::create_directories(dir);
  ImageU8 img(5, 4, 3);
  std::uint8_t v = 0;
  for (auto& s : img.data()) s = v += 13;
  write_png(dir / "img.png", img);
  CHECK(read_image(dir / "img.png") == img);

  BinaryMask mask(5, 4);
  mask.set(1, 2, Label::Caustics);
  write_mask(dir / "mask.png", mask);
  CHECK(read_mask(dir / "mask.png") == mask);

  ImageF pf(3, 2, 1, std::vector<float>{1.5f, -2.0f, 0.25f, 8.0f, 3.0f, 0.0f});
  write_pfm(dir / "d.pfm", pf);
  CHECK(read_pfm(dir / "d.pfm") == pf);

  ImageU8 bad(2, 1, 1, std::vector<std::uint8_t>{0, 77});
  CHECK_THROWS_AS(BinaryMask::from_raster(bad), DimensionError);
  std::filesystem::remove_all(dir);
}
