#include <algorithm>
#include <cmath>

#include "caustics/image_io.hpp"
#include "caustics/stereo.hpp"

namespace caustics {

ImageF disparity_to_image(const DisparityMap& disp) { return ImageF(disp.width, disp.height, 1, disp.disparity); }

void write_disparity_png16(const std::filesystem::path& path, const DisparityMap& disp) {
  Image<std::uint16_t> img(disp.width, disp.height, 1);
  for (int y = 0; y < disp.height; ++y)
    for (int x = 0; x < disp.width; ++x)
      if (disp.valid(x, y))
        img.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::lround(16.0 * disp.at(x, y)), 0L, 65535L));
  write_png16(path, img);
}

void write_status_png(const std::filesystem::path& path, const DisparityMap& disp) {
  ImageU8 img(disp.width, disp.height, 1);
  for (int y = 0; y < disp.height; ++y)
    for (int x = 0; x < disp.width; ++x) {
      const auto s = disp.status_at(x, y);
      img.at(x, y) = s == DisparityStatus::Valid ? 255 : s == DisparityStatus::Mismatched ? 128 : 0;
    }
  write_png(path, img);
}

void write_disparity_pfm(const std::filesystem::path& path, const DisparityMap& disp) {
  write_pfm(path, disparity_to_image(disp));
}

DisparityMap read_disparity_pfm(const std::filesystem::path& path, int d_min, int d_max) {
  const ImageF img = read_pfm(path);
  DisparityMap out(img.width(), img.height(), d_min, d_max);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (std::isfinite(img.at(x, y))) out.set(x, y, img.at(x, y));
  return out;
}

}  // namespace caustics
