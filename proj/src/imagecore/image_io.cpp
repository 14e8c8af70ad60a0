#include "caustics/image_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace caustics {
namespace {

cv::Mat load(const std::filesystem::path& path, int flags) {
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw IoError("cannot read image " + path.string());
  return m;
}

void store(const std::filesystem::path& path, const cv::Mat& m) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace

ImageU8 read_image(const std::filesystem::path& path) {
  cv::Mat bgr = load(path, cv::IMREAD_COLOR);
  ImageU8 out(bgr.cols, bgr.rows, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* src = bgr.ptr<std::uint8_t>(y);
    auto dst = out.row(y);
    for (int x = 0; x < bgr.cols; ++x) {
      dst[3 * x + 0] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x + 0];
    }
  }
  return out;
}

ImageU8 read_gray(const std::filesystem::path& path) {
  cv::Mat g = load(path, cv::IMREAD_GRAYSCALE);
  ImageU8 out(g.cols, g.rows, 1);
  for (int y = 0; y < g.rows; ++y) std::memcpy(out.row(y).data(), g.ptr<std::uint8_t>(y), g.cols);
  return out;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  cv::Mat m(img.height(), img.width(), img.channels() == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto src = img.row(y);
    auto* dst = m.ptr<std::uint8_t>(y);
    if (img.channels() == 1) {
      std::memcpy(dst, src.data(), src.size());
    } else {
      for (int x = 0; x < img.width(); ++x) {
        dst[3 * x + 0] = src[3 * x + 2];
        dst[3 * x + 1] = src[3 * x + 1];
        dst[3 * x + 2] = src[3 * x + 0];
      }
    }
  }
  store(path, m);
}

void write_png16(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  if (img.channels() != 1) throw DimensionError("16-bit PNG output is single channel");
  cv::Mat m(img.height(), img.width(), CV_16UC1);
  for (int y = 0; y < img.height(); ++y)
    std::memcpy(m.ptr<std::uint16_t>(y), img.row(y).data(), img.row(y).size_bytes());
  store(path, m);
}

Image<std::uint16_t> read_png16(const std::filesystem::path& path) {
  cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (m.depth() != CV_16U) throw IoError(path.string() + " is not a 16-bit image");
  Image<std::uint16_t> out(m.cols, m.rows, 1);
  for (int y = 0; y < m.rows; ++y)
    std::memcpy(out.row(y).data(), m.ptr<std::uint16_t>(y), out.row(y).size_bytes());
  return out;
}

BinaryMask read_mask(const std::filesystem::path& path) { return BinaryMask::from_raster(read_gray(path)); }

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) { write_png(path, mask.to_raster()); }

void write_pfm(const std::filesystem::path& path, const ImageF& img) {
  if (img.channels() != 1) throw DimensionError("PFM output is single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "Pf\n" << img.width() << ' ' << img.height() << "\n-1\n";
  for (int y = img.height() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(img.row(y).data()), static_cast<std::streamsize>(img.row(y).size_bytes()));
  if (!out) throw IoError("cannot write " + path.string());
}

ImageF read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0;
  int h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "Pf" || w <= 0 || h <= 0) throw IoError(path.string() + " is not a single-channel PFM");
  if (scale > 0) throw IoError(path.string() + ": big-endian PFM is not supported");
  ImageF img(w, h, 1);
  for (int y = h - 1; y >= 0; --y)
    in.read(reinterpret_cast<char*>(img.row(y).data()), static_cast<std::streamsize>(img.row(y).size_bytes()));
  if (!in) throw IoError(path.string() + ": truncated PFM");
  return img;
}

}  // namespace caustics
