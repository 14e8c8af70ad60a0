#include "caustics/calibration.hpp"

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

namespace caustics {

void CameraCalibration::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ParameterError("calibration: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ParameterError("calibration: image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
    throw ParameterError("calibration: principal point outside the image");
}

Point2 CameraCalibration::distort(Point2 ideal) const noexcept {
  const double x = (ideal.x - cx) / fx;
  const double y = (ideal.y - cy) / fy;
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
  return {fx * xd + cx, fy * yd + cy};
}

Point2 CameraCalibration::undistort(Point2 observed) const noexcept {
  const double xd = (observed.x - cx) / fx;
  const double yd = (observed.y - cy) / fy;
  double x = xd;
  double y = yd;
  for (int it = 0; it < 20; ++it) {
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    const double dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    x = (xd - dx) / radial;
    y = (yd - dy) / radial;
  }
  return {fx * x + cx, fy * y + cy};
}

CameraCalibration CameraCalibration::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"fx", "fy", "cx", "cy", "k1", "k2",
                                              "p1", "p2", "k3", "width", "height"};
  if (!j.is_object()) throw ParameterError("calibration: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw ParameterError("calibration: unknown key '" + key + "'");
  for (const auto* key : {"fx", "fy", "cx", "cy", "width", "height"})
    if (!j.contains(key)) throw ParameterError(std::string("calibration: missing key '") + key + "'");
  CameraCalibration c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.k1 = j.value("k1", 0.0);
  c.k2 = j.value("k2", 0.0);
  c.k3 = j.value("k3", 0.0);
  c.p1 = j.value("p1", 0.0);
  c.p2 = j.value("p2", 0.0);
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.validate();
  return c;
}

nlohmann::json CameraCalibration::to_json() const {
  return {{"fx", fx}, {"fy", fy}, {"cx", cx}, {"cy", cy}, {"k1", k1}, {"k2", k2},
          {"p1", p1}, {"p2", p2}, {"k3", k3}, {"width", width}, {"height", height}};
}

CameraCalibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("calibration file " + path.string() + ": " + e.what());
  }
  return CameraCalibration::from_json(j);
}

UndistortedImage undistort(const ImageU8& img, const CameraCalibration& calib) {
  calib.validate();
  UndistortedImage out{ImageU8(img.width(), img.height(), img.channels()),
                       ValidityMask(img.width(), img.height(), 1)};
  if (!calib.has_distortion()) {
    out.image = img;
    std::fill(out.valid.data().begin(), out.valid.data().end(), 1);
    return out;
  }
  std::vector<float> sample(img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Point2 src = calib.distort({static_cast<double>(x), static_cast<double>(y)});
      if (!sample_bilinear(img, src.x, src.y, sample)) continue;
      out.valid.at(x, y) = 1;
      for (int c = 0; c < img.channels(); ++c) out.image.at(x, y, c) = round_to_u8(sample[c]);
    }
  }
  return out;
}

}  // namespace caustics
