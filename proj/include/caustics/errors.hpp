#pragma once

#include <stdexcept>
#include <string>

namespace caustics {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument value (even kernel size, low >= high, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Raster shapes or channel counts that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Object used before it is ready (untrained classifier, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Geometry that has no solution: singular homography, epipole inside the
// image, too few correspondences.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Failure of a whole processing stage; carries the stage name.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace caustics
