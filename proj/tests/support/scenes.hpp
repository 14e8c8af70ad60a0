#pragma once

#include <random>
#include <vector>

#include "caustics/rectify.hpp"

namespace testsupport {

using caustics::Mat3;
using caustics::Point2;
using caustics::Size;

// Two pinhole cameras (f = 500, 640x480) looking at a random point cloud.
// The right camera sits at a mostly horizontal baseline with a few degrees
// of rotation, so both epipoles lie far outside the frames.
struct TwoViewScene {
  Size size{640, 480};
  Mat3 F;  // x_right^T F x_left = 0
  std::vector<Point2> left;
  std::vector<Point2> right;
};

TwoViewScene make_two_view_scene(std::mt19937_64& rng, int points, double max_rotation_deg = 5.0);

// Copy of `pts` with isotropic Gaussian noise.
std::vector<Point2> add_noise(const std::vector<Point2>& pts, double sigma, std::mt19937_64& rng);

// Random pairs lying at least `min_dist` px from the true epipolar geometry.
void plant_outliers(TwoViewScene& s, int count, double min_dist, std::mt19937_64& rng);

}  // namespace testsupport
