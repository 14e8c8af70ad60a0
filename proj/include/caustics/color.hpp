#pragma once

#include <array>

#include "caustics/image.hpp"

namespace caustics {

/// Decorrelated l-alpha-beta space (RGB -> XYZ -> LMS -> log10 LMS -> l-alpha-beta).
///
/// 8-bit inputs are scaled to [0,1]; float inputs are taken as [0,1]. LMS
/// responses below kLabEpsilon are clamped before the logarithm so black
/// pixels stay finite.
inline constexpr double kLabEpsilon = 1.0 / 255.0;

LabImage rgb_to_lab(const ImageU8& img);
LabImage rgb_to_lab(const ImageF& img);

/// Inverse chain; output clamped to [0,1].
ImageF lab_to_rgb(const LabImage& lab);

/// Single-triple versions of the same conversion.
std::array<double, 3> rgb_to_lab_pixel(double r, double g, double b) noexcept;
std::array<double, 3> lab_to_rgb_pixel(double l, double alpha, double beta) noexcept;

}  // namespace caustics
