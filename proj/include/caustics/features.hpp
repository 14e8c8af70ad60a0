#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "caustics/image.hpp"

namespace caustics {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  float response = 0.0f;
  float scale = 1.0f;  // pyramid scale factor of the detecting octave
};

/// 256 comparison bits.
using Descriptor = std::array<std::uint64_t, 4>;

int hamming(const Descriptor& a, const Descriptor& b) noexcept;

struct Feature {
  Keypoint kp;
  Descriptor desc{};
};

struct FeatureOptions {
  int fast_threshold = 20;  // FAST intensity margin, 0..255 scale
  int octaves = 4;
  int gate_radius = 4;      // px around a keypoint that must be free of caustics
};

/// Multi-scale FAST-9 corners with fixed-pattern binary descriptors, sorted
/// by decreasing response and truncated to `max_kp` (0 keeps everything).
std::vector<Feature> detect_features(const ImageU8& img, std::size_t max_kp, const FeatureOptions& opt = {});

/// As detect_features, but drops every keypoint whose gate disk touches a
/// CAUSTICS pixel. Gating happens before truncation.
std::vector<Feature> detect_masked_features(const ImageU8& img, const BinaryMask& mask, std::size_t max_kp,
                                            const FeatureOptions& opt = {});

struct Match {
  int left = 0;
  int right = 0;
  int distance = 0;
};

struct MatchSet {
  std::vector<Match> matches;
  std::size_t ratio_passed = 0;  // left-to-right matches surviving the ratio test, before cross-check
  std::vector<std::uint8_t> inliers;  // filled by RANSAC; same length as matches
};

/// Nearest neighbour by Hamming distance, ratio test (best < ratio * second)
/// on the left-to-right pass, then mutual cross-check.
MatchSet match_descriptors(std::span<const Descriptor> left, std::span<const Descriptor> right, double ratio = 0.8);
MatchSet match_features(std::span<const Feature> left, std::span<const Feature> right, double ratio = 0.8);

}  // namespace caustics
