#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "caustics/image.hpp"

namespace caustics {

struct PatchOrigin {
  int x = 0;
  int y = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Sliding-window layout. Origins are row-major; the last row and column
/// are clamped to the image edge so every pixel is covered.
struct PatchGrid {
  int width = 0;
  int height = 0;
  int patch_size = 128;
  int stride = 32;
  std::vector<int> xs;
  std::vector<int> ys;
  std::vector<PatchOrigin> origins;
};

PatchGrid extract_patches(int width, int height, int patch_size = 128, int stride = 32);

template <typename T>
PatchGrid extract_patches(const Image<T>& img, int patch_size = 128, int stride = 32) {
  return extract_patches(img.width(), img.height(), patch_size, stride);
}

/// Anything that can label a square patch. Scores are the probability of
/// the non-caustics class, one per patch pixel in row-major order.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual bool is_trained() const = 0;
  virtual std::vector<float> score_patch(const ImageU8& patch, PatchOrigin origin) const = 0;
};

/// Runs the classifier on every patch of `grid`, averages the scores of
/// overlapping patches and labels a pixel non-caustics iff the average is
/// strictly above 0.5.
BinaryMask predict_mask(const ImageU8& img, const Classifier& classifier, const PatchGrid& grid);

/// Caustics iff l > t_l.
BinaryMask threshold_classifier(const LabImage& lab, double t_l);

class ThresholdClassifier final : public Classifier {
 public:
  explicit ThresholdClassifier(double t_l) : t_l_(t_l) {}
  bool is_trained() const override { return true; }
  std::vector<float> score_patch(const ImageU8& patch, PatchOrigin origin) const override;

 private:
  double t_l_;
};

/// (l, alpha, beta, local mean of l, local std of l).
using PixelFeatures = std::array<float, 5>;

std::vector<PixelFeatures> compute_features(const ImageU8& img, int window = 5);

enum class ClassifierKind { Knn, DecisionTree };

struct TrainingOptions {
  int knn_k = 5;
  int max_depth = 12;
  int feature_window = 5;
};

/// Feature-based pixel classifier; scores patches by computing features on
/// the patch itself.
class PixelClassifier : public Classifier {
 public:
  explicit PixelClassifier(int feature_window) : feature_window_(feature_window) {}
  std::vector<float> score_patch(const ImageU8& patch, PatchOrigin origin) const override;
  virtual float predict(const PixelFeatures& f) const = 0;

 private:
  int feature_window_;
};

class KnnClassifier final : public PixelClassifier {
 public:
  KnnClassifier() : PixelClassifier(5) {}
  KnnClassifier(std::span<const PixelFeatures> features, std::span<const Label> labels, int k,
                int feature_window = 5);
  bool is_trained() const override { return !samples_.empty(); }
  float predict(const PixelFeatures& f) const override;

 private:
  std::vector<PixelFeatures> samples_;
  std::vector<std::uint8_t> non_caustics_;
  int k_ = 5;
};

class DecisionTreeClassifier final : public PixelClassifier {
 public:
  DecisionTreeClassifier() : PixelClassifier(5) {}
  DecisionTreeClassifier(std::span<const PixelFeatures> features, std::span<const Label> labels, int max_depth,
                         int feature_window = 5);
  bool is_trained() const override { return !nodes_.empty(); }
  float predict(const PixelFeatures& f) const override;

  std::size_t leaf_count() const;
  int depth() const;

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    float non_caustics_fraction = 0.0f;
  };
  int build(std::vector<std::size_t>& idx, std::size_t begin, std::size_t end, int depth,
            std::span<const PixelFeatures> features, std::span<const std::uint8_t> nc);

  std::vector<Node> nodes_;
  int max_depth_ = 12;
};

/// Throws ParameterError unless both classes are present.
std::unique_ptr<PixelClassifier> train_classifier(ClassifierKind kind, std::span<const PixelFeatures> features,
                                                  std::span<const Label> labels, const TrainingOptions& options = {});

/// Positive class is non-caustics.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool zero_support = false;  // class absent from the ground truth; f1 reported as 0
};

struct SegmentationMetrics {
  ConfusionCounts counts;
  ClassScores caustics;
  ClassScores non_caustics;
  double accuracy = 0.0;
};

SegmentationMetrics metrics_from_counts(const ConfusionCounts& counts);
SegmentationMetrics compute_metrics(const BinaryMask& pred, const BinaryMask& truth);
nlohmann::json metrics_to_json(const SegmentationMetrics& m);

/// Percentage of caustics pixels.
double mask_fraction(const BinaryMask& mask);

struct ThresholdSweepEntry {
  double threshold = 0.0;
  SegmentationMetrics metrics;
};

std::vector<ThresholdSweepEntry> threshold_sweep(const LabImage& lab, const BinaryMask& truth,
                                                 std::span<const double> thresholds);

}  // namespace caustics
