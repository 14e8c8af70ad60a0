#include "caustics/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caustics/color.hpp"

namespace caustics {

namespace {

std::vector<int> axis_positions(int extent, int patch, int stride) {
  std::vector<int> pos;
  for (int p = 0; p + patch <= extent; p += stride) pos.push_back(p);
  if (pos.back() + patch < extent) pos.push_back(extent - patch);
  return pos;
}

// Scores are accumulated in fixed point so the sum does not depend on the
// order in which patches are visited.
constexpr double kScoreScale = 1 << 24;

}  // namespace

PatchGrid extract_patches(int width, int height, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1) throw ParameterError("patch size and stride must be positive");
  if (patch_size > width || patch_size > height) throw ParameterError("patch larger than the image");
  PatchGrid grid;
  grid.width = width;
  grid.height = height;
  grid.patch_size = patch_size;
  grid.stride = stride;
  grid.xs = axis_positions(width, patch_size, stride);
  grid.ys = axis_positions(height, patch_size, stride);
  for (int y : grid.ys)
    for (int x : grid.xs) grid.origins.push_back({x, y});
  return grid;
}

BinaryMask predict_mask(const ImageU8& img, const Classifier& classifier, const PatchGrid& grid) {
  if (!classifier.is_trained()) throw StateError("classifier is not trained");
  if (grid.width != img.width() || grid.height != img.height())
    throw DimensionError("patch grid was built for a different image size");
  const int p = grid.patch_size;
  std::vector<std::int64_t> sum(img.pixel_count(), 0);
  std::vector<std::int32_t> count(img.pixel_count(), 0);
  for (const auto& origin : grid.origins) {
    const auto scores = classifier.score_patch(crop(img, origin.x, origin.y, p, p), origin);
    if (scores.size() != static_cast<std::size_t>(p) * p)
      throw DimensionError("classifier returned the wrong number of scores");
    for (int y = 0; y < p; ++y) {
      for (int x = 0; x < p; ++x) {
        const std::size_t i = static_cast<std::size_t>(origin.y + y) * img.width() + origin.x + x;
        const double s = std::clamp(static_cast<double>(scores[static_cast<std::size_t>(y) * p + x]), 0.0, 1.0);
        sum[i] += std::llround(s * kScoreScale);
        count[i] += 1;
      }
    }
  }
  BinaryMask mask(img.width(), img.height(), Label::Caustics);
  auto labels = mask.labels();
  const auto unit = static_cast<std::int64_t>(kScoreScale);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (2 * sum[i] > unit * count[i]) labels[i] = Label::NonCaustics;
  return mask;
}

BinaryMask threshold_classifier(const LabImage& lab, double t_l) {
  BinaryMask mask(lab.width, lab.height);
  auto labels = mask.labels();
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = lab.l[i] > t_l ? Label::Caustics : Label::NonCaustics;
  return mask;
}

std::vector<float> ThresholdClassifier::score_patch(const ImageU8& patch, PatchOrigin) const {
  const auto lab = rgb_to_lab(patch);
  std::vector<float> scores(lab.pixel_count());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = lab.l[i] > t_l_ ? 0.0f : 1.0f;
  return scores;
}

std::vector<PixelFeatures> compute_features(const ImageU8& img, int window) {
  if (window < 1 || window % 2 == 0) throw ParameterError("feature window must be odd");
  const auto lab = rgb_to_lab(img);
  const int w = img.width();
  const int h = img.height();
  const int r = window / 2;
  std::vector<PixelFeatures> out(lab.pixel_count());
  const double n = static_cast<double>(window) * window;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      double s2 = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const double v = lab.l[static_cast<std::size_t>(yy) * w + std::clamp(x + dx, 0, w - 1)];
          s += v;
          s2 += v * v;
        }
      }
      const double mean = s / n;
      const double var = std::max(0.0, s2 / n - mean * mean);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out[i] = {lab.l[i], lab.alpha[i], lab.beta[i], static_cast<float>(mean), static_cast<float>(std::sqrt(var))};
    }
  }
  return out;
}

std::vector<float> PixelClassifier::score_patch(const ImageU8& patch, PatchOrigin) const {
  const auto features = compute_features(patch, feature_window_);
  std::vector<float> scores(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) scores[i] = predict(features[i]);
  return scores;
}

namespace {

void check_training_set(std::span<const PixelFeatures> features, std::span<const Label> labels) {
  if (features.size() != labels.size()) throw DimensionError("features and labels differ in length");
  bool has_c = false;
  bool has_nc = false;
  for (auto l : labels) (l == Label::Caustics ? has_c : has_nc) = true;
  if (!has_c || !has_nc) throw ParameterError("training set needs samples of both classes");
}

std::vector<std::uint8_t> to_flags(std::span<const Label> labels) {
  std::vector<std::uint8_t> nc(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) nc[i] = labels[i] == Label::NonCaustics;
  return nc;
}

}  // namespace

KnnClassifier::KnnClassifier(std::span<const PixelFeatures> features, std::span<const Label> labels, int k,
                             int feature_window)
    : PixelClassifier(feature_window), samples_(features.begin(), features.end()), non_caustics_(to_flags(labels)),
      k_(k) {
  check_training_set(features, labels);
  if (k < 1) throw ParameterError("k must be positive");
}

float KnnClassifier::predict(const PixelFeatures& f) const {
  if (!is_trained()) throw StateError("kNN classifier is not trained");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), samples_.size());
  // (distance, index) pairs; ties resolved towards the lower training index.
  std::vector<std::pair<double, std::size_t>> best;
  best.reserve(k + 1);
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double t = static_cast<double>(samples_[i][j]) - f[j];
      d += t * t;
    }
    if (best.size() == k && d >= best.back().first) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), std::make_pair(d, i));
    best.insert(pos, {d, i});
    if (best.size() > k) best.pop_back();
  }
  std::size_t votes = 0;
  for (const auto& [d, i] : best) votes += non_caustics_[i];
  return static_cast<float>(votes) / static_cast<float>(best.size());
}

DecisionTreeClassifier::DecisionTreeClassifier(std::span<const PixelFeatures> features, std::span<const Label> labels,
                                               int max_depth, int feature_window)
    : PixelClassifier(feature_window), max_depth_(max_depth) {
  check_training_set(features, labels);
  if (max_depth < 0) throw ParameterError("max_depth must be non-negative");
  const auto nc = to_flags(labels);
  std::vector<std::size_t> idx(features.size());
  std::iota(idx.begin(), idx.end(), 0);
  build(idx, 0, idx.size(), 0, features, nc);
}

int DecisionTreeClassifier::build(std::vector<std::size_t>& idx, std::size_t begin, std::size_t end, int depth,
                                  std::span<const PixelFeatures> features, std::span<const std::uint8_t> nc) {
  const std::size_t n = end - begin;
  std::size_t pos = 0;
  for (std::size_t i = begin; i < end; ++i) pos += nc[idx[i]];

  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[node_id].non_caustics_fraction = static_cast<float>(pos) / static_cast<float>(n);
  if (pos == 0 || pos == n || depth >= max_depth_ || n < 2) return node_id;

  auto gini = [](double p, double total) {
    if (total == 0.0) return 0.0;
    const double q = p / total;
    return 1.0 - q * q - (1.0 - q) * (1.0 - q);
  };
  const double parent = gini(static_cast<double>(pos), static_cast<double>(n));

  struct Split {
    int feature = -1;
    float threshold = 0.0f;
    double gain = -1.0;
    std::size_t imbalance = 0;
  } best;

  std::vector<std::size_t> order(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                 idx.begin() + static_cast<std::ptrdiff_t>(end));
  for (int f = 0; f < static_cast<int>(PixelFeatures{}.size()); ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return features[a][f] < features[b][f]; });
    std::size_t left_pos = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_pos += nc[order[i]];
      const float a = features[order[i]][f];
      const float b = features[order[i + 1]][f];
      if (!(a < b)) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = static_cast<double>(n - i - 1);
      const double child = (nl * gini(static_cast<double>(left_pos), nl) +
                            nr * gini(static_cast<double>(pos - left_pos), nr)) / static_cast<double>(n);
      const double gain = parent - child;
      const std::size_t imbalance = (i + 1) * 2 > n ? (i + 1) * 2 - n : n - (i + 1) * 2;
      // Equal gains: lower feature index first (loop order), then the split
      // closest to halving the node.
      const bool better = gain > best.gain + 1e-12 ||
                          (std::abs(gain - best.gain) <= 1e-12 && f == best.feature && imbalance < best.imbalance);
      if (better) {
        float thr = a + (b - a) * 0.5f;
        if (!(thr > a)) thr = b;  // keep a < thr <= b after rounding
        best = {f, thr, gain, imbalance};
      }
    }
  }
  if (best.feature < 0) return node_id;

  auto mid = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                   idx.begin() + static_cast<std::ptrdiff_t>(end),
                                   [&](std::size_t s) { return features[s][best.feature] < best.threshold; });
  const std::size_t split = static_cast<std::size_t>(mid - idx.begin());
  const int left = build(idx, begin, split, depth + 1, features, nc);
  const int right = build(idx, split, end, depth + 1, features, nc);
  nodes_[node_id].feature = best.feature;
  nodes_[node_id].threshold = best.threshold;
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

float DecisionTreeClassifier::predict(const PixelFeatures& f) const {
  if (!is_trained()) throw StateError("decision tree is not trained");
  int id = 0;
  while (nodes_[id].feature >= 0) id = f[nodes_[id].feature] < nodes_[id].threshold ? nodes_[id].left : nodes_[id].right;
  return nodes_[id].non_caustics_fraction;
}

std::size_t DecisionTreeClassifier::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

int DecisionTreeClassifier::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (nodes_[id].feature >= 0) {
      stack.emplace_back(nodes_[id].left, d + 1);
      stack.emplace_back(nodes_[id].right, d + 1);
    }
  }
  return deepest;
}

std::unique_ptr<PixelClassifier> train_classifier(ClassifierKind kind, std::span<const PixelFeatures> features,
                                                  std::span<const Label> labels, const TrainingOptions& options) {
  switch (kind) {
    case ClassifierKind::Knn:
      return std::make_unique<KnnClassifier>(features, labels, options.knn_k, options.feature_window);
    case ClassifierKind::DecisionTree:
      return std::make_unique<DecisionTreeClassifier>(features, labels, options.max_depth, options.feature_window);
  }
  throw ParameterError("unknown classifier kind");
}

SegmentationMetrics metrics_from_counts(const ConfusionCounts& c) {
  SegmentationMetrics m;
  m.counts = c;
  auto scores = [](double tp, double fp, double fn) {
    ClassScores s;
    s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.zero_support = tp + fn == 0;
    if (s.zero_support) s.f1 = 0.0;
    return s;
  };
  m.non_caustics = scores(static_cast<double>(c.tp), static_cast<double>(c.fp), static_cast<double>(c.fn));
  m.caustics = scores(static_cast<double>(c.tn), static_cast<double>(c.fn), static_cast<double>(c.fp));
  m.accuracy = c.total() > 0 ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
  return m;
}

SegmentationMetrics compute_metrics(const BinaryMask& pred, const BinaryMask& truth) {
  if (!pred.same_shape(truth)) throw DimensionError("prediction and ground truth differ in size");
  ConfusionCounts c;
  const auto p = pred.labels();
  const auto t = truth.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pn = p[i] == Label::NonCaustics;
    const bool tn = t[i] == Label::NonCaustics;
    if (pn && tn) ++c.tp;
    else if (pn) ++c.fp;
    else if (tn) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_counts(c);
}

nlohmann::json metrics_to_json(const SegmentationMetrics& m) {
  return {{"f1_caustics", m.caustics.f1},
          {"f1_non_caustics", m.non_caustics.f1},
          {"accuracy", m.accuracy},
          {"tp", m.counts.tp},
          {"fp", m.counts.fp},
          {"tn", m.counts.tn},
          {"fn", m.counts.fn}};
}

double mask_fraction(const BinaryMask& mask) {
  if (mask.pixel_count() == 0) return 0.0;
  return 100.0 * static_cast<double>(mask.count(Label::Caustics)) / static_cast<double>(mask.pixel_count());
}

std::vector<ThresholdSweepEntry> threshold_sweep(const LabImage& lab, const BinaryMask& truth,
                                                 std::span<const double> thresholds) {
  std::vector<ThresholdSweepEntry> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back({t, compute_metrics(threshold_classifier(lab, t), truth)});
  return out;
}

}  // namespace caustics
