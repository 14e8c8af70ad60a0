#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caustics/correction.hpp"
#include "caustics/dataset.hpp"
#include "caustics/segmentation.hpp"

namespace caustics {

enum class SegmentationMethod { Threshold, Knn, Tree, External };

struct SegmentationConfig {
  SegmentationMethod method = SegmentationMethod::Threshold;
  double threshold = -0.2;  // l of l-alpha-beta; pixels above are caustics
  int patch_size = 128;
  int stride = 32;
  int knn_k = 5;
  int max_depth = 12;
  int feature_window = 5;
  std::string train_image;  // knn / tree training pair
  std::string train_mask;
  int train_samples = 20000;
};

enum class TransferMode { Donor, None };

struct TransferConfig {
  TransferMode mode = TransferMode::Donor;  // donors take the statistics of the view they repair
};

struct MatchingConfig {
  FeatureOptions features;
  std::size_t max_keypoints = 5000;
  double ratio = 0.8;
};

struct SgmConfig {
  SgmParams params;
  bool auto_range = true;
  int margin = 8;
  double range_trim = 0.05;
};

struct IoConfig {
  std::vector<std::string> images;
  std::vector<std::string> masks;  // one per image, for the external method and for evaluation
  std::string calibration;
  std::string output_dir = "out";
  std::string debug_dir;
};

/// One block per stage; every parameter has a default and all of them are
/// written back by to_json.
struct PipelineConfig {
  SegmentationConfig segmentation;
  TransferConfig transfer;
  MatchingConfig features;
  RansacOptions ransac;
  SgmConfig sgm;
  GroundTruthParams ground_truth;
  IoConfig io;
  std::vector<std::pair<int, int>> pairs;  // correction order; defaults to [[0, 1]] for two images

  /// Unknown keys and ill-typed values raise ParameterError naming the key.
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  CorrectionParams correction_params() const;
};

/// Applies CAUSTICS_<BLOCK>_<KEY>=value overrides from the environment
/// (value parsed as JSON, else taken as a string) to a raw config document.
/// A variable naming a known block but an unknown key is an error.
nlohmann::json apply_env_overrides(nlohmann::json j);

/// Reads a JSON file (missing path: all defaults), applies environment
/// overrides and validates.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path);

/// Labels one image with the configured method. `external` is used for the
/// external method only.
BinaryMask segment_image(const ImageU8& img, const SegmentationConfig& cfg, const BinaryMask* external = nullptr,
                         std::uint64_t seed = 0);

struct MatchCounts {
  std::size_t left_keypoints = 0;
  std::size_t right_keypoints = 0;
  std::size_t raw = 0;            // left-to-right matches passing the ratio test
  std::size_t cross_checked = 0;
  std::size_t inliers = 0;
  bool geometry_degenerate = false;  // no fundamental matrix; inliers are the zero-motion matches

  nlohmann::json to_json() const;
};

MatchCounts count_matches(const ImageU8& left, const ImageU8& right, const BinaryMask* left_mask,
                          const BinaryMask* right_mask, const MatchingConfig& matching, const RansacOptions& ransac);

struct PairReport {
  std::string left;
  std::string right;
  std::string error;  // empty on success
  std::optional<MatchCounts> unmasked;
  std::optional<MatchCounts> masked;
  std::optional<MatchCounts> corrected;
  std::optional<double> left_caustics_percent;
  std::optional<double> right_caustics_percent;
  std::optional<CorrectionReport> correction;

  nlohmann::json to_json() const;
};

struct EvaluationReport {
  std::vector<PairReport> pairs;
  nlohmann::json to_json() const;
};

/// Relative change in percent; nullopt when the baseline is zero and the
/// value is not.
std::optional<double> percent_change(std::size_t before, std::size_t after) noexcept;

struct EvaluationInput {
  std::filesystem::path left;
  std::filesystem::path right;
  std::optional<std::filesystem::path> left_mask;
  std::optional<std::filesystem::path> right_mask;
};

/// Match statistics for each pair, with and without mask gating. Unreadable
/// inputs produce an error row and the run continues.
EvaluationReport evaluate_matching(const std::vector<EvaluationInput>& pairs, const PipelineConfig& config);

/// Segment, correct every configured pair in order and write the corrected
/// images, masks, effective config and report to io.output_dir. Stage
/// failures raise PipelineError.
EvaluationReport run_pipeline(const PipelineConfig& config);

}  // namespace caustics
