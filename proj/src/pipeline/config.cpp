#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include "caustics/pipeline.hpp"

extern char** environ;

namespace caustics {

namespace {

using nlohmann::json;

// Reads the keys of one block and remembers which ones it saw so leftovers
// can be reported.
class BlockReader {
 public:
  BlockReader(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    block_ = &root.at(name_);
    if (!block_->is_object()) throw ParameterError("config block '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!block_ || !block_->contains(key)) return;
    try {
      out = block_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ParameterError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <typename E>
  void get_enum(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    for (const auto& [n, v] : names)
      if (s == n) {
        out = v;
        return;
      }
    throw ParameterError("config key '" + name_ + "." + key + "' has unknown value '" + s + "'");
  }

  void done() const {
    if (!block_) return;
    for (const auto& [k, v] : block_->items())
      if (!seen_.count(k)) throw ParameterError("unknown config key '" + name_ + "." + k + "'");
  }

 private:
  std::string name_;
  const json* block_ = nullptr;
  std::set<std::string> seen_;
};

const char* method_name(SegmentationMethod m) {
  switch (m) {
    case SegmentationMethod::Threshold: return "threshold";
    case SegmentationMethod::Knn: return "knn";
    case SegmentationMethod::Tree: return "tree";
    case SegmentationMethod::External: return "external";
  }
  return "threshold";
}

const std::set<std::string> kBlocks = {"segmentation", "transfer", "features", "ransac",
                                       "sgm",          "ground_truth", "io"};

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!kBlocks.count(k) && k != "pairs") throw ParameterError("unknown config key '" + k + "'");

  PipelineConfig c;
  {
    BlockReader b(j, "segmentation");
    auto& s = c.segmentation;
    b.get_enum("method", s.method,
               {{"threshold", SegmentationMethod::Threshold}, {"knn", SegmentationMethod::Knn},
                {"tree", SegmentationMethod::Tree}, {"external", SegmentationMethod::External}});
    b.get("threshold", s.threshold);
    b.get("patch_size", s.patch_size);
    b.get("stride", s.stride);
    b.get("knn_k", s.knn_k);
    b.get("max_depth", s.max_depth);
    b.get("feature_window", s.feature_window);
    b.get("train_image", s.train_image);
    b.get("train_mask", s.train_mask);
    b.get("train_samples", s.train_samples);
    b.done();
  }
  {
    BlockReader b(j, "transfer");
    b.get_enum("mode", c.transfer.mode, {{"donor", TransferMode::Donor}, {"none", TransferMode::None}});
    b.done();
  }
  {
    BlockReader b(j, "features");
    b.get("fast_threshold", c.features.features.fast_threshold);
    b.get("octaves", c.features.features.octaves);
    b.get("gate_radius", c.features.features.gate_radius);
    b.get("max_keypoints", c.features.max_keypoints);
    b.get("ratio", c.features.ratio);
    b.done();
  }
  {
    BlockReader b(j, "ransac");
    b.get("threshold_px", c.ransac.threshold_px);
    b.get("confidence", c.ransac.confidence);
    b.get("max_iterations", c.ransac.max_iterations);
    b.get("seed", c.ransac.seed);
    b.done();
  }
  {
    BlockReader b(j, "sgm");
    auto& p = c.sgm.params;
    b.get("d_min", p.d_min);
    b.get("d_max", p.d_max);
    b.get("p1", p.p1);
    b.get("p2", p.p2);
    b.get_enum("cost", p.cost, {{"census", CostKind::Census}, {"mi", CostKind::MutualInformation}});
    b.get("lr_threshold", p.lr_threshold);
    b.get_enum("subpixel", p.subpixel,
               {{"parabola", SubpixelMode::Parabola}, {"equiangular", SubpixelMode::Equiangular}});
    b.get("median_window", p.median_window);
    b.get("mi_levels", p.mi_levels);
    b.get("auto_range", c.sgm.auto_range);
    b.get("margin", c.sgm.margin);
    b.get("range_trim", c.sgm.range_trim);
    b.done();
  }
  {
    BlockReader b(j, "ground_truth");
    int threshold = c.ground_truth.threshold;
    b.get("blur_kernel", c.ground_truth.blur_kernel);
    b.get("threshold", threshold);
    b.get("transfer_color", c.ground_truth.transfer_color);
    b.done();
    if (threshold < 0 || threshold > 255) throw ParameterError("config key 'ground_truth.threshold' must be in 0..255");
    c.ground_truth.threshold = static_cast<std::uint8_t>(threshold);
  }
  {
    BlockReader b(j, "io");
    b.get("images", c.io.images);
    b.get("masks", c.io.masks);
    b.get("calibration", c.io.calibration);
    b.get("output_dir", c.io.output_dir);
    b.get("debug_dir", c.io.debug_dir);
    b.done();
  }
  if (j.contains("pairs")) {
    try {
      c.pairs = j.at("pairs").get<std::vector<std::pair<int, int>>>();
    } catch (const json::exception&) {
      throw ParameterError("config key 'pairs' must be a list of [left, right] index pairs");
    }
  }
  if (c.pairs.empty() && c.io.images.size() == 2) c.pairs = {{0, 1}};
  return c;
}

json PipelineConfig::to_json() const {
  const auto& s = segmentation;
  const auto& p = sgm.params;
  json j;
  j["segmentation"] = {{"method", method_name(s.method)}, {"threshold", s.threshold},
                       {"patch_size", s.patch_size},       {"stride", s.stride},
                       {"knn_k", s.knn_k},                 {"max_depth", s.max_depth},
                       {"feature_window", s.feature_window}, {"train_image", s.train_image},
                       {"train_mask", s.train_mask},       {"train_samples", s.train_samples}};
  j["transfer"] = {{"mode", transfer.mode == TransferMode::Donor ? "donor" : "none"}};
  j["features"] = {{"fast_threshold", features.features.fast_threshold},
                   {"octaves", features.features.octaves},
                   {"gate_radius", features.features.gate_radius},
                   {"max_keypoints", features.max_keypoints},
                   {"ratio", features.ratio}};
  j["ransac"] = {{"threshold_px", ransac.threshold_px},
                 {"confidence", ransac.confidence},
                 {"max_iterations", ransac.max_iterations},
                 {"seed", ransac.seed}};
  j["sgm"] = {{"d_min", p.d_min},
              {"d_max", p.d_max},
              {"p1", p.p1},
              {"p2", p.p2},
              {"cost", p.cost == CostKind::Census ? "census" : "mi"},
              {"lr_threshold", p.lr_threshold},
              {"subpixel", p.subpixel == SubpixelMode::Parabola ? "parabola" : "equiangular"},
              {"median_window", p.median_window},
              {"mi_levels", p.mi_levels},
              {"auto_range", sgm.auto_range},
              {"margin", sgm.margin},
              {"range_trim", sgm.range_trim}};
  j["ground_truth"] = {{"blur_kernel", ground_truth.blur_kernel},
                       {"threshold", ground_truth.threshold},
                       {"transfer_color", ground_truth.transfer_color}};
  j["io"] = {{"images", io.images},
             {"masks", io.masks},
             {"calibration", io.calibration},
             {"output_dir", io.output_dir},
             {"debug_dir", io.debug_dir}};
  j["pairs"] = json::array();
  for (const auto& [a, b] : pairs) j["pairs"].push_back({a, b});
  return j;
}

void PipelineConfig::validate() const {
  const auto& s = segmentation;
  if (s.patch_size <= 0 || s.stride <= 0) throw ParameterError("segmentation: patch size and stride must be positive");
  if (s.knn_k <= 0 || s.max_depth <= 0 || s.train_samples <= 0)
    throw ParameterError("segmentation: knn_k, max_depth and train_samples must be positive");
  if (s.feature_window <= 0 || s.feature_window % 2 == 0)
    throw ParameterError("segmentation: feature window must be a positive odd number");
  if ((s.method == SegmentationMethod::Knn || s.method == SegmentationMethod::Tree) &&
      (s.train_image.empty() || s.train_mask.empty()))
    throw ParameterError("segmentation: knn and tree need train_image and train_mask");
  if (s.method == SegmentationMethod::External && io.masks.size() != io.images.size())
    throw ParameterError("segmentation: the external method needs one mask per image");
  if (!io.masks.empty() && io.masks.size() != io.images.size())
    throw ParameterError("io: masks must be empty or match the images one to one");
  if (features.features.fast_threshold < 0 || features.features.octaves < 1 || features.features.gate_radius < 0)
    throw ParameterError("features: invalid detector settings");
  if (!(features.ratio > 0.0 && features.ratio <= 1.0)) throw ParameterError("features: ratio must be in (0, 1]");
  if (!(ransac.threshold_px > 0.0)) throw ParameterError("ransac: threshold must be positive");
  if (!(ransac.confidence > 0.0 && ransac.confidence < 1.0)) throw ParameterError("ransac: confidence must be in (0, 1)");
  if (ransac.max_iterations <= 0) throw ParameterError("ransac: max_iterations must be positive");
  if (sgm.margin < 0) throw ParameterError("sgm: margin must be non-negative");
  if (!(sgm.range_trim >= 0.0 && sgm.range_trim < 0.5)) throw ParameterError("sgm: range_trim must be in [0, 0.5)");
  if (sgm.auto_range) {
    SgmParams p = sgm.params;
    p.d_min = 0;
    p.d_max = 1;
    p.validate();
  } else {
    sgm.params.validate();
  }
  if (ground_truth.blur_kernel != 3 && ground_truth.blur_kernel != 5 && ground_truth.blur_kernel != 7)
    throw ParameterError("ground_truth: blur kernel must be 3, 5 or 7");
  const int n = static_cast<int>(io.images.size());
  for (const auto& [a, b] : pairs)
    if (a < 0 || b < 0 || a >= n || b >= n || a == b)
      throw ParameterError("pairs: [" + std::to_string(a) + ", " + std::to_string(b) + "] is not a pair of image indices");
}

CorrectionParams PipelineConfig::correction_params() const {
  CorrectionParams p;
  p.features = features.features;
  p.max_keypoints = features.max_keypoints;
  p.ratio = features.ratio;
  p.ransac = ransac;
  p.sgm = sgm.params;
  p.auto_disparity_range = sgm.auto_range;
  p.disparity_margin = sgm.margin;
  p.disparity_trim = sgm.range_trim;
  p.transfer_color = transfer.mode == TransferMode::Donor;
  return p;
}

json apply_env_overrides(json j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  const json defaults = PipelineConfig{}.to_json();
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.rfind("CAUSTICS_", 0) != 0) continue;
    const std::string name = entry.substr(0, eq);
    const std::string value = entry.substr(eq + 1);
    const std::string rest = name.substr(9);
    for (const auto& block : kBlocks) {
      const std::string prefix = upper(block) + "_";
      if (rest.rfind(prefix, 0) != 0) continue;
      const std::string key = lower(rest.substr(prefix.size()));
      if (!defaults.at(block).contains(key))
        throw ParameterError("unknown config key '" + block + "." + key + "' (from " + name + ")");
      json v;
      if (defaults.at(block).at(key).is_string()) {
        v = value;
      } else {
        try {
          v = json::parse(value);
        } catch (const json::exception&) {
          v = value;
        }
      }
      j[block][key] = v;
    }
  }
  return j;
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path) {
  json j = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config " + path->string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ParameterError("config " + path->string() + " is not valid JSON: " + e.what());
    }
  }
  PipelineConfig c = PipelineConfig::from_json(apply_env_overrides(std::move(j)));
  c.validate();
  return c;
}

}  // namespace caustics
