#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "caustics/calibration.hpp"
#include "caustics/color.hpp"
#include "caustics/image_io.hpp"
#include "caustics/log.hpp"
#include "caustics/pipeline.hpp"

namespace caustics {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

PatchGrid grid_for(int w, int h, const SegmentationConfig& cfg) {
  // small images get a single patch as large as they allow
  const int patch = std::min({cfg.patch_size, w, h});
  return extract_patches(w, h, patch, std::min(cfg.stride, patch));
}

std::unique_ptr<Classifier> make_classifier(const SegmentationConfig& cfg, std::uint64_t seed) {
  switch (cfg.method) {
    case SegmentationMethod::Threshold:
      return std::make_unique<ThresholdClassifier>(cfg.threshold);
    case SegmentationMethod::External:
      return nullptr;
    case SegmentationMethod::Knn:
    case SegmentationMethod::Tree:
      break;
  }
  const ImageU8 img = read_image(cfg.train_image);
  const BinaryMask mask = read_mask(cfg.train_mask);
  if (!mask.same_shape(img)) throw DimensionError("training mask does not match the training image");
  const auto all = compute_features(img, cfg.feature_window);
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(idx.size(), static_cast<std::size_t>(cfg.train_samples)));
  std::sort(idx.begin(), idx.end());
  std::vector<PixelFeatures> feats;
  std::vector<Label> labels;
  for (std::size_t i : idx) {
    feats.push_back(all[i]);
    labels.push_back(mask.labels()[i]);
  }
  TrainingOptions opt;
  opt.knn_k = cfg.knn_k;
  opt.max_depth = cfg.max_depth;
  opt.feature_window = cfg.feature_window;
  return train_classifier(cfg.method == SegmentationMethod::Knn ? ClassifierKind::Knn : ClassifierKind::DecisionTree,
                          feats, labels, opt);
}

BinaryMask segment_with(const ImageU8& img, const SegmentationConfig& cfg, const Classifier* classifier,
                        const BinaryMask* external) {
  if (cfg.method == SegmentationMethod::External) {
    if (!external) throw ParameterError("segmentation: the external method needs a mask");
    if (!external->same_shape(img)) throw DimensionError("segmentation: external mask does not match the image");
    return *external;
  }
  return predict_mask(img, *classifier, grid_for(img.width(), img.height(), cfg));
}

std::vector<Point2> positions(std::span<const Feature> f) {
  std::vector<Point2> out;
  out.reserve(f.size());
  for (const auto& x : f) out.push_back({x.kp.x, x.kp.y});
  return out;
}

json optional_percent(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

json change_json(const MatchCounts& before, const MatchCounts& after) {
  return {{"raw", optional_percent(percent_change(before.raw, after.raw))},
          {"cross_checked", optional_percent(percent_change(before.cross_checked, after.cross_checked))},
          {"inliers", optional_percent(percent_change(before.inliers, after.inliers))}};
}

MatchCounts& operator+=(MatchCounts& a, const MatchCounts& b) {
  a.left_keypoints += b.left_keypoints;
  a.right_keypoints += b.right_keypoints;
  a.raw += b.raw;
  a.cross_checked += b.cross_checked;
  a.inliers += b.inliers;
  a.geometry_degenerate = a.geometry_degenerate || b.geometry_degenerate;
  return a;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

BinaryMask segment_image(const ImageU8& img, const SegmentationConfig& cfg, const BinaryMask* external,
                         std::uint64_t seed) {
  const auto classifier = make_classifier(cfg, seed);
  return segment_with(img, cfg, classifier.get(), external);
}

json MatchCounts::to_json() const {
  return {{"left_keypoints", left_keypoints}, {"right_keypoints", right_keypoints},
          {"raw", raw},                       {"cross_checked", cross_checked},
          {"inliers", inliers},               {"geometry_degenerate", geometry_degenerate}};
}

MatchCounts count_matches(const ImageU8& left, const ImageU8& right, const BinaryMask* left_mask,
                          const BinaryMask* right_mask, const MatchingConfig& matching, const RansacOptions& ransac) {
  const ImageU8 lg = to_gray(left);
  const ImageU8 rg = to_gray(right);
  const auto lf = left_mask ? detect_masked_features(lg, *left_mask, matching.max_keypoints, matching.features)
                            : detect_features(lg, matching.max_keypoints, matching.features);
  const auto rf = right_mask ? detect_masked_features(rg, *right_mask, matching.max_keypoints, matching.features)
                             : detect_features(rg, matching.max_keypoints, matching.features);
  MatchSet ms = match_features(lf, rf, matching.ratio);
  MatchCounts c;
  c.left_keypoints = lf.size();
  c.right_keypoints = rf.size();
  c.raw = ms.ratio_passed;
  c.cross_checked = ms.matches.size();
  if (ms.matches.size() < 8) return c;
  const auto lp = positions(lf);
  const auto rp = positions(rf);
  try {
    c.inliers = ransac_fundamental(ms, lp, rp, ransac).inlier_count;
  } catch (const GeometryError&) {
    // identical views: every sample is degenerate, count what zero motion explains
    c.geometry_degenerate = true;
    for (const auto& m : ms.matches) {
      const Point2 a = lp[static_cast<std::size_t>(m.left)];
      const Point2 b = rp[static_cast<std::size_t>(m.right)];
      c.inliers += std::hypot(a.x - b.x, a.y - b.y) <= ransac.threshold_px;
    }
  }
  return c;
}

std::optional<double> percent_change(std::size_t before, std::size_t after) noexcept {
  if (before == 0) return after == 0 ? std::optional<double>(0.0) : std::nullopt;
  return 100.0 * (static_cast<double>(after) - static_cast<double>(before)) / static_cast<double>(before);
}

json PairReport::to_json() const {
  json j = {{"left", left}, {"right", right}};
  if (!error.empty()) {
    j["error"] = error;
    return j;
  }
  if (unmasked) j["unmasked"] = unmasked->to_json();
  if (masked) j["masked"] = masked->to_json();
  if (corrected) j["corrected"] = corrected->to_json();
  if (left_caustics_percent) j["left_caustics_percent"] = *left_caustics_percent;
  if (right_caustics_percent) j["right_caustics_percent"] = *right_caustics_percent;
  if (correction) j["correction"] = correction->to_json();
  if (unmasked && corrected) j["change_percent"] = change_json(*unmasked, *corrected);
  else if (unmasked && masked) j["change_percent"] = change_json(*unmasked, *masked);
  return j;
}

json EvaluationReport::to_json() const {
  json rows = json::array();
  MatchCounts unmasked;
  MatchCounts masked;
  MatchCounts corrected;
  bool any_masked = false;
  bool any_corrected = false;
  std::size_t failed = 0;
  for (const auto& p : pairs) {
    rows.push_back(p.to_json());
    if (!p.error.empty()) {
      ++failed;
      continue;
    }
    if (p.unmasked) unmasked += *p.unmasked;
    if (p.masked) {
      masked += *p.masked;
      any_masked = true;
    }
    if (p.corrected) {
      corrected += *p.corrected;
      any_corrected = true;
    }
  }
  json agg = {{"pairs", pairs.size()}, {"failed", failed}, {"unmasked", unmasked.to_json()}};
  if (any_masked) {
    agg["masked"] = masked.to_json();
    agg["masked_change_percent"] = change_json(unmasked, masked);
  }
  if (any_corrected) {
    agg["corrected"] = corrected.to_json();
    agg["corrected_change_percent"] = change_json(unmasked, corrected);
  }
  return {{"pairs", rows}, {"aggregate", agg}};
}

EvaluationReport evaluate_matching(const std::vector<EvaluationInput>& inputs, const PipelineConfig& config) {
  if (inputs.empty()) throw ParameterError("evaluate: no pairs given");
  EvaluationReport report;
  for (const auto& in : inputs) {
    PairReport row;
    row.left = in.left.string();
    row.right = in.right.string();
    try {
      const ImageU8 l = read_image(in.left);
      const ImageU8 r = read_image(in.right);
      row.unmasked = count_matches(l, r, nullptr, nullptr, config.features, config.ransac);
      if (in.left_mask || in.right_mask) {
        const BinaryMask lm = in.left_mask ? read_mask(*in.left_mask) : BinaryMask(l.width(), l.height());
        const BinaryMask rm = in.right_mask ? read_mask(*in.right_mask) : BinaryMask(r.width(), r.height());
        row.masked = count_matches(l, r, &lm, &rm, config.features, config.ransac);
        row.left_caustics_percent = mask_fraction(lm);
        row.right_caustics_percent = mask_fraction(rm);
      }
    } catch (const Error& e) {
      row.error = e.what();
      row.unmasked.reset();
      row.masked.reset();
      log_warning("evaluate: " + row.left + " / " + row.right + ": " + e.what());
    }
    report.pairs.push_back(std::move(row));
  }
  return report;
}

EvaluationReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto& io = config.io;
  if (io.images.size() < 2) throw PipelineError("config", "at least two images are needed");
  if (config.pairs.empty()) throw PipelineError("config", "no pairs to correct");
  std::vector<std::string> stems;
  for (const auto& p : io.images) stems.push_back(fs::path(p).stem().string());
  if (std::set<std::string>(stems.begin(), stems.end()).size() != stems.size())
    throw PipelineError("config", "image file names must be unique");

  std::vector<ImageU8> originals;
  std::optional<CameraCalibration> calib;
  try {
    for (const auto& p : io.images) originals.push_back(read_image(p));
    if (!io.calibration.empty()) calib = load_calibration(io.calibration);
  } catch (const Error& e) {
    throw PipelineError("load", e.what());
  }

  std::vector<BinaryMask> masks;
  try {
    const auto classifier = make_classifier(config.segmentation, config.ransac.seed);
    for (std::size_t i = 0; i < originals.size(); ++i) {
      std::optional<BinaryMask> ext;
      if (config.segmentation.method == SegmentationMethod::External) ext = read_mask(io.masks[i]);
      masks.push_back(segment_with(originals[i], config.segmentation, classifier.get(), ext ? &*ext : nullptr));
    }
  } catch (const Error& e) {
    throw PipelineError("segment", e.what());
  }

  std::vector<ImageU8> current = originals;
  std::vector<BinaryMask> remaining = masks;
  std::vector<CorrectionReport> corrections;
  const CorrectionParams params = config.correction_params();
  for (const auto& [a, b] : config.pairs) {
    const auto ia = static_cast<std::size_t>(a);
    const auto ib = static_cast<std::size_t>(b);
    PairCorrection pc;
    try {
      pc = correct_pair(current[ia], current[ib], remaining[ia], remaining[ib], calib, params);
    } catch (const PipelineError&) {
      throw;
    } catch (const Error& e) {
      throw PipelineError("correct", e.what());
    }
    current[ia] = std::move(pc.left);
    current[ib] = std::move(pc.right);
    remaining[ia] = std::move(pc.left_mask);
    remaining[ib] = std::move(pc.right_mask);
    corrections.push_back(pc.report);

    if (!io.debug_dir.empty() && pc.bundle) {
      try {
        const fs::path dir(io.debug_dir);
        fs::create_directories(dir);
        const std::string tag = "pair_" + std::to_string(a) + "_" + std::to_string(b) + "_";
        write_png(dir / (tag + "left_rect.png"), pc.bundle->left);
        write_png(dir / (tag + "right_rect.png"), pc.bundle->right);
        write_mask(dir / (tag + "left_mask_rect.png"), pc.bundle->left_mask);
        write_mask(dir / (tag + "right_mask_rect.png"), pc.bundle->right_mask);
        write_disparity_pfm(dir / (tag + "left_disparity.pfm"), pc.bundle->left_disparity);
        write_disparity_pfm(dir / (tag + "right_disparity.pfm"), pc.bundle->right_disparity);
        write_json(dir / (tag + "rectification.json"),
                   {{"H_left", matrix_to_json(pc.bundle->rectification.H_left)},
                    {"H_right", matrix_to_json(pc.bundle->rectification.H_right)},
                    {"size", {pc.bundle->rectification.size.width, pc.bundle->rectification.size.height}},
                    {"d_min", pc.d_min},
                    {"d_max", pc.d_max}});
      } catch (const Error& e) {
        throw PipelineError("write", e.what());
      }
    }
  }

  EvaluationReport report;
  try {
    for (std::size_t k = 0; k < config.pairs.size(); ++k) {
      const auto ia = static_cast<std::size_t>(config.pairs[k].first);
      const auto ib = static_cast<std::size_t>(config.pairs[k].second);
      PairReport row;
      row.left = io.images[ia];
      row.right = io.images[ib];
      row.unmasked = count_matches(originals[ia], originals[ib], nullptr, nullptr, config.features, config.ransac);
      row.corrected = count_matches(current[ia], current[ib], nullptr, nullptr, config.features, config.ransac);
      row.left_caustics_percent = mask_fraction(masks[ia]);
      row.right_caustics_percent = mask_fraction(masks[ib]);
      row.correction = corrections[k];
      report.pairs.push_back(std::move(row));
    }
  } catch (const Error& e) {
    throw PipelineError("evaluate", e.what());
  }

  try {
    const fs::path out(io.output_dir);
    fs::create_directories(out);
    for (std::size_t i = 0; i < current.size(); ++i) {
      write_png(out / (stems[i] + "_corrected.png"), current[i]);
      write_mask(out / (stems[i] + "_mask.png"), masks[i]);
    }
    write_json(out / "effective_config.json", config.to_json());
    write_json(out / "report.json", report.to_json());
  } catch (const Error& e) {
    throw PipelineError("write", e.what());
  } catch (const fs::filesystem_error& e) {
    throw PipelineError("write", e.what());
  }
  return report;
}

}  // namespace caustics
