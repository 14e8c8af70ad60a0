#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "caustics/color_transfer.hpp"
#include "caustics/image_io.hpp"
#include "caustics/log.hpp"
#include "caustics/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace caustics;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string debug_dir;
};

PipelineConfig base_config(const Globals& g) {
  PipelineConfig cfg = load_config(g.config.empty() ? std::nullopt : std::optional<fs::path>(g.config));
  if (g.seed) cfg.ransac.seed = *g.seed;
  if (!g.debug_dir.empty()) cfg.io.debug_dir = g.debug_dir;
  return cfg;
}

fs::path ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

void write_json_file(const fs::path& path, const json& j) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

BinaryMask mask_or_clean(const std::string& path, const ImageU8& img) {
  if (path.empty()) return BinaryMask(img.width(), img.height());
  BinaryMask m = read_mask(path);
  if (!m.same_shape(img)) throw DimensionError("mask " + path + " does not match its image");
  return m;
}

// Parses the subcommand-local enum spellings through the config reader so
// the accepted strings stay in one place.
SegmentationMethod parse_method(const std::string& s) {
  return PipelineConfig::from_json({{"segmentation", {{"method", s}}}}).segmentation.method;
}

CostKind parse_cost(const std::string& s) { return PipelineConfig::from_json({{"sgm", {{"cost", s}}}}).sgm.params.cost; }

struct SegmentArgs {
  std::string image, method, mask_in, train_image, train_mask, out;
  std::optional<double> threshold;
};

void run_segment(const Globals& g, const SegmentArgs& a) {
  PipelineConfig cfg = base_config(g);
  if (!a.method.empty()) cfg.segmentation.method = parse_method(a.method);
  if (a.threshold) cfg.segmentation.threshold = *a.threshold;
  if (!a.train_image.empty()) cfg.segmentation.train_image = a.train_image;
  if (!a.train_mask.empty()) cfg.segmentation.train_mask = a.train_mask;
  cfg.validate();
  const ImageU8 img = read_image(a.image);
  std::optional<BinaryMask> ext;
  if (cfg.segmentation.method == SegmentationMethod::External) {
    if (a.mask_in.empty()) throw ParameterError("--mask-in is required for the external method");
    ext = read_mask(a.mask_in);
  }
  const BinaryMask mask = segment_image(img, cfg.segmentation, ext ? &*ext : nullptr, cfg.ransac.seed);
  write_mask(ensure_parent(a.out), mask);
  std::cout << json{{"caustics_percent", mask_fraction(mask)}}.dump() << '\n';
}

struct TransferArgs {
  std::string source, target, source_mask, target_mask, out;
};

void run_transfer(const TransferArgs& a) {
  const ImageU8 src = read_image(a.source);
  const ImageU8 dst = read_image(a.target);
  write_png(ensure_parent(a.out), transfer_color_rgb(src, mask_or_clean(a.source_mask, src), dst, mask_or_clean(a.target_mask, dst)));
}

struct RectifyArgs {
  std::string left, right, left_mask, right_mask, calib, out_dir;
  std::optional<double> threshold_px;
};

void run_rectify(const Globals& g, const RectifyArgs& a) {
  PipelineConfig cfg = base_config(g);
  if (a.threshold_px) cfg.ransac.threshold_px = *a.threshold_px;
  cfg.validate();
  const ImageU8 l = read_image(a.left);
  const ImageU8 r = read_image(a.right);
  const BinaryMask lm = mask_or_clean(a.left_mask, l);
  const BinaryMask rm = mask_or_clean(a.right_mask, r);
  std::optional<CameraCalibration> calib;
  if (!a.calib.empty()) calib = load_calibration(a.calib);

  const auto lf = detect_masked_features(to_gray(l), lm, cfg.features.max_keypoints, cfg.features.features);
  const auto rf = detect_masked_features(to_gray(r), rm, cfg.features.max_keypoints, cfg.features.features);
  MatchSet ms = match_features(lf, rf, cfg.features.ratio);
  if (ms.matches.size() < 8) throw PipelineError("matching", "insufficient matches");
  auto points = [&](const std::vector<Feature>& f) {
    std::vector<Point2> out;
    for (const auto& x : f) out.push_back(calib ? calib->undistort({x.kp.x, x.kp.y}) : Point2{x.kp.x, x.kp.y});
    return out;
  };
  RansacResult rr;
  try {
    rr = ransac_fundamental(ms, points(lf), points(rf), cfg.ransac);
  } catch (const GeometryError&) {
    throw PipelineError("matching", "insufficient matches");
  }
  if (rr.inlier_count < 8) throw PipelineError("matching", "insufficient matches");
  RectifyingPair rect;
  try {
    rect = rectify_pair(rr.F, {l.width(), l.height()}, {r.width(), r.height()});
  } catch (const GeometryError& e) {
    throw PipelineError("rectify", e.what());
  }
  const ViewMapping ml{rect.H_left, calib};
  const ViewMapping mr{rect.H_right, calib};
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const auto wl = warp_image(l, ml, rect.size);
  const auto wr = warp_image(r, mr, rect.size);
  write_png(dir / "left_rect.png", wl.image);
  write_png(dir / "right_rect.png", wr.image);
  write_mask(dir / "left_mask_rect.png", warp_mask_conservative(lm, ml, rect.size).mask);
  write_mask(dir / "right_mask_rect.png", warp_mask_conservative(rm, mr, rect.size).mask);
  write_json_file(dir / "rectification.json", {{"F", matrix_to_json(rr.F)},
                                               {"H_left", matrix_to_json(rect.H_left)},
                                               {"H_right", matrix_to_json(rect.H_right)},
                                               {"size", {rect.size.width, rect.size.height}},
                                               {"cross_checked", ms.matches.size()},
                                               {"inliers", rr.inlier_count}});
}

struct DisparityArgs {
  std::string left, right, left_mask, right_mask, cost, out, status, pfm;
  std::optional<int> dmin, dmax, p1, p2;
};

void run_disparity(const Globals& g, const DisparityArgs& a) {
  PipelineConfig cfg = base_config(g);
  SgmParams& p = cfg.sgm.params;
  if (a.dmin) p.d_min = *a.dmin;
  if (a.dmax) p.d_max = *a.dmax;
  if (a.p1) p.p1 = *a.p1;
  if (a.p2) p.p2 = *a.p2;
  if (!a.cost.empty()) p.cost = parse_cost(a.cost);
  p.validate();
  const ImageU8 l = read_image(a.left);
  const ImageU8 r = read_image(a.right);
  const BinaryMask lm = mask_or_clean(a.left_mask, l);
  const BinaryMask rm = mask_or_clean(a.right_mask, r);
  StereoResult res;
  try {
    res = compute_disparity(l, r, p, &lm, &rm);
  } catch (const Error& e) {
    throw PipelineError("disparity", e.what());
  }
  if (res.mi_fell_back) log_warning("disparity: mutual information fell back to census");
  write_disparity_png16(ensure_parent(a.out), res.left);
  if (!a.status.empty()) write_status_png(ensure_parent(a.status), res.left);
  if (!a.pfm.empty()) write_disparity_pfm(ensure_parent(a.pfm), res.left);
}

struct CorrectArgs {
  std::string left, right, left_mask, right_mask, calib, out_dir;
};

void run_correct(const Globals& g, const CorrectArgs& a) {
  PipelineConfig cfg = base_config(g);
  cfg.validate();
  const ImageU8 l = read_image(a.left);
  const ImageU8 r = read_image(a.right);
  const BinaryMask lm = mask_or_clean(a.left_mask, l);
  const BinaryMask rm = mask_or_clean(a.right_mask, r);
  std::optional<CameraCalibration> calib;
  if (!a.calib.empty()) calib = load_calibration(a.calib);
  else if (!cfg.io.calibration.empty()) calib = load_calibration(cfg.io.calibration);

  const PairCorrection pc = correct_pair(l, r, lm, rm, calib, cfg.correction_params());
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_png(dir / "left_corrected.png", pc.left);
  write_png(dir / "right_corrected.png", pc.right);
  write_mask(dir / "left_remaining_mask.png", pc.left_mask);
  write_mask(dir / "right_remaining_mask.png", pc.right_mask);
  write_json_file(dir / "report.json", {{"left", pc.left_report.to_json()},
                                        {"right", pc.right_report.to_json()},
                                        {"total", pc.report.to_json()},
                                        {"d_min", pc.d_min},
                                        {"d_max", pc.d_max},
                                        {"inliers", pc.matches.inliers}});
  if (!cfg.io.debug_dir.empty() && pc.bundle) {
    const fs::path dbg(cfg.io.debug_dir);
    fs::create_directories(dbg);
    write_png(dbg / "left_rect.png", pc.bundle->left);
    write_png(dbg / "right_rect.png", pc.bundle->right);
    write_disparity_pfm(dbg / "left_disparity.pfm", pc.bundle->left_disparity);
    write_disparity_pfm(dbg / "right_disparity.pfm", pc.bundle->right_disparity);
  }
  write_json_file(dir / "effective_config.json", cfg.to_json());
}

struct DatasetArgs {
  std::string stack, reference = "auto", out_dir;
  std::optional<int> blur, threshold;
};

void run_dataset(const Globals& g, const DatasetArgs& a) {
  PipelineConfig cfg = base_config(g);
  if (a.blur) cfg.ground_truth.blur_kernel = *a.blur;
  if (a.threshold) {
    if (*a.threshold < 0 || *a.threshold > 255) throw ParameterError("--threshold must be in 0..255");
    cfg.ground_truth.threshold = static_cast<std::uint8_t>(*a.threshold);
  }
  cfg.validate();

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.stack)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff"))
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no images in " + a.stack);

  ImageStack stack;
  for (const auto& f : files) stack.images.push_back(read_image(f));
  const fs::path out(a.out_dir);
  fs::create_directories(out);
  ImageU8 reference;
  if (a.reference == "auto") {
    const auto ref = reference_min_luminosity(stack);
    reference = ref.image;
    write_png(out / "reference.png", reference);
  } else {
    reference = read_image(a.reference);
  }

  json summary = json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (a.reference != "auto" && fs::equivalent(files[i], a.reference)) continue;
    const auto gt = generate_ground_truth(stack.images[i], reference, cfg.ground_truth);
    const std::string stem = files[i].stem().string();
    write_png(out / (stem + "_diff.png"), gt.normalized);
    write_mask(out / (stem + "_mask.png"), gt.mask);
    write_png(out / (stem + "_overlay.png"), gt.overlay);
    summary.push_back({{"image", files[i].filename().string()},
                       {"caustics_percent", mask_fraction(gt.mask)},
                       {"degenerate", gt.degenerate}});
  }
  write_json_file(out / "ground_truth.json", summary);
}

struct EvaluateArgs {
  std::vector<std::string> left, right, left_mask, right_mask;
  std::string out;
};

void run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const PipelineConfig cfg = base_config(g);
  if (a.left.size() != a.right.size()) throw ParameterError("--left and --right must be given the same number of times");
  const bool masked = !a.left_mask.empty() || !a.right_mask.empty();
  if (masked && (a.left_mask.size() != a.left.size() || a.right_mask.size() != a.right.size()))
    throw ParameterError("masks must be given for every pair or for none");
  std::vector<EvaluationInput> in;
  for (std::size_t i = 0; i < a.left.size(); ++i) {
    EvaluationInput e{a.left[i], a.right[i], std::nullopt, std::nullopt};
    if (masked) {
      e.left_mask = a.left_mask[i];
      e.right_mask = a.right_mask[i];
    }
    in.push_back(std::move(e));
  }
  const json report = evaluate_matching(in, cfg).to_json();
  if (a.out.empty()) std::cout << report.dump(2) << '\n';
  else write_json_file(a.out, report);
}

void run_pipeline_cmd(const Globals& g, const std::string& out_dir) {
  PipelineConfig cfg = base_config(g);
  if (!out_dir.empty()) cfg.io.output_dir = out_dir;
  const auto report = run_pipeline(cfg);
  std::cout << report.to_json().at("aggregate").dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Caustics removal for overlapping shallow-water images"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RANSAC / training seed");
  app.add_option("--debug-dir", g.debug_dir, "Directory for intermediate rasters");

  SegmentArgs seg;
  auto* s_seg = app.add_subcommand("segment", "Label caustics pixels of one image");
  s_seg->add_option("--image", seg.image)->required();
  s_seg->add_option("--method", seg.method)->check(CLI::IsMember({"threshold", "knn", "tree", "external"}));
  s_seg->add_option("--mask-in", seg.mask_in, "Mask for the external method");
  s_seg->add_option("--threshold", seg.threshold, "l-alpha-beta l threshold");
  s_seg->add_option("--train-image", seg.train_image);
  s_seg->add_option("--train-mask", seg.train_mask);
  s_seg->add_option("--out", seg.out)->required();

  TransferArgs tr;
  auto* s_tr = app.add_subcommand("transfer-color", "Move source colour statistics onto the target's");
  s_tr->add_option("--source", tr.source)->required();
  s_tr->add_option("--target", tr.target)->required();
  s_tr->add_option("--source-mask", tr.source_mask);
  s_tr->add_option("--target-mask", tr.target_mask);
  s_tr->add_option("--out", tr.out)->required();

  RectifyArgs rc;
  auto* s_rc = app.add_subcommand("rectify", "Estimate F and rectify a pair");
  s_rc->add_option("--left", rc.left)->required();
  s_rc->add_option("--right", rc.right)->required();
  s_rc->add_option("--left-mask", rc.left_mask);
  s_rc->add_option("--right-mask", rc.right_mask);
  s_rc->add_option("--threshold-px", rc.threshold_px);
  s_rc->add_option("--calib", rc.calib);
  s_rc->add_option("--out-dir", rc.out_dir)->required();

  DisparityArgs dp;
  auto* s_dp = app.add_subcommand("disparity", "Semi-global matching on a rectified pair");
  s_dp->add_option("--left", dp.left)->required();
  s_dp->add_option("--right", dp.right)->required();
  s_dp->add_option("--left-mask", dp.left_mask);
  s_dp->add_option("--right-mask", dp.right_mask);
  s_dp->add_option("--dmin", dp.dmin);
  s_dp->add_option("--dmax", dp.dmax);
  s_dp->add_option("--p1", dp.p1);
  s_dp->add_option("--p2", dp.p2);
  s_dp->add_option("--cost", dp.cost)->check(CLI::IsMember({"census", "mi"}));
  s_dp->add_option("--out", dp.out, "16-bit PNG, 16 * disparity")->required();
  s_dp->add_option("--status", dp.status, "8-bit status PNG");
  s_dp->add_option("--pfm", dp.pfm, "Float disparity");

  CorrectArgs co;
  auto* s_co = app.add_subcommand("correct", "Replace caustics pixels of a pair from each other");
  s_co->add_option("--left", co.left)->required();
  s_co->add_option("--right", co.right)->required();
  s_co->add_option("--left-mask", co.left_mask)->required();
  s_co->add_option("--right-mask", co.right_mask)->required();
  s_co->add_option("--calib", co.calib);
  s_co->add_option("--out-dir", co.out_dir)->required();

  DatasetArgs ds;
  auto* s_ds = app.add_subcommand("dataset-gt", "Ground-truth masks for a fixed-pose stack");
  s_ds->add_option("--stack", ds.stack)->required()->check(CLI::ExistingDirectory);
  s_ds->add_option("--reference", ds.reference, "Reference image, or 'auto' for the minimum-luminosity composite");
  s_ds->add_option("--blur", ds.blur);
  s_ds->add_option("--threshold", ds.threshold);
  s_ds->add_option("--out-dir", ds.out_dir)->required();

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "Match statistics with and without mask gating");
  s_ev->add_option("--left", ev.left)->required();
  s_ev->add_option("--right", ev.right)->required();
  s_ev->add_option("--left-mask", ev.left_mask);
  s_ev->add_option("--right-mask", ev.right_mask);
  s_ev->add_option("--out", ev.out);

  std::string pipeline_out;
  auto* s_pl = app.add_subcommand("pipeline", "Run the configured multi-view correction");
  s_pl->add_option("--out-dir", pipeline_out, "Overrides io.output_dir");

  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "segment") run_segment(g, seg);
    else if (cmd == "transfer-color") run_transfer(tr);
    else if (cmd == "rectify") run_rectify(g, rc);
    else if (cmd == "disparity") run_disparity(g, dp);
    else if (cmd == "correct") run_correct(g, co);
    else if (cmd == "dataset-gt") run_dataset(g, ds);
    else if (cmd == "evaluate") run_evaluate(g, ev);
    else run_pipeline_cmd(g, pipeline_out);
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << cmd << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
