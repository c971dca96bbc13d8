#include "thinrecon/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "thinrecon/colmap_model.hpp"
#include "thinrecon/dataprep.hpp"
#include "thinrecon/errors.hpp"
#include "thinrecon/meshkit.hpp"
#include "thinrecon/optimize.hpp"
#include "thinrecon/scene_file.hpp"
#include "thinrecon/simd/raster_kernels.hpp"

namespace thinrecon::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised by command bodies to pick the exit code.
struct CommandFailure {
  ExitCode code;
  std::string message;
};

[[noreturn]] void fail_input(const std::string& message) { throw CommandFailure{kInputError, message}; }

void ensure_directory(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_input("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// prep

struct PrepOptions {
  std::string frames, out, masks;
  int count = kDefaultFrameCount;
  int size = kDefaultPrepResolution;
  std::optional<int> threshold;
};

int cmd_prep(const PrepOptions& opt, std::ostream& out) {
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(opt.frames)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) fail_input("no PNG frames found in " + opt.frames);
  if (static_cast<std::size_t>(opt.count) > frames.size()) {
    fail_input("cannot sample " + std::to_string(opt.count) + " frames from " +
               std::to_string(frames.size()));
  }
  const auto picked = sample_indices(frames.size(), static_cast<std::size_t>(opt.count));

  std::vector<fs::path> mask_paths(picked.size());
  if (!opt.masks.empty()) {
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < picked.size(); ++i) {
      const std::string stem = frames[picked[i]].stem().string();
      mask_paths[i] = find_by_stem(opt.masks, stem);
      if (mask_paths[i].empty()) missing.push_back(stem);
    }
    if (!missing.empty()) {
      std::string msg = "no mask for frame stem(s):";
      for (const auto& s : missing) msg += " " + s;
      fail_input(msg);
    }
  }

  const fs::path out_dir(opt.out);
  const bool with_masks = !opt.masks.empty() || opt.threshold.has_value();
  ensure_directory(out_dir / "images");
  if (with_masks) ensure_directory(out_dir / "masks");

  json manifest;
  manifest["source"] = opt.frames;
  manifest["total_frames"] = frames.size();
  manifest["size"] = opt.size;
  manifest["frames"] = json::array();
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const fs::path& src = frames[picked[i]];
    const ImageBuffer frame = read_png(src, 3);
    const ImageBuffer small = downscale(frame, opt.size, opt.size);
    const fs::path image_out = out_dir / "images" / (src.stem().string() + ".png");
    write_png(image_out, small);
    json entry = {{"index", picked[i]}, {"source", src.filename().string()}, {"image", image_out.string()}};
    if (with_masks) {
      ImageBuffer mask;
      if (opt.threshold) {
        mask = make_mask_threshold(frame, *opt.threshold);
      } else {
        mask = read_png(mask_paths[i], 1);
        if (mask.width != frame.width || mask.height != frame.height) {
          fail_input("mask " + mask_paths[i].string() + " does not match frame size");
        }
      }
      mask = binarize_mask(downscale(mask, opt.size, opt.size), kMaskThreshold);
      const fs::path mask_out = out_dir / "masks" / (src.stem().string() + ".png");
      write_png(mask_out, mask);
      entry["mask"] = mask_out.string();
    }
    manifest["frames"].push_back(entry);
  }
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  out << manifest.dump(2) << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------
// poses

struct PosesOptions {
  std::string colmap_dir, out, format = "auto";
  double target_radius = kDefaultTargetRadius;
};

int cmd_poses(const PosesOptions& opt, std::ostream& out) {
  const ModelFormat format = opt.format == "text"     ? ModelFormat::kText
                             : opt.format == "binary" ? ModelFormat::kBinary
                                                      : ModelFormat::kAuto;
  const SceneModel raw = parse_model(opt.colmap_dir, format);
  const SceneModel scene = normalize_scene(raw, opt.target_radius);
  ensure_directory(fs::path(opt.out).parent_path());
  save_scene(opt.out, scene);
  out << "cameras: " << scene.cameras.size() << ", images: " << scene.images.size()
      << ", points: " << scene.points3d.size() << " (of " << raw.points3d.size() << ")\n"
      << "normalization: scale " << scene.norm->scale << ", center [" << scene.norm->center.x() << ", "
      << scene.norm->center.y() << ", " << scene.norm->center.z() << "]\n"
      << "wrote " << opt.out << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructOptions {
  std::string scene, frames, masks, out;
  TrainConfig config;
  int snapshot_every = 0;
  bool dump_coverage = false;
};

json config_to_json(const TrainConfig& c) {
  return {{"grid_res", c.grid_res},     {"train_res", c.train_res},   {"iters", c.iters},
          {"lr", c.lr},                 {"beta1", c.beta1},           {"beta2", c.beta2},
          {"eps", c.eps},               {"lambda_lap", c.lambda_lap}, {"lambda_sdf", c.lambda_sdf},
          {"batch_views", c.batch_views}, {"gamma", c.gamma},         {"offsets", c.offsets_enabled},
          {"seed", c.seed},             {"threads", c.threads}};
}

json record_to_json(const TrainRecord& r) {
  return {{"iteration", r.iteration}, {"total", r.total},     {"silhouette", r.silhouette},
          {"laplacian", r.laplacian}, {"sdf", r.sdf},         {"lr", r.lr}};
}

std::string snapshot_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "snapshot_%06d.obj", iteration);
  return buf;
}

int cmd_reconstruct(const ReconstructOptions& opt, std::ostream& out, std::ostream& err) {
  const SceneModel scene = load_scene(opt.scene);
  std::vector<View> views;
  try {
    views = load_views(opt.frames, opt.masks, scene, opt.config.train_res, opt.config.threads);
  } catch (const std::invalid_argument& e) {
    fail_input(e.what());
  }
  if (views.size() < 2) fail_input("reconstruction needs at least two registered views");

  const fs::path out_path(opt.out);
  const fs::path run_dir = out_path.parent_path();
  ensure_directory(run_dir);
  std::ofstream log(run_dir / "train_log.jsonl");
  if (!log) fail_input("cannot write " + (run_dir / "train_log.jsonl").string());

  err << "reconstructing from " << views.size() << " views, grid " << opt.config.grid_res
      << ", kernels " << simd::active_kernels().name << '\n';
  const auto start = std::chrono::steady_clock::now();
  const IterationCallback callback = [&](const TrainRecord& r, const TetGrid& grid, const SdfField& field) {
    log << record_to_json(r).dump() << '\n';
    if (opt.snapshot_every > 0 && (r.iteration + 1) % opt.snapshot_every == 0) {
      write_obj(run_dir / snapshot_name(r.iteration + 1), marching_tets(grid, field).mesh);
    }
    if ((r.iteration + 1) % 100 == 0 || r.iteration + 1 == opt.config.iters) {
      err << "iter " << r.iteration + 1 << "/" << opt.config.iters << "  loss " << r.total
          << "  silhouette " << r.silhouette << '\n';
    }
  };

  TrainResult result;
  try {
    result = train(std::span<const View>(views), opt.config, callback);
  } catch (const NonFiniteLoss& e) {
    const fs::path dump = run_dir / "failure_field.json";
    write_text(dump, json{{"iteration", e.iteration()},
                          {"grid_res", opt.config.grid_res},
                          {"values", e.last_field().values}}
                         .dump() +
                         "\n");
    err << "error: " << e.what() << "\nlast finite field written to " << dump.string() << '\n';
    return kNumericalFailure;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_obj(out_path, result.mesh);
  if (opt.dump_coverage) {
    const RasterSettings settings = RasterSettings::for_resolution(opt.config.train_res, opt.config.gamma);
    ensure_directory(run_dir / "coverage");
    for (const auto& view : views) {
      const SoftRaster raster = soft_coverage(result.mesh, view, opt.config.train_res, settings);
      ImageBuffer img = ImageBuffer::filled(opt.config.train_res, opt.config.train_res, 1);
      for (std::size_t p = 0; p < img.data.size(); ++p) {
        img.data[p] = static_cast<std::uint8_t>(std::lround(255.0 * raster.coverage.values[p]));
      }
      write_png(run_dir / "coverage" / (fs::path(view.name).stem().string() + ".png"), img);
    }
  }

  json report;
  report["config"] = config_to_json(opt.config);
  report["train"] = {{"iterations", result.report.records.size()},
                     {"first", record_to_json(result.report.records.front())},
                     {"last", record_to_json(result.report.records.back())},
                     {"empty_mesh_iterations", result.report.empty_mesh_iterations},
                     {"seconds", seconds},
                     {"kernels", std::string(simd::active_kernels().name)}};
  report["mesh"] = to_json(result.report.final_mesh);
  write_text(run_dir / "report.json", report.dump(2) + "\n");
  out << report["mesh"].dump(2) << '\n' << "wrote " << out_path.string() << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::string mesh, ref, scene, masks, report;
  int res = 256;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  int threads = 1;
};

int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out) {
  const TriMesh mesh = read_obj(opt.mesh);
  MeshQualityReport quality = analyze_mesh(mesh);
  if (!opt.ref.empty()) {
    const TriMesh ref = read_obj(opt.ref);
    if (mesh.empty() || ref.empty()) fail_input("chamfer needs two non-empty meshes");
    quality.chamfer = chamfer(mesh, ref, opt.samples, opt.seed, opt.threads);
  }
  if (!opt.scene.empty()) {
    const SceneModel scene = load_scene(opt.scene);
    double sum = 0.0;
    for (const auto& image : scene.images) {
      const std::string stem = fs::path(image.name).stem().string();
      const fs::path mask_path = find_by_stem(opt.masks, stem);
      if (mask_path.empty()) fail_input("no mask for '" + stem + "' in " + opt.masks);
      const ImageBuffer full = read_png(mask_path, 1);
      if (full.width < opt.res || full.height < opt.res) {
        fail_input("mask " + mask_path.string() + " is smaller than --res");
      }
      const ImageBuffer target = binarize_mask(downscale(full, opt.res, opt.res), kMaskThreshold);
      const ImageBuffer rendered = hard_coverage(mesh, scene.camera_for(image), image.pose, opt.res);
      sum += iou(rendered, target);
    }
    quality.mean_iou = scene.images.empty() ? 0.0 : sum / static_cast<double>(scene.images.size());
  }
  const json j = to_json(quality);
  if (!opt.report.empty()) write_text(opt.report, j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  return kSuccess;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string colmap_script(const std::string& images_dir, const std::string& matcher) {
  std::ostringstream s;
  s << "#!/usr/bin/env bash\n"
       "# Sparse reconstruction with COLMAP for a small turntable image set.\n"
       "set -euo pipefail\n\n"
       "IMAGES=\""
    << images_dir
    << "\"\n"
       "WORKSPACE=\"${1:-colmap_workspace}\"\n"
       "mkdir -p \"$WORKSPACE/sparse\"\n\n"
       "colmap feature_extractor \\\n"
       "  --database_path \"$WORKSPACE/database.db\" \\\n"
       "  --image_path \"$IMAGES\" \\\n"
       "  --ImageReader.single_camera 1\n\n";
  if (matcher == "sequential") {
    s << "colmap sequential_matcher \\\n"
         "  --database_path \"$WORKSPACE/database.db\"\n\n";
  } else {
    s << "colmap exhaustive_matcher \\\n"
         "  --database_path \"$WORKSPACE/database.db\"\n\n";
  }
  s << "colmap mapper \\\n"
       "  --database_path \"$WORKSPACE/database.db\" \\\n"
       "  --image_path \"$IMAGES\" \\\n"
       "  --output_path \"$WORKSPACE/sparse\"\n\n"
       "# Text copy of the first model for inspection.\n"
       "colmap model_converter \\\n"
       "  --input_path \"$WORKSPACE/sparse/0\" \\\n"
       "  --output_path \"$WORKSPACE/sparse/0\" \\\n"
       "  --output_type TXT\n";
  return s.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thin-object mesh reconstruction from masked multi-view frames"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read flags from a key = value file; command-line values take precedence");

  PrepOptions prep;
  auto* prep_cmd = app.add_subcommand("prep", "Sample frames at equal intervals, downscale, build masks");
  prep_cmd->add_option("--frames", prep.frames, "Directory of sequential PNG frames")
      ->required()
      ->check(CLI::ExistingDirectory);
  prep_cmd->add_option("--out", prep.out, "Output directory")->required();
  prep_cmd->add_option("--count", prep.count, "Frames to sample")->check(CLI::PositiveNumber);
  prep_cmd->add_option("--size", prep.size, "Output resolution (square)")->check(CLI::PositiveNumber);
  auto* masks_opt = prep_cmd->add_option("--masks", prep.masks, "Directory of masks matched by file stem")
                        ->check(CLI::ExistingDirectory);
  auto* threshold_opt = prep_cmd->add_option("--threshold", prep.threshold, "Luma threshold mask fallback")
                            ->check(CLI::Range(0, 255));
  masks_opt->excludes(threshold_opt);

  PosesOptions poses;
  auto* poses_cmd = app.add_subcommand("poses", "Parse a COLMAP model and normalize it into scene.json");
  poses_cmd->add_option("--colmap-dir", poses.colmap_dir, "COLMAP sparse model directory")->required();
  poses_cmd->add_option("--out", poses.out, "Output scene.json")->required();
  poses_cmd->add_option("--target-radius", poses.target_radius, "95th-percentile object radius after normalization")
      ->check(CLI::PositiveNumber);
  poses_cmd->add_option("--format", poses.format, "Model format")->check(CLI::IsMember({"auto", "text", "binary"}));

  ReconstructOptions rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Optimize an SDF on a tet grid against the masks");
  rec_cmd->add_option("--scene", rec.scene, "scene.json from `poses`")->required()->check(CLI::ExistingFile);
  rec_cmd->add_option("--frames", rec.frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
  rec_cmd->add_option("--masks", rec.masks, "Mask directory")->required()->check(CLI::ExistingDirectory);
  rec_cmd->add_option("--out", rec.out, "Output mesh (OBJ); other artifacts go next to it")->required();
  rec_cmd->add_option("--grid-res", rec.config.grid_res, "Tet grid cells per axis")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--iters", rec.config.iters, "Iterations")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--lambda-lap", rec.config.lambda_lap, "Laplacian weight")->check(CLI::NonNegativeNumber);
  rec_cmd->add_option("--lambda-sdf", rec.config.lambda_sdf, "SDF sign regularizer weight")->check(CLI::NonNegativeNumber);
  rec_cmd->add_option("--train-res", rec.config.train_res, "Training resolution")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--lr", rec.config.lr, "Initial learning rate")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--batch-views", rec.config.batch_views, "Views per iteration")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--gamma", rec.config.gamma, "Soft edge width in px^2 at 128 px")->check(CLI::PositiveNumber);
  rec_cmd->add_flag("--offsets", rec.config.offsets_enabled, "Optimize per-vertex grid offsets");
  rec_cmd->add_option("--seed", rec.config.seed, "Random seed");
  rec_cmd->add_option("--threads", rec.config.threads, "Worker threads")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--snapshot-every", rec.snapshot_every, "Write an OBJ snapshot every K iterations")
      ->check(CLI::NonNegativeNumber);
  rec_cmd->add_flag("--dump-coverage", rec.dump_coverage, "Write final soft coverage images");

  EvaluateOptions ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Mesh quality report, chamfer and silhouette IoU");
  ev_cmd->add_option("--mesh", ev.mesh, "Mesh to evaluate (OBJ)")->required();
  ev_cmd->add_option("--ref", ev.ref, "Reference mesh for chamfer distance");
  auto* scene_opt = ev_cmd->add_option("--scene", ev.scene, "scene.json for IoU evaluation");
  auto* ev_masks_opt = ev_cmd->add_option("--masks", ev.masks, "Mask directory for IoU evaluation");
  scene_opt->needs(ev_masks_opt);
  ev_masks_opt->needs(scene_opt);
  ev_cmd->add_option("--res", ev.res, "IoU rendering resolution")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--samples", ev.samples, "Chamfer samples per mesh")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--seed", ev.seed, "Chamfer sampling seed");
  ev_cmd->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--report", ev.report, "Also write the JSON report here");

  std::string script_images, script_out, matcher = "exhaustive";
  auto* script_cmd = app.add_subcommand("colmap-script", "Emit a shell script that runs COLMAP");
  script_cmd->add_option("--images", script_images, "Image directory")->required();
  script_cmd->add_option("--out", script_out, "Output script path")->required();
  script_cmd->add_option("--matcher", matcher, "Feature matcher")->check(CLI::IsMember({"exhaustive", "sequential"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (prep_cmd->parsed()) return cmd_prep(prep, out);
    if (poses_cmd->parsed()) return cmd_poses(poses, out);
    if (rec_cmd->parsed()) {
      rec.config.validate();
      return cmd_reconstruct(rec, out, err);
    }
    if (ev_cmd->parsed()) return cmd_evaluate(ev, out);
    if (script_cmd->parsed()) {
      ensure_directory(fs::path(script_out).parent_path());
      write_text(script_out, colmap_script(script_images, matcher));
      std::error_code ec;
      fs::permissions(script_out, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                      fs::perm_options::add, ec);
      out << "wrote " << script_out << '\n';
      return kSuccess;
    }
  } catch (const CommandFailure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kUsageError;
}

}  // namespace thinrecon::cli
