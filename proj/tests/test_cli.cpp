#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "synthetic_scene.hpp"
#include "temp_dir.hpp"
#include "thinrecon/cli.hpp"
#include "thinrecon/meshkit.hpp"
#include "thinrecon/scene_file.hpp"

using namespace thinrecon;
using thinrecon::testing::read_file;
using thinrecon::testing::TempDir;
using thinrecon::testing::write_file;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const fs::path kToyText = fs::path(THINRECON_FIXTURES) / "toy_text";

// Frames, masks and a scene.json for a small disc seen from a few angles.
void write_disc_dataset(const fs::path& root, int res, int count) {
  fs::create_directories(root / "frames");
  fs::create_directories(root / "masks");
  const TriMesh disc = thinrecon::testing::make_disc(0.5, 0.1, 24);
  SceneModel scene;
  scene.cameras.emplace(1, thinrecon::testing::square_camera(res));
  scene.cameras.at(1).camera_id = 1;
  for (int i = 0; i < count; ++i) {
    RegisteredImage img;
    img.image_id = static_cast<std::uint32_t>(i + 1);
    img.camera_id = 1;
    img.name = "frame_" + std::to_string(i) + ".png";
    img.pose = thinrecon::testing::look_at_origin(25.0 + 360.0 * i / count, (i % 2) ? 20.0 : -15.0);
    scene.images.push_back(img);
    write_png(root / "frames" / img.name, ImageBuffer::filled(res, res, 3, 90));
    write_png(root / "masks" / img.name, hard_coverage(disc, scene.cameras.at(1), img.pose, res));
  }
  scene.norm = SimTransform{};
  save_scene(root / "scene.json", scene);
  write_obj(root / "disc.obj", disc);
}

void write_frames(const fs::path& dir, int count, int size) {
  fs::create_directories(dir);
  write_png(dir / "tmp.png", ImageBuffer::filled(size, size, 3, 200));
  const std::string bytes = read_file(dir / "tmp.png");
  fs::remove(dir / "tmp.png");
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "f_%05d.png", i);
    write_file(dir / name, bytes);
  }
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({}).code == cli::kUsageError);
  CHECK(run_cli({"bogus"}).code == cli::kUsageError);
  CHECK(run_cli({"poses", "--colmap-dir"}).code == cli::kUsageError);
  CHECK(run_cli({"colmap-script", "--images", "x", "--out", "y", "--matcher", "fancy"}).code == cli::kUsageError);
  const Result help = run_cli({"--help"});
  CHECK(help.code == cli::kSuccess);
  CHECK(help.out.find("reconstruct") != std::string::npos);
}

TEST_CASE("colmap-script emits the chosen matcher and is byte-stable") {
  TempDir dir("script");
  REQUIRE(run_cli({"colmap-script", "--images", "imgs", "--out", (dir / "a.sh").string()}).code == 0);
  REQUIRE(run_cli({"colmap-script", "--images", "imgs", "--out", (dir / "b.sh").string()}).code == 0);
  REQUIRE(run_cli({"colmap-script", "--images", "imgs", "--out", (dir / "s.sh").string(), "--matcher",
                   "sequential"})
              .code == 0);
  const std::string a = read_file(dir / "a.sh");
  CHECK(a == read_file(dir / "b.sh"));
  CHECK(a == cli::colmap_script("imgs", "exhaustive"));
  CHECK(a.find("colmap exhaustive_matcher") != std::string::npos);
  CHECK(a.find("sequential_matcher") == std::string::npos);
  CHECK(a.find("colmap feature_extractor") < a.find("colmap exhaustive_matcher"));
  CHECK(a.find("colmap exhaustive_matcher") < a.find("colmap mapper"));
  const std::string s = read_file(dir / "s.sh");
  CHECK(s.find("colmap sequential_matcher") != std::string::npos);
  CHECK(s.find("exhaustive_matcher") == std::string::npos);
}

TEST_CASE("poses writes a normalized scene") {
  TempDir dir("poses");
  const Result r = run_cli({"poses", "--colmap-dir", kToyText.string(), "--out", (dir / "scene.json").string(),
                            "--target-radius", "0.35"});
  REQUIRE(r.code == 0);
  const SceneModel scene = load_scene(dir / "scene.json");
  REQUIRE(scene.norm.has_value());
  CHECK(scene.images.size() == 3);
  std::vector<double> radii;
  for (const auto& p : scene.points3d) radii.push_back(p.xyz.norm());
  CHECK(std::abs(percentile(radii, 0.95) - 0.35) <= 1e-9);

  TempDir empty("poses_empty");
  CHECK(run_cli({"poses", "--colmap-dir", empty.path().string(), "--out", (dir / "x.json").string()}).code ==
        cli::kInputError);
  write_file(empty / "cameras.txt", "1 PINHOLE 512\n");
  write_file(empty / "images.txt", "");
  const Result bad = run_cli({"poses", "--colmap-dir", empty.path().string(), "--out", (dir / "x.json").string()});
  CHECK(bad.code == cli::kInputError);
  CHECK(bad.err.find("line 1") != std::string::npos);
}

TEST_CASE("prep passes every frame through at count equal to total") {
  TempDir dir("prep10");
  write_frames(dir / "frames", 10, 16);
  const Result r = run_cli({"prep", "--frames", (dir / "frames").string(), "--out", (dir / "out").string(),
                            "--count", "10", "--size", "8", "--threshold", "50"});
  REQUIRE(r.code == 0);
  int images = 0;
  for (const auto& e : fs::directory_iterator(dir / "out/images")) {
    CHECK(read_png(e.path(), 3).width == 8);
    ++images;
  }
  CHECK(images == 10);
  const auto manifest = nlohmann::json::parse(read_file(dir / "out/manifest.json"));
  CHECK(manifest["frames"].size() == 10);
  CHECK(manifest["frames"][9]["index"] == 9);
  const ImageBuffer mask = read_png(dir / "out/masks/f_00003.png", 1);
  CHECK(mask.data == std::vector<std::uint8_t>(64, 255));
}

TEST_CASE("prep defaults sample 200 frames at 512 pixels") {
  TempDir dir("prep2400");
  write_frames(dir / "frames", 2400, 512);
  const Result r = run_cli({"prep", "--frames", (dir / "frames").string(), "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(dir / "out/images")) {
    (void)e;
    ++images;
  }
  CHECK(images == 200);
  CHECK(fs::exists(dir / "out/images/f_02388.png"));
  CHECK(fs::exists(dir / "out/images/f_00012.png"));
  CHECK_FALSE(fs::exists(dir / "out/images/f_00013.png"));
  CHECK(read_png(dir / "out/images/f_00000.png", 3).width == 512);
}

TEST_CASE("prep reports every missing mask stem") {
  TempDir dir("prep_masks");
  write_frames(dir / "frames", 4, 8);
  fs::create_directories(dir / "masks");
  write_png(dir / "masks/f_00000.png", ImageBuffer::filled(8, 8, 1, 255));
  write_png(dir / "masks/f_00002.png", ImageBuffer::filled(8, 8, 1, 255));
  const Result r = run_cli({"prep", "--frames", (dir / "frames").string(), "--out", (dir / "out").string(),
                            "--count", "4", "--size", "8", "--masks", (dir / "masks").string()});
  CHECK(r.code == cli::kInputError);
  CHECK(r.err.find("f_00001") != std::string::npos);
  CHECK(r.err.find("f_00003") != std::string::npos);
  CHECK(run_cli({"prep", "--frames", (dir / "frames").string(), "--out", (dir / "o").string(), "--masks",
                 (dir / "masks").string(), "--threshold", "3"})
            .code == cli::kUsageError);
}

TEST_CASE("reconstruct writes mesh, report, log and snapshots") {
  TempDir dir("recon");
  write_disc_dataset(dir.path(), 32, 4);
  const fs::path out = dir / "run/mesh.obj";
  const Result r = run_cli({"reconstruct", "--scene", (dir / "scene.json").string(), "--frames",
                            (dir / "frames").string(), "--masks", (dir / "masks").string(), "--out", out.string(),
                            "--grid-res", "10", "--train-res", "32", "--iters", "1", "--snapshot-every", "1",
                            "--dump-coverage"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(out));
  CHECK(fs::exists(dir / "run/snapshot_000001.obj"));
  CHECK(fs::exists(dir / "run/coverage/frame_0.png"));
  const auto report = nlohmann::json::parse(read_file(dir / "run/report.json"));
  CHECK(report["train"]["iterations"] == 1);
  CHECK(report["config"]["grid_res"] == 10);
  CHECK(report["mesh"]["counts"]["faces"].get<std::size_t>() == read_obj(out).faces.size());
  std::istringstream log(read_file(dir / "run/train_log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 1);
}

TEST_CASE("reconstruct is byte-deterministic") {
  TempDir dir("recon_det");
  write_disc_dataset(dir.path(), 32, 4);
  auto go = [&](const std::string& sub) {
    return run_cli({"reconstruct", "--scene", (dir / "scene.json").string(), "--frames", (dir / "frames").string(),
                    "--masks", (dir / "masks").string(), "--out", (dir / sub / "mesh.obj").string(), "--grid-res",
                    "10", "--train-res", "32", "--iters", "4"});
  };
  REQUIRE(go("a").code == 0);
  REQUIRE(go("b").code == 0);
  CHECK(read_file(dir / "a/mesh.obj") == read_file(dir / "b/mesh.obj"));
  CHECK(read_file(dir / "a/train_log.jsonl") == read_file(dir / "b/train_log.jsonl"));
}

TEST_CASE("config file sets flags and the command line wins") {
  TempDir dir("recon_cfg");
  write_disc_dataset(dir.path(), 32, 4);
  write_file(dir / "run.cfg", "[reconstruct]\ngrid-res = 8\ntrain-res = 32\niters = 3\nseed = 5\n");
  const Result r = run_cli({"--config", (dir / "run.cfg").string(), "reconstruct", "--scene",
                            (dir / "scene.json").string(), "--frames", (dir / "frames").string(), "--masks",
                            (dir / "masks").string(), "--out", (dir / "run/mesh.obj").string(), "--iters", "2"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::json::parse(read_file(dir / "run/report.json"));
  CHECK(report["config"]["grid_res"] == 8);
  CHECK(report["config"]["seed"] == 5);
  CHECK(report["config"]["iters"] == 2);
}

TEST_CASE("reconstruct input errors") {
  TempDir dir("recon_err");
  write_disc_dataset(dir.path(), 32, 4);
  const Result missing = run_cli({"reconstruct", "--scene", (dir / "scene.json").string(), "--frames",
                                  (dir / "frames").string(), "--masks", (dir / "nope").string(), "--out",
                                  (dir / "run/mesh.obj").string()});
  CHECK(missing.code == cli::kUsageError);
  fs::remove(dir / "masks/frame_2.png");
  const Result gap = run_cli({"reconstruct", "--scene", (dir / "scene.json").string(), "--frames",
                              (dir / "frames").string(), "--masks", (dir / "masks").string(), "--out",
                              (dir / "run/mesh.obj").string(), "--iters", "1"});
  CHECK(gap.code == cli::kInputError);
  CHECK(gap.err.find("frame_2") != std::string::npos);
}

TEST_CASE("a non-finite loss exits with 4 and dumps the field") {
  TempDir dir("recon_nan");
  write_disc_dataset(dir.path(), 32, 4);
  // Steps of 1e308 overflow the field to inf within a few iterations.
  const Result r = run_cli({"reconstruct", "--scene", (dir / "scene.json").string(), "--frames",
                            (dir / "frames").string(), "--masks", (dir / "masks").string(), "--out",
                            (dir / "run/mesh.obj").string(), "--grid-res", "8", "--train-res", "32", "--iters",
                            "6", "--lr", "1e308"});
  CHECK_MESSAGE(r.code == cli::kNumericalFailure, r.err);
  CHECK(fs::exists(dir / "run/failure_field.json"));
  CHECK(r.err.find("failure_field.json") != std::string::npos);
}

TEST_CASE("evaluate reports quality, chamfer and iou") {
  TempDir dir("eval");
  write_disc_dataset(dir.path(), 32, 4);
  const Result closed = run_cli({"evaluate", "--mesh", (dir / "disc.obj").string()});
  REQUIRE(closed.code == 0);
  auto j = nlohmann::json::parse(closed.out);
  CHECK(j["watertight"] == true);
  CHECK(j["boundary_loop_count"] == 0);

  write_file(dir / "tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  j = nlohmann::json::parse(run_cli({"evaluate", "--mesh", (dir / "tri.obj").string()}).out);
  CHECK(j["boundary_loop_count"] == 1);

  const Result full = run_cli({"evaluate", "--mesh", (dir / "disc.obj").string(), "--ref",
                               (dir / "disc.obj").string(), "--scene", (dir / "scene.json").string(), "--masks",
                               (dir / "masks").string(), "--res", "32", "--report",
                               (dir / "report.json").string()});
  REQUIRE_MESSAGE(full.code == 0, full.err);
  j = nlohmann::json::parse(full.out);
  CHECK(j["chamfer"].get<double>() <= 1e-9);
  CHECK(j["mean_iou"].get<double>() == 1.0);
  CHECK(nlohmann::json::parse(read_file(dir / "report.json")) == j);

  CHECK(run_cli({"evaluate", "--mesh", (dir / "missing.obj").string()}).code == cli::kInputError);
  write_file(dir / "junk.obj", "v 1 2\n");
  CHECK(run_cli({"evaluate", "--mesh", (dir / "junk.obj").string()}).code == cli::kInputError);
  CHECK(run_cli({"evaluate", "--mesh", (dir / "disc.obj").string(), "--scene", (dir / "scene.json").string()})
            .code == cli::kUsageError);
}
