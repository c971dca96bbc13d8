#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "thinrecon/colmap_model.hpp"
#include "thinrecon/dataprep.hpp"
#include "thinrecon/errors.hpp"
#include "thinrecon/meshkit.hpp"
#include "thinrecon/softsil.hpp"
#include "thinrecon/tetgrid.hpp"

namespace thinrecon {

// Training strategy for thin objects: a coarse tet grid, a strong Laplacian
// weight and a strong SDF sign regularizer, at a low training resolution.
struct TrainConfig {
  int grid_res = 64;
  int train_res = 128;
  int iters = 1000;
  double lr = 0.01;  // decays exponentially to lr / 10 at the final iteration
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda_lap = 0.5;
  double lambda_sdf = 0.2;
  int batch_views = 4;
  // px^2 at 128 px, scaled by (train_res / 128)^2. Triangles on a 64-cell grid
  // are about 2 px wide at 128 px; a wider soft edge lets the union of
  // overlapping blurs score a perforated sheet below the solid one.
  double gamma = 0.05;
  bool offsets_enabled = false;
  std::uint64_t seed = 0;
  int threads = 1;

  // Throws std::invalid_argument.
  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

// One Adam update in place. Throws NumericalError on a non-finite gradient
// and std::invalid_argument on a length mismatch.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

// lr0 * 10^(-t / horizon)
double learning_rate(double lr0, double t, double horizon);

// |v| - 0.4 plus uniform noise in [-0.01, 0.01] from a seeded generator.
SdfField init_sdf(const TetGrid& grid, std::uint64_t seed, bool offsets_enabled = false);

// A view prepared for rendering at the training resolution.
struct TrainingView {
  std::string name;
  CameraIntrinsics intrinsics;
  Pose pose;
  ImageBuffer mask;
};

TrainingView make_training_view(const View& view, int res);

struct Objective {
  double total = 0.0;
  double silhouette = 0.0;  // mean over the batch
  double laplacian = 0.0;
  double sdf = 0.0;
  SdfGradients grad;
  std::size_t mesh_vertices = 0;
  std::size_t mesh_faces = 0;
};

// Total loss and its gradient w.r.t. the field for one batch of views.
// Per-view work may run on `threads` workers; results are reduced in view
// order, so the output does not depend on the thread count.
Objective evaluate_objective(const TetGrid& grid, const SdfField& field,
                             std::span<const TrainingView> batch, const TrainConfig& config);

// Mean silhouette loss of a mesh over views (no gradients).
double mean_silhouette_loss(const TriMesh& mesh, std::span<const TrainingView> views,
                            const TrainConfig& config);

struct TrainRecord {
  int iteration = 0;
  double total = 0.0;
  double silhouette = 0.0;
  double laplacian = 0.0;
  double sdf = 0.0;
  double lr = 0.0;

  bool operator==(const TrainRecord&) const = default;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  MeshQualityReport final_mesh;
  std::size_t empty_mesh_iterations = 0;
};

struct TrainResult {
  TriMesh mesh;
  SdfField field;
  TrainReport report;
};

// Raised when the loss or a gradient stops being finite; carries the last
// finite field for inspection.
class NonFiniteLoss : public NumericalError {
 public:
  NonFiniteLoss(const std::string& what, int iteration, SdfField last_field)
      : NumericalError(what), iteration_(iteration), last_field_(std::move(last_field)) {}
  int iteration() const { return iteration_; }
  const SdfField& last_field() const { return last_field_; }

 private:
  int iteration_;
  SdfField last_field_;
};

using IterationCallback =
    std::function<void(const TrainRecord&, const TetGrid&, const SdfField&)>;

TrainResult train(std::span<const View> views, const TrainConfig& config,
                  const IterationCallback& on_iteration = {});
TrainResult train(std::span<const TrainingView> views, const TrainConfig& config,
                  const IterationCallback& on_iteration = {});

}  // namespace thinrecon
