#include "thinrecon/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "thinrecon/logging.hpp"
#include "thinrecon/parallel.hpp"
#include "thinrecon/regularize.hpp"

namespace thinrecon {

void TrainConfig::validate() const {
  if (grid_res < 1 || train_res < 1 || iters < 1 || batch_views < 1 || threads < 1) {
    throw std::invalid_argument("TrainConfig: counts must be at least 1");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(lambda_lap >= 0.0) || !(lambda_sdf >= 0.0)) {
    throw std::invalid_argument("TrainConfig: lambdas must be non-negative");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("TrainConfig: gamma must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw std::invalid_argument("TrainConfig: invalid Adam hyperparameters");
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state lengths differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("adam_step: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  ++state.t;
  const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double learning_rate(double lr0, double t, double horizon) {
  if (horizon <= 0.0) return lr0;
  return lr0 * std::pow(10.0, -t / horizon);
}

SdfField init_sdf(const TetGrid& grid, std::uint64_t seed, bool offsets_enabled) {
  std::mt19937_64 rng(seed);
  SdfField field;
  field.values.resize(grid.num_vertices());
  for (std::size_t k = 0; k < grid.num_vertices(); ++k) {
    // 53-bit uniform in [0, 1), independent of the standard library's distributions.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    field.values[k] = grid.vertices[k].norm() - 0.4 + (0.02 * u - 0.01);
  }
  if (offsets_enabled) field.offset_params.assign(grid.num_vertices(), Eigen::Vector3d::Zero());
  return field;
}

TrainingView make_training_view(const View& view, int res) {
  TrainingView tv;
  tv.name = view.name;
  tv.pose = view.pose;
  tv.intrinsics = view.intrinsics.rescaled(res, res);
  if (view.mask.width == res && view.mask.height == res) {
    tv.mask = view.mask;
  } else {
    tv.mask = binarize_mask(downscale(view.mask, res, res), kMaskThreshold);
  }
  return tv;
}

namespace {

struct ViewResult {
  double loss = 0.0;
  std::vector<Eigen::Vector3d> grads;
};

void check_view(const TrainingView& view, int res) {
  if (view.mask.width != res || view.mask.height != res || view.mask.channels != 1) {
    throw std::invalid_argument("view '" + view.name + "' mask is not " + std::to_string(res) +
                                "x" + std::to_string(res));
  }
}

}  // namespace

Objective evaluate_objective(const TetGrid& grid, const SdfField& field,
                             std::span<const TrainingView> batch, const TrainConfig& config) {
  Objective obj;
  obj.grad = zero_gradients(field);

  const SdfSignLoss sign = sdf_sign_loss(grid, field);
  obj.sdf = sign.value;
  for (std::size_t k = 0; k < sign.grad.size(); ++k) obj.grad.values[k] += config.lambda_sdf * sign.grad[k];

  const ExtractedMesh extracted = marching_tets(grid, field);
  const TriMesh& mesh = extracted.mesh;
  obj.mesh_vertices = mesh.vertices.size();
  obj.mesh_faces = mesh.faces.size();
  if (!mesh.empty() && !batch.empty()) {
    const RasterSettings settings = RasterSettings::for_resolution(config.train_res, config.gamma);
    const simd::KernelTable& kernels = simd::active_kernels();
    std::vector<ViewResult> per_view(batch.size());
    parallel_for(batch.size(), config.threads, [&](std::size_t i) {
      const TrainingView& view = batch[i];
      check_view(view, config.train_res);
      const SoftRaster raster =
          soft_coverage(mesh, view.intrinsics, view.pose, config.train_res, settings, kernels);
      per_view[i].loss = silhouette_loss(raster.coverage, view.mask);
      per_view[i].grads =
          backward_silhouette(raster, silhouette_loss_grad(raster.coverage, view.mask), kernels);
    });

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::vector<Eigen::Vector3d> vertex_grads(mesh.vertices.size(), Eigen::Vector3d::Zero());
    for (const auto& r : per_view) {
      obj.silhouette += r.loss * inv_batch;
      for (std::size_t v = 0; v < vertex_grads.size(); ++v) vertex_grads[v] += inv_batch * r.grads[v];
    }
    const LaplacianLoss lap = laplacian_loss(mesh);
    obj.laplacian = lap.value;
    for (std::size_t v = 0; v < vertex_grads.size(); ++v) vertex_grads[v] += config.lambda_lap * lap.grad[v];
    accumulate_sdf_grads(vertex_grads, extracted.provenance, grid, field, obj.grad);
  }
  obj.total = obj.silhouette + config.lambda_lap * obj.laplacian + config.lambda_sdf * obj.sdf;
  return obj;
}

double mean_silhouette_loss(const TriMesh& mesh, std::span<const TrainingView> views,
                            const TrainConfig& config) {
  if (views.empty()) return 0.0;
  const RasterSettings settings = RasterSettings::for_resolution(config.train_res, config.gamma);
  std::vector<double> losses(views.size());
  parallel_for(views.size(), config.threads, [&](std::size_t i) {
    check_view(views[i], config.train_res);
    const SoftRaster raster =
        soft_coverage(mesh, views[i].intrinsics, views[i].pose, config.train_res, settings);
    losses[i] = silhouette_loss(raster.coverage, views[i].mask);
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(views.size());
}

namespace {

void shuffle_in_place(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

TrainResult train(std::span<const View> views, const TrainConfig& config,
                  const IterationCallback& on_iteration) {
  std::vector<TrainingView> prepared;
  prepared.reserve(views.size());
  for (const auto& v : views) prepared.push_back(make_training_view(v, config.train_res));
  return train(std::span<const TrainingView>(prepared), config, on_iteration);
}

TrainResult train(std::span<const TrainingView> views, const TrainConfig& config,
                  const IterationCallback& on_iteration) {
  config.validate();
  if (views.size() < 2) throw std::invalid_argument("train: at least two views are required");

  const TetGrid grid = make_tet_grid(config.grid_res);
  SdfField field = init_sdf(grid, config.seed, config.offsets_enabled);
  AdamState value_state(field.values.size());
  AdamState offset_state(field.offset_params.size() * 3);

  std::mt19937_64 order_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order(views.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_in_place(order, order_rng);
  std::size_t cursor = 0;

  const std::size_t batch_size = std::min<std::size_t>(config.batch_views, views.size());
  std::vector<TrainingView> batch(batch_size);

  TrainResult result;
  result.report.records.reserve(config.iters);
  for (int it = 0; it < config.iters; ++it) {
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle_in_place(order, order_rng);
        cursor = 0;
      }
      batch[b] = views[order[cursor++]];
    }

    Objective obj = evaluate_objective(grid, field, batch, config);
    if (!std::isfinite(obj.total)) {
      throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(it), it, field);
    }
    if (obj.mesh_faces == 0) {
      ++result.report.empty_mesh_iterations;
      warn("iteration " + std::to_string(it) +
           ": extracted mesh is empty; only the sign regularizer is active");
    }

    const double lr = learning_rate(config.lr, it, config.iters - 1);
    const SdfField before = field;
    try {
      adam_step(field.values, obj.grad.values, value_state, lr, config.beta1, config.beta2, config.eps);
      if (field.offsets_enabled()) {
        std::span<double> params(field.offset_params.front().data(), field.offset_params.size() * 3);
        std::span<const double> grads(obj.grad.offset_params.front().data(),
                                      obj.grad.offset_params.size() * 3);
        adam_step(params, grads, offset_state, lr, config.beta1, config.beta2, config.eps);
      }
      // An overflowed field would otherwise extract a silently empty mesh.
      const auto bad = std::find_if(field.values.begin(), field.values.end(),
                                    [](double s) { return !std::isfinite(s); });
      if (bad != field.values.end()) {
        throw NumericalError("non-finite SDF value at grid vertex " +
                             std::to_string(bad - field.values.begin()));
      }
    } catch (const NumericalError& e) {
      throw NonFiniteLoss(std::string(e.what()) + " at iteration " + std::to_string(it), it, before);
    }

    TrainRecord record{it, obj.total, obj.silhouette, obj.laplacian, obj.sdf, lr};
    result.report.records.push_back(record);
    if (on_iteration) on_iteration(record, grid, field);
  }

  result.mesh = marching_tets(grid, field).mesh;
  result.report.final_mesh = analyze_mesh(result.mesh);
  result.field = std::move(field);
  return result;
}

}  // namespace thinrecon
