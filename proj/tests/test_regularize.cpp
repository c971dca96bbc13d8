#include <cmath>
#include <random>

#include "doctest.h"

#include "thinrecon/regularize.hpp"

using namespace thinrecon;

namespace {

TriMesh equilateral() {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2.0, 0}};
  m.faces = {{0, 1, 2}};
  return m;
}

TriMesh regular_tetrahedron() {
  const double s = 1.0 / (2.0 * std::sqrt(2.0));  // edge length 1
  TriMesh m;
  m.vertices = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
  m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

TriMesh noisy_grid_mesh(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  TriMesh m;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) m.vertices.emplace_back(i + u(rng), j + u(rng), u(rng));
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = j * (n + 1) + i, b = a + 1, c = a + n + 1, d = c + 1;
      m.faces.push_back({a, b, d});
      m.faces.push_back({a, d, c});
    }
  }
  return m;
}

}  // namespace

TEST_CASE("laplacian examples") {
  CHECK(std::abs(laplacian_loss(equilateral()).value - 0.75) <= 1e-9);
  CHECK(std::abs(laplacian_loss(regular_tetrahedron()).value - 2.0 / 3.0) <= 1e-9);
  TriMesh same = equilateral();
  for (auto& v : same.vertices) v = {0.3, -0.2, 0.1};
  CHECK(laplacian_loss(same).value == 0.0);
}

TEST_CASE("isolated vertices contribute nothing but still count") {
  TriMesh m = equilateral();
  m.vertices.emplace_back(5, 5, 5);
  const LaplacianLoss l = laplacian_loss(m);
  CHECK(std::abs(l.value - 0.75 * 3.0 / 4.0) <= 1e-12);
  CHECK(l.grad[3] == Eigen::Vector3d::Zero());
}

TEST_CASE("laplacian is homogeneous of degree two") {
  std::mt19937_64 rng(3);
  const TriMesh m = noisy_grid_mesh(rng, 6);
  const double base = laplacian_loss(m).value;
  CHECK(base > 0.0);
  for (double c : {0.5, 2.0, 3.7}) {
    TriMesh s = m;
    for (auto& v : s.vertices) v *= c;
    CHECK(std::abs(laplacian_loss(s).value - c * c * base) <= 1e-12 * c * c * base + 1e-15);
  }
}

TEST_CASE("laplacian gradient matches central differences") {
  std::mt19937_64 rng(5);
  const TriMesh m = noisy_grid_mesh(rng, 5);
  const LaplacianLoss l = laplacian_loss(m);
  const double h = 1e-6;
  for (std::size_t v = 0; v < m.vertices.size(); ++v) {
    for (int k = 0; k < 3; ++k) {
      TriMesh p = m, q = m;
      p.vertices[v][k] += h;
      q.vertices[v][k] -= h;
      const double fd = (laplacian_loss(p).value - laplacian_loss(q).value) / (2 * h);
      CHECK(std::abs(fd - l.grad[v][k]) <= 1e-6 * std::max(std::abs(fd), 1e-4));
    }
  }
}

TEST_CASE("sign loss examples") {
  const TetGrid grid = make_tet_grid(2);
  SdfField f;
  f.values.assign(grid.num_vertices(), 1.0);
  const SdfSignLoss pos = sdf_sign_loss(grid, f);
  CHECK(pos.value == 0.0);
  for (double g : pos.grad) CHECK(g == 0.0);

  // Vertex 0 of the single-cube grid is the low end of all 7 of its edges.
  const TetGrid g1 = make_tet_grid(1);
  SdfField star;
  star.values.assign(g1.num_vertices(), -1.0);
  star.values[0] = 1.0;
  const double per_edge = 2.0 * std::log(1.0 + std::exp(1.0));
  CHECK(std::abs(per_edge - 2.62652) <= 1e-5);
  CHECK(std::abs(sdf_sign_loss(g1, star).value - 7.0 * per_edge / g1.edges.size()) <= 1e-9);
}

TEST_CASE("each flip edge adds 2 ln(1 + e) over the edge count") {
  // No vertex of a Kuhn grid has fewer than four edges, so an isolated sign
  // change always flips several; the total is the per-edge term times that.
  const TetGrid g = make_tet_grid(2);
  const double per_edge = 2.0 * std::log1p(std::exp(1.0));
  for (const auto& [ijk, expected_flips] : std::vector<std::pair<std::array<int, 3>, std::size_t>>{
           {{2, 2, 2}, 7}, {{2, 0, 0}, 4}, {{1, 1, 1}, 14}}) {
    SdfField f;
    f.values.assign(g.num_vertices(), 1.0);
    f.values[g.vertex_index(ijk[0], ijk[1], ijk[2])] = -1.0;
    std::size_t flips = 0;
    for (const auto& e : g.edges) flips += (f.values[e[0]] < 0) != (f.values[e[1]] < 0);
    CHECK(flips == expected_flips);
    CHECK(std::abs(sdf_sign_loss(g, f).value - flips * per_edge / g.edges.size()) <= 1e-9);
  }
}

TEST_CASE("sign loss grows with magnitude on a fixed sign pattern") {
  // Each term pulls both endpoint logits toward the other's side, so scaling
  // the values away from zero increases the penalty.
  const TetGrid g = make_tet_grid(3);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SdfField f;
  for (std::size_t k = 0; k < g.num_vertices(); ++k) f.values.push_back(u(rng));
  double prev = sdf_sign_loss(g, f).value;
  for (double c : {1.5, 2.0, 4.0, 10.0}) {
    SdfField s = f;
    for (auto& v : s.values) v *= c;
    const double cur = sdf_sign_loss(g, s).value;
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("sign loss gradient matches central differences") {
  const TetGrid g = make_tet_grid(3);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  SdfField f;
  for (std::size_t k = 0; k < g.num_vertices(); ++k) f.values.push_back((rng() & 1) ? u(rng) : -u(rng));
  const SdfSignLoss l = sdf_sign_loss(g, f);
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t k = 0; k < g.num_vertices(); ++k) {
    SdfField p = f, q = f;
    p.values[k] += h;
    q.values[k] -= h;
    const double fd = (sdf_sign_loss(g, p).value - sdf_sign_loss(g, q).value) / (2 * h);
    if (l.grad[k] == 0.0) {
      CHECK(fd == doctest::Approx(0.0).epsilon(1e-12));
      continue;
    }
    CHECK(std::abs(fd - l.grad[k]) <= 1e-6 * std::abs(l.grad[k]));
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("sign loss is zero exactly when no edge crosses") {
  const TetGrid g = make_tet_grid(2);
  SdfField f;
  f.values.assign(g.num_vertices(), -0.5);
  CHECK(sdf_sign_loss(g, f).value == 0.0);
  f.values[4] = 0.0;  // zero counts as outside
  CHECK(sdf_sign_loss(g, f).value > 0.0);
}

TEST_CASE("large values are clamped without overflow") {
  const TetGrid g = make_tet_grid(1);
  SdfField f;
  f.values.assign(g.num_vertices(), 1e6);
  f.values[0] = -1e6;
  const SdfSignLoss l = sdf_sign_loss(g, f);
  CHECK(std::isfinite(l.value));
  const double clamped = 7.0 * 2.0 * std::log1p(std::exp(40.0)) / g.edges.size();
  CHECK(l.value == doctest::Approx(clamped).epsilon(1e-12));
  for (double v : l.grad) CHECK(v == 0.0);
}
