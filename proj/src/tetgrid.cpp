#include "thinrecon/tetgrid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thinrecon {

namespace {

// Cube corners are addressed by bits x | y << 1 | z << 2.
Eigen::Vector3d corner_offset(int bits) {
  return {static_cast<double>(bits & 1), static_cast<double>((bits >> 1) & 1),
          static_cast<double>((bits >> 2) & 1)};
}

struct LocalEdge {
  int lo = 0;  // corner bits; hi is always a superset of lo
  int hi = 0;
};

struct KuhnTables {
  std::array<std::array<int, 4>, 6> tets{};
  // triangles[tet][negative-corner mask] -> up to 2 triangles of local edges
  struct Case {
    int count = 0;
    std::array<std::array<LocalEdge, 3>, 2> tris{};
  };
  std::array<std::array<Case, 16>, 6> cases{};
};

bool local_edge_less(const LocalEdge& a, const LocalEdge& b) {
  return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
}

LocalEdge make_local_edge(int u, int v) {
  return (u & v) == u ? LocalEdge{u, v} : LocalEdge{v, u};
}

Eigen::Vector3d midpoint(const LocalEdge& e) {
  return 0.5 * (corner_offset(e.lo) + corner_offset(e.hi));
}

KuhnTables build_tables() {
  KuhnTables t;
  static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (int p = 0; p < 6; ++p) {
    const int c1 = 1 << kPerms[p][0];
    const int c2 = c1 | (1 << kPerms[p][1]);
    std::array<int, 4> tet{0, c1, c2, 7};
    if (tet_signed_volume(corner_offset(tet[0]), corner_offset(tet[1]), corner_offset(tet[2]),
                          corner_offset(tet[3])) < 0.0) {
      std::swap(tet[1], tet[2]);
    }
    t.tets[p] = tet;

    for (int mask = 1; mask < 15; ++mask) {
      std::vector<int> neg, pos;
      for (int q = 0; q < 4; ++q) ((mask >> q) & 1 ? neg : pos).push_back(tet[q]);
      Eigen::Vector3d toward_positive = Eigen::Vector3d::Zero();
      for (int c : pos) toward_positive += corner_offset(c) / static_cast<double>(pos.size());
      for (int c : neg) toward_positive -= corner_offset(c) / static_cast<double>(neg.size());

      auto orient = [&](std::vector<LocalEdge>& poly) {
        const Eigen::Vector3d normal =
            (midpoint(poly[1]) - midpoint(poly[0])).cross(midpoint(poly[2]) - midpoint(poly[0]));
        if (normal.dot(toward_positive) < 0.0) std::reverse(poly.begin(), poly.end());
      };

      KuhnTables::Case& c = t.cases[p][mask];
      if (neg.size() == 1 || pos.size() == 1) {
        const bool lone_negative = neg.size() == 1;
        const int apex = lone_negative ? neg[0] : pos[0];
        const auto& others = lone_negative ? pos : neg;
        std::vector<LocalEdge> tri;
        for (int o : others) tri.push_back(make_local_edge(apex, o));
        orient(tri);
        c.count = 1;
        std::copy(tri.begin(), tri.end(), c.tris[0].begin());
      } else {
        // Quad through the four crossing edges in cyclic order.
        std::vector<LocalEdge> quad{make_local_edge(neg[0], pos[0]), make_local_edge(neg[0], pos[1]),
                                    make_local_edge(neg[1], pos[1]), make_local_edge(neg[1], pos[0])};
        orient(quad);
        // Split along the diagonal through the lexicographically smallest edge.
        // Within a cube, local edge order matches global vertex-id order.
        const auto first = static_cast<std::size_t>(
            std::min_element(quad.begin(), quad.end(), local_edge_less) - quad.begin());
        const auto q = [&](std::size_t k) { return quad[(first + k) % 4]; };
        c.count = 2;
        c.tris[0] = {q(0), q(1), q(2)};
        c.tris[1] = {q(0), q(2), q(3)};
      }
    }
  }
  return t;
}

const KuhnTables& tables() {
  static const KuhnTables t = build_tables();
  return t;
}

}  // namespace

double tet_signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                         const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

TetGrid make_tet_grid(int n) {
  if (n < 1) throw std::invalid_argument("make_tet_grid: resolution must be at least 1");
  TetGrid grid;
  grid.n = n;
  const int m = n + 1;
  const double h = grid.cell_size();
  grid.vertices.reserve(static_cast<std::size_t>(m) * m * m);
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) grid.vertices.emplace_back(-1.0 + i * h, -1.0 + j * h, -1.0 + k * h);
    }
  }

  const auto& kuhn = tables().tets;
  const auto corner_vid = [&](int i, int j, int k, int bits) {
    return grid.vertex_index(i + (bits & 1), j + ((bits >> 1) & 1), k + ((bits >> 2) & 1));
  };
  grid.tets.reserve(static_cast<std::size_t>(6) * n * n * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        for (const auto& local : kuhn) {
          grid.tets.push_back({corner_vid(i, j, k, local[0]), corner_vid(i, j, k, local[1]),
                               corner_vid(i, j, k, local[2]), corner_vid(i, j, k, local[3])});
        }
      }
    }
  }

  // Every lattice edge is (v, v + d) for a nonzero d in {0,1}^3; enumerating
  // by low vertex then direction yields lexicographic order.
  grid.edges.reserve(static_cast<std::size_t>(7) * m * m * m);
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) {
        for (int dir = 1; dir < 8; ++dir) {
          const int di = dir & 1, dj = (dir >> 1) & 1, dk = (dir >> 2) & 1;
          if (i + di > n || j + dj > n || k + dk > n) continue;
          grid.edges.push_back({grid.vertex_index(i, j, k), grid.vertex_index(i + di, j + dj, k + dk)});
        }
      }
    }
  }
  return grid;
}

Eigen::Vector3d vertex_offset(const TetGrid& grid, const SdfField& field, std::size_t k) {
  const Eigen::Vector3d& raw = field.offset_params[k];
  return 0.5 * grid.cell_size() * Eigen::Vector3d(std::tanh(raw.x()), std::tanh(raw.y()), std::tanh(raw.z()));
}

Eigen::Vector3d vertex_position(const TetGrid& grid, const SdfField& field, std::size_t k) {
  if (!field.offsets_enabled()) return grid.vertices[k];
  return grid.vertices[k] + vertex_offset(grid, field, k);
}

EdgeVertex edge_vertex(double s_a, double s_b, const Eigen::Vector3d& p_a,
                       const Eigen::Vector3d& p_b) {
  if (is_inside(s_a) == is_inside(s_b)) {
    throw std::invalid_argument("edge_vertex: values must lie on opposite sides of zero");
  }
  const double denom = s_a - s_b;
  const Eigen::Vector3d edge = p_b - p_a;
  EdgeVertex out;
  out.t = s_a / denom;
  out.position = p_a + out.t * edge;
  const double inv_sq = 1.0 / (denom * denom);
  out.d_sa = edge * (-s_b * inv_sq);
  out.d_sb = edge * (s_a * inv_sq);
  return out;
}

ExtractedMesh marching_tets(const TetGrid& grid, const SdfField& field) {
  if (field.values.size() != grid.num_vertices()) {
    throw std::invalid_argument("marching_tets: field size does not match grid");
  }
  if (field.offsets_enabled() && field.offset_params.size() != grid.num_vertices()) {
    throw std::invalid_argument("marching_tets: offset size does not match grid");
  }
  const int n = grid.n;
  const int m = n + 1;
  const auto& kuhn = tables();
  const auto& s = field.values;

  std::array<int, 8> corner_delta{};
  for (int bits = 0; bits < 8; ++bits) {
    corner_delta[bits] = (bits & 1) + m * ((bits >> 1) & 1) + m * m * ((bits >> 2) & 1);
  }

  ExtractedMesh out;
  std::vector<std::int32_t> slot(static_cast<std::size_t>(7) * grid.num_vertices(), -1);
  const auto vertex_for = [&](int base, const LocalEdge& e) {
    const int lo = base + corner_delta[e.lo];
    const int dir = e.hi & ~e.lo;
    std::int32_t& id = slot[static_cast<std::size_t>(lo) * 7 + dir - 1];
    if (id < 0) {
      const int hi = lo + corner_delta[dir];
      const EdgeVertex ev = edge_vertex(s[lo], s[hi], vertex_position(grid, field, lo),
                                        vertex_position(grid, field, hi));
      id = static_cast<std::int32_t>(out.mesh.vertices.size());
      out.mesh.vertices.push_back(ev.position);
      out.provenance.entries.push_back({lo, hi, ev.t});
    }
    return static_cast<int>(id);
  };

  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const int base = grid.vertex_index(i, j, k);
        int cube_mask = 0;
        for (int bits = 0; bits < 8; ++bits) {
          cube_mask |= static_cast<int>(is_inside(s[base + corner_delta[bits]])) << bits;
        }
        if (cube_mask == 0 || cube_mask == 0xFF) continue;
        for (int t = 0; t < 6; ++t) {
          int mask = 0;
          for (int q = 0; q < 4; ++q) mask |= ((cube_mask >> kuhn.tets[t][q]) & 1) << q;
          const auto& c = kuhn.cases[t][mask];
          for (int f = 0; f < c.count; ++f) {
            out.mesh.faces.push_back({vertex_for(base, c.tris[f][0]), vertex_for(base, c.tris[f][1]),
                                      vertex_for(base, c.tris[f][2])});
          }
        }
      }
    }
  }
  return out;
}

}  // namespace thinrecon
