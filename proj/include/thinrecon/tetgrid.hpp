#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "thinrecon/mesh.hpp"

namespace thinrecon {

// Uniform lattice over [-1, 1]^3, each cube split into six tetrahedra around
// its main diagonal (Kuhn split). Every lattice edge joins v and v + d with
// d a nonzero {0,1}^3 step, so edges are addressed by (low vertex, direction).
struct TetGrid {
  int n = 0;  // cells per axis
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 4>> tets;   // positively oriented
  std::vector<std::array<int, 2>> edges;  // (lo, hi), sorted lexicographically

  int vertices_per_axis() const { return n + 1; }
  double cell_size() const { return 2.0 / n; }
  int vertex_index(int i, int j, int k) const { return i + (n + 1) * (j + (n + 1) * k); }
  std::size_t num_vertices() const { return vertices.size(); }
};

TetGrid make_tet_grid(int n);

double tet_signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                         const Eigen::Vector3d& c, const Eigen::Vector3d& d);

// Per-vertex signed distance values (negative inside). When offsets are
// enabled each vertex also carries an unconstrained 3-vector that maps to a
// displacement of at most half a cell through tanh.
struct SdfField {
  std::vector<double> values;
  std::vector<Eigen::Vector3d> offset_params;

  bool offsets_enabled() const { return !offset_params.empty(); }
};

// Displacement of vertex k: (cell/2) * tanh(offset_params[k]).
Eigen::Vector3d vertex_offset(const TetGrid& grid, const SdfField& field, std::size_t k);
Eigen::Vector3d vertex_position(const TetGrid& grid, const SdfField& field, std::size_t k);

// sign(0) is positive throughout.
inline bool is_inside(double s) { return s < 0.0; }

struct EdgeVertex {
  Eigen::Vector3d position;
  Eigen::Vector3d d_sa;  // d position / d s_a
  Eigen::Vector3d d_sb;  // d position / d s_b
  double t = 0.0;
};

// Zero crossing of the linear interpolant along p_a -> p_b. The two values
// must have strictly opposite signs.
EdgeVertex edge_vertex(double s_a, double s_b, const Eigen::Vector3d& p_a,
                       const Eigen::Vector3d& p_b);

// Mesh vertex origin: the grid edge (a, b) it lies on and t = s_a / (s_a - s_b).
struct VertexProvenance {
  struct Entry {
    int a = 0;
    int b = 0;
    double t = 0.0;
  };
  std::vector<Entry> entries;
};

struct ExtractedMesh {
  TriMesh mesh;
  VertexProvenance provenance;
};

// Marching tetrahedra. Tets are visited in storage order and mesh vertices are
// numbered on first use, so output is deterministic. Faces point toward
// positive values.
ExtractedMesh marching_tets(const TetGrid& grid, const SdfField& field);

}  // namespace thinrecon
