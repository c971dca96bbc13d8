#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "thinrecon/colmap_model.hpp"
#include "thinrecon/image.hpp"
#include "thinrecon/mesh.hpp"

namespace thinrecon {

struct View;

// "v x y z" lines (9 significant digits) followed by 1-indexed "f i j k"
// lines, after a one-line header comment.
std::string export_obj(const TriMesh& mesh);
// Accepts v/f records (triangles only; "f a/b/c" forms are reduced to the
// vertex index). Throws ParseError.
TriMesh parse_obj(const std::string& text, const std::string& source = "<obj>");
TriMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriMesh& mesh);

struct BoundaryReport {
  std::vector<std::vector<std::array<int, 2>>> loops;  // directed edges in chain order
  std::size_t boundary_edges = 0;
  std::size_t nonmanifold_edges = 0;  // edges with more than two faces

  std::size_t loop_count() const { return loops.size(); }
};

// Chains edges with exactly one incident face into closed loops.
BoundaryReport boundary_loops(const TriMesh& mesh);

// Every edge has two faces traversing it in opposite directions.
bool is_watertight(const TriMesh& mesh);

// Mean of 1 - cos(theta) over edges shared by exactly two faces, theta the
// angle between their normals. 0 when there are no such edges.
double roughness(const TriMesh& mesh);

// Components of the face graph where faces sharing an edge are adjacent.
std::size_t connected_components(const TriMesh& mesh);

double surface_area(const TriMesh& mesh);

// Unique undirected edges, used for the Euler characteristic.
std::size_t edge_count(const TriMesh& mesh);

// Symmetric mean surface distance from `samples` area-weighted points per mesh.
// Both meshes are sampled from the same seeded stream so the value does not
// depend on argument order.
double chamfer(const TriMesh& a, const TriMesh& b, std::size_t samples, std::uint64_t seed,
               int threads = 1);

// Area-weighted uniform surface samples.
std::vector<Eigen::Vector3d> sample_surface(const TriMesh& mesh, std::size_t samples,
                                            std::uint64_t seed);

// Closest point on triangle (a, b, c) to p.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c);

// Binary silhouette: 255 where the pixel center lies inside any projected
// triangle, with a top-left fill rule on shared edges.
ImageBuffer hard_coverage(const TriMesh& mesh, const CameraIntrinsics& intr, const Pose& pose,
                          int res);
ImageBuffer hard_coverage(const TriMesh& mesh, const View& view, int res);

// |a and b| / |a or b|; 1 when both masks are empty.
double iou(const ImageBuffer& a, const ImageBuffer& b);

struct MeshQualityReport {
  std::size_t vertex_count = 0;
  std::size_t face_count = 0;
  std::size_t edge_count = 0;
  std::size_t boundary_loop_count = 0;
  std::size_t nonmanifold_edge_count = 0;
  bool watertight = false;
  std::size_t connected_components = 0;
  double roughness = 0.0;
  double surface_area = 0.0;
  long euler_characteristic = 0;
  std::optional<double> chamfer;
  std::optional<double> mean_iou;
};

MeshQualityReport analyze_mesh(const TriMesh& mesh);
nlohmann::json to_json(const MeshQualityReport& report);

}  // namespace thinrecon
