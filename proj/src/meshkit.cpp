#include "thinrecon/meshkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "thinrecon/dataprep.hpp"
#include "thinrecon/errors.hpp"
#include "thinrecon/parallel.hpp"

namespace thinrecon {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// OBJ

std::string export_obj(const TriMesh& mesh) {
  std::string out = "# thinrecon mesh\n";
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out += line;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(line, sizeof(line), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += line;
  }
  return out;
}

TriMesh parse_obj(const std::string& text, const std::string& source) {
  TriMesh mesh;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& msg) {
    throw ParseError(source, "line " + std::to_string(line_no), msg);
  };
  struct RawFace {
    std::array<long, 3> index;
    std::size_t line;
  };
  std::vector<RawFace> raw_faces;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d v;
      if (!(ss >> v.x() >> v.y() >> v.z())) fail("malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<long, 3> f{};
      std::string token;
      int count = 0;
      while (ss >> token) {
        if (count == 3) fail("only triangular faces are supported");
        long idx = 0;
        try {
          idx = std::stol(token.substr(0, token.find('/')));
        } catch (const std::exception&) {
          fail("malformed face index '" + token + "'");
        }
        if (idx == 0) fail("face index 0 is invalid");
        // Negative indices count back from the vertices read so far.
        f[count++] = idx > 0 ? idx - 1 : static_cast<long>(mesh.vertices.size()) + idx;
      }
      if (count != 3) fail("face needs three vertices");
      raw_faces.push_back({f, line_no});
    }
  }
  const long nv = static_cast<long>(mesh.vertices.size());
  for (const auto& f : raw_faces) {
    std::array<int, 3> face{};
    for (int k = 0; k < 3; ++k) {
      if (f.index[k] < 0 || f.index[k] >= nv) {
        throw ParseError(source, "line " + std::to_string(f.line), "vertex index out of range");
      }
      face[k] = static_cast<int>(f.index[k]);
    }
    mesh.faces.push_back(face);
  }
  return mesh;
}

TriMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_obj(buffer.str(), path.string());
}

void write_obj(const fs::path& path, const TriMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << export_obj(mesh);
}

// ---------------------------------------------------------------------------
// Topology

namespace {

struct EdgeUse {
  int lo, hi;
  int face;
  bool forward;  // face traverses lo -> hi
};

std::vector<EdgeUse> edge_uses(const TriMesh& mesh) {
  std::vector<EdgeUse> uses;
  uses.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = mesh.faces[f][k], b = mesh.faces[f][(k + 1) % 3];
      uses.push_back({std::min(a, b), std::max(a, b), static_cast<int>(f), a < b});
    }
  }
  std::sort(uses.begin(), uses.end(), [](const EdgeUse& x, const EdgeUse& y) {
    return std::tie(x.lo, x.hi, x.face) < std::tie(y.lo, y.hi, y.face);
  });
  return uses;
}

// Calls fn(begin, end) for each run of uses of one undirected edge.
template <class Fn>
void for_each_edge(const std::vector<EdgeUse>& uses, Fn&& fn) {
  for (std::size_t i = 0; i < uses.size();) {
    std::size_t j = i + 1;
    while (j < uses.size() && uses[j].lo == uses[i].lo && uses[j].hi == uses[i].hi) ++j;
    fn(i, j);
    i = j;
  }
}

Eigen::Vector3d face_normal(const TriMesh& mesh, const std::array<int, 3>& f) {
  return (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

BoundaryReport boundary_loops(const TriMesh& mesh) {
  BoundaryReport report;
  const auto uses = edge_uses(mesh);
  std::vector<std::array<int, 2>> boundary;
  for_each_edge(uses, [&](std::size_t b, std::size_t e) {
    if (e - b == 1) {
      const EdgeUse& u = uses[b];
      boundary.push_back(u.forward ? std::array<int, 2>{u.lo, u.hi} : std::array<int, 2>{u.hi, u.lo});
    } else if (e - b > 2) {
      ++report.nonmanifold_edges;
    }
  });
  report.boundary_edges = boundary.size();
  std::sort(boundary.begin(), boundary.end());

  std::vector<char> used(boundary.size(), 0);
  const auto next_from = [&](int vertex) -> std::ptrdiff_t {
    auto it = std::lower_bound(boundary.begin(), boundary.end(), std::array<int, 2>{vertex, std::numeric_limits<int>::min()});
    for (; it != boundary.end() && (*it)[0] == vertex; ++it) {
      const auto idx = it - boundary.begin();
      if (!used[idx]) return idx;
    }
    return -1;
  };
  for (std::size_t start = 0; start < boundary.size(); ++start) {
    if (used[start]) continue;
    std::vector<std::array<int, 2>> loop;
    std::ptrdiff_t cur = static_cast<std::ptrdiff_t>(start);
    const int origin = boundary[start][0];
    while (cur >= 0) {
      used[cur] = 1;
      loop.push_back(boundary[cur]);
      if (boundary[cur][1] == origin) break;
      cur = next_from(boundary[cur][1]);
    }
    report.loops.push_back(std::move(loop));
  }
  return report;
}

bool is_watertight(const TriMesh& mesh) {
  if (mesh.faces.empty()) return false;
  const auto uses = edge_uses(mesh);
  bool ok = true;
  for_each_edge(uses, [&](std::size_t b, std::size_t e) {
    if (e - b != 2 || uses[b].forward == uses[b + 1].forward) ok = false;
  });
  return ok;
}

double roughness(const TriMesh& mesh) {
  const auto uses = edge_uses(mesh);
  std::vector<Eigen::Vector3d> normals;
  normals.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const Eigen::Vector3d n = face_normal(mesh, f);
    const double len = n.norm();
    normals.push_back(len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero());
  }
  double sum = 0.0;
  std::size_t count = 0;
  for_each_edge(uses, [&](std::size_t b, std::size_t e) {
    if (e - b != 2) return;
    const Eigen::Vector3d& n0 = normals[uses[b].face];
    const Eigen::Vector3d& n1 = normals[uses[b + 1].face];
    // Degenerate faces have no normal; their edges are left out.
    if (n0.isZero() || n1.isZero()) return;
    sum += 1.0 - std::clamp(n0.dot(n1), -1.0, 1.0);
    ++count;
  });
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::size_t connected_components(const TriMesh& mesh) {
  if (mesh.faces.empty()) return 0;
  DisjointSets sets(mesh.faces.size());
  const auto uses = edge_uses(mesh);
  for_each_edge(uses, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b + 1; i < e; ++i) sets.unite(uses[b].face, uses[i].face);
  });
  std::size_t count = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) count += sets.find(f) == f;
  return count;
}

double surface_area(const TriMesh& mesh) {
  double area = 0.0;
  for (const auto& f : mesh.faces) area += 0.5 * face_normal(mesh, f).norm();
  return area;
}

std::size_t edge_count(const TriMesh& mesh) {
  const auto uses = edge_uses(mesh);
  std::size_t count = 0;
  for_each_edge(uses, [&](std::size_t, std::size_t) { ++count; });
  return count;
}

// ---------------------------------------------------------------------------
// Surface distance

namespace {

double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double mean_distance_to(const std::vector<Eigen::Vector3d>& points, const TriMesh& mesh,
                        int threads) {
  struct Bound {
    Eigen::Vector3d center;
    double radius;
  };
  std::vector<Bound> bounds;
  bounds.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const Eigen::Vector3d c = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    double r = 0.0;
    for (int k = 0; k < 3; ++k) r = std::max(r, (mesh.vertices[f[k]] - c).norm());
    bounds.push_back({c, r});
  }
  std::vector<double> dist(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    const Eigen::Vector3d& p = points[i];
    double best_sq = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      const double lower = (p - bounds[f].center).norm() - bounds[f].radius;
      if (lower > 0.0 && lower * lower >= best_sq) continue;
      const auto& face = mesh.faces[f];
      const Eigen::Vector3d q = closest_point_on_triangle(p, mesh.vertices[face[0]],
                                                         mesh.vertices[face[1]], mesh.vertices[face[2]]);
      best_sq = std::min(best_sq, (p - q).squaredNorm());
    }
    dist[i] = std::sqrt(best_sq);
  });
  double sum = 0.0;
  for (double d : dist) sum += d;
  return sum / static_cast<double>(points.size());
}

}  // namespace

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  // Voronoi-region walk over vertices, edges and the face.
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = va + vb + vc;
  if (denom == 0.0) return a;  // degenerate triangle collapsed onto a
  return a + ab * (vb / denom) + ac * (vc / denom);
}

std::vector<Eigen::Vector3d> sample_surface(const TriMesh& mesh, std::size_t samples,
                                            std::uint64_t seed) {
  if (mesh.faces.empty()) throw std::invalid_argument("sample_surface: empty mesh");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += 0.5 * face_normal(mesh, f).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_surface: mesh has zero area");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Vector3d> points;
  points.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double target = unit_double(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    const std::size_t f = std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1);
    const double r1 = std::sqrt(unit_double(rng));
    const double r2 = unit_double(rng);
    const auto& face = mesh.faces[f];
    points.push_back((1.0 - r1) * mesh.vertices[face[0]] + r1 * (1.0 - r2) * mesh.vertices[face[1]] +
                     r1 * r2 * mesh.vertices[face[2]]);
  }
  return points;
}

double chamfer(const TriMesh& a, const TriMesh& b, std::size_t samples, std::uint64_t seed,
               int threads) {
  if (a.faces.empty() || b.faces.empty()) throw std::invalid_argument("chamfer: empty mesh");
  if (samples == 0) throw std::invalid_argument("chamfer: samples must be positive");
  const double ab = mean_distance_to(sample_surface(a, samples, seed), b, threads);
  const double ba = mean_distance_to(sample_surface(b, samples, seed), a, threads);
  return 0.5 * (ab + ba);
}

// ---------------------------------------------------------------------------
// Evaluation rasterizer

namespace {

constexpr double kEvalNearClip = 1e-3;

// (b - a) x (p - a), positive on the interior side after orientation fix-up.
double edge_function(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

bool is_top_left(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

}  // namespace

ImageBuffer hard_coverage(const TriMesh& mesh, const CameraIntrinsics& intr_in, const Pose& pose,
                          int res) {
  if (res <= 0) throw std::invalid_argument("hard_coverage: resolution must be positive");
  const CameraIntrinsics intr =
      intr_in.width == res && intr_in.height == res ? intr_in : intr_in.rescaled(res, res);
  const Eigen::Matrix3d rot = quat_to_rotmat(pose.qvec);
  std::vector<Eigen::Vector2d> pix(mesh.vertices.size());
  std::vector<char> ok(mesh.vertices.size(), 0);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3d xc = rot * mesh.vertices[i] + pose.tvec;
    if (xc.z() <= kEvalNearClip) continue;
    pix[i] = {intr.fx() * xc.x() / xc.z() + intr.cx(), intr.fy() * xc.y() / xc.z() + intr.cy()};
    ok[i] = 1;
  }

  ImageBuffer mask = ImageBuffer::filled(res, res, 1, 0);
  for (const auto& f : mesh.faces) {
    if (!ok[f[0]] || !ok[f[1]] || !ok[f[2]]) continue;
    Eigen::Vector2d v0 = pix[f[0]], v1 = pix[f[1]], v2 = pix[f[2]];
    const double area = edge_function(v0, v1, v2.x(), v2.y());
    if (area == 0.0) continue;
    if (area < 0.0) std::swap(v1, v2);
    const bool tl0 = is_top_left(v0, v1), tl1 = is_top_left(v1, v2), tl2 = is_top_left(v2, v0);
    const double min_x = std::min({v0.x(), v1.x(), v2.x()}), max_x = std::max({v0.x(), v1.x(), v2.x()});
    const double min_y = std::min({v0.y(), v1.y(), v2.y()}), max_y = std::max({v0.y(), v1.y(), v2.y()});
    const int x0 = static_cast<int>(std::max(std::ceil(min_x - 0.5), 0.0));
    const int x1 = static_cast<int>(std::min(std::floor(max_x - 0.5), res - 1.0));
    const int y0 = static_cast<int>(std::max(std::ceil(min_y - 0.5), 0.0));
    const int y1 = static_cast<int>(std::min(std::floor(max_y - 0.5), res - 1.0));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = edge_function(v0, v1, px, py);
        const double w1 = edge_function(v1, v2, px, py);
        const double w2 = edge_function(v2, v0, px, py);
        const bool in0 = w0 > 0.0 || (w0 == 0.0 && tl0);
        const bool in1 = w1 > 0.0 || (w1 == 0.0 && tl1);
        const bool in2 = w2 > 0.0 || (w2 == 0.0 && tl2);
        if (in0 && in1 && in2) mask.at(x, y) = 255;
      }
    }
  }
  return mask;
}

ImageBuffer hard_coverage(const TriMesh& mesh, const View& view, int res) {
  return hard_coverage(mesh, view.intrinsics, view.pose, res);
}

double iou(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw std::invalid_argument("iou: mask dimensions differ");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------

MeshQualityReport analyze_mesh(const TriMesh& mesh) {
  MeshQualityReport r;
  r.vertex_count = mesh.vertices.size();
  r.face_count = mesh.faces.size();
  r.edge_count = edge_count(mesh);
  const BoundaryReport boundary = boundary_loops(mesh);
  r.boundary_loop_count = boundary.loop_count();
  r.nonmanifold_edge_count = boundary.nonmanifold_edges;
  r.watertight = is_watertight(mesh);
  r.connected_components = connected_components(mesh);
  r.roughness = roughness(mesh);
  r.surface_area = surface_area(mesh);
  r.euler_characteristic = static_cast<long>(r.vertex_count) - static_cast<long>(r.edge_count) +
                           static_cast<long>(r.face_count);
  return r;
}

nlohmann::json to_json(const MeshQualityReport& r) {
  nlohmann::json j;
  j["counts"] = {{"vertices", r.vertex_count}, {"faces", r.face_count}, {"edges", r.edge_count}};
  j["boundary_loop_count"] = r.boundary_loop_count;
  j["nonmanifold_edge_count"] = r.nonmanifold_edge_count;
  j["watertight"] = r.watertight;
  j["connected_components"] = r.connected_components;
  j["roughness"] = r.roughness;
  j["surface_area"] = r.surface_area;
  j["euler_characteristic"] = r.euler_characteristic;
  if (r.chamfer) j["chamfer"] = *r.chamfer;
  if (r.mean_iou) j["mean_iou"] = *r.mean_iou;
  return j;
}

}  // namespace thinrecon
