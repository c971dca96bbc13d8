#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace thinrecon {

// Triangle mesh; faces are counterclockwise seen from outside.
struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }

  bool operator==(const TriMesh& other) const {
    return vertices == other.vertices && faces == other.faces;
  }
};

}  // namespace thinrecon
