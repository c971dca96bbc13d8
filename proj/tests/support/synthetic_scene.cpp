#include "synthetic_scene.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "thinrecon/meshkit.hpp"

namespace thinrecon::testing {

TriMesh make_disc(double radius, double thickness, int segments) {
  TriMesh m;
  const double h = thickness / 2.0;
  for (int s = 0; s < segments; ++s) {
    const double a = 2.0 * std::numbers::pi * s / segments;
    m.vertices.emplace_back(radius * std::cos(a), h, radius * std::sin(a));
  }
  for (int s = 0; s < segments; ++s) {
    const double a = 2.0 * std::numbers::pi * s / segments;
    m.vertices.emplace_back(radius * std::cos(a), -h, radius * std::sin(a));
  }
  const int top = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, h, 0.0);
  const int bottom = top + 1;
  m.vertices.emplace_back(0.0, -h, 0.0);
  for (int s = 0; s < segments; ++s) {
    const int n = (s + 1) % segments;
    // Outward normals: +y on the top cap, -y on the bottom cap.
    m.faces.push_back({top, n, s});
    m.faces.push_back({bottom, segments + s, segments + n});
    m.faces.push_back({s, n, segments + n});
    m.faces.push_back({s, segments + n, segments + s});
  }
  return m;
}

Pose look_at_origin(double azimuth_deg, double elevation_deg, double dist) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Eigen::Vector3d center(dist * std::cos(el) * std::cos(az), dist * std::cos(el) * std::sin(az),
                               dist * std::sin(el));
  const Eigen::Vector3d forward = (-center).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  const Eigen::Quaterniond q(r);
  Pose pose;
  pose.qvec = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
  pose.tvec = -r * center;
  return pose;
}

CameraIntrinsics square_camera(int res, double focal_at_128) {
  const double f = focal_at_128 * res / 128.0;
  return CameraIntrinsics::pinhole(1, res, res, f, f, res / 2.0, res / 2.0);
}

std::vector<SyntheticView> training_poses() {
  std::vector<SyntheticView> out;
  for (int i = 0; i < 36; ++i) out.push_back({look_at_origin(10.0 * i, 0.0), 10.0 * i, 0.0});
  for (double el : {45.0, -45.0}) {
    for (int i = 0; i < 4; ++i) out.push_back({look_at_origin(90.0 * i, el), 90.0 * i, el});
  }
  return out;
}

std::vector<SyntheticView> held_out_poses() {
  const double az[6] = {50.0, 75.0, 110.0, 235.0, 260.0, 290.0};
  const double el[6] = {10.0, -20.0, 25.0, -10.0, 20.0, -25.0};
  std::vector<SyntheticView> out;
  for (int i = 0; i < 6; ++i) out.push_back({look_at_origin(az[i], el[i]), az[i], el[i]});
  return out;
}

std::vector<TrainingView> render_views(const TriMesh& mesh, const std::vector<SyntheticView>& poses,
                                       int res) {
  const CameraIntrinsics cam = square_camera(res);
  std::vector<TrainingView> views;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    TrainingView v;
    v.name = "view_" + std::to_string(i);
    v.intrinsics = cam;
    v.pose = poses[i].pose;
    v.mask = hard_coverage(mesh, cam, poses[i].pose, res);
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace thinrecon::testing
