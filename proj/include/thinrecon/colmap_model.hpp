#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace thinrecon {

// Numeric ids match COLMAP's model ids in cameras.bin.
enum class CameraModel : int {
  kSimplePinhole = 0,
  kPinhole = 1,
  kSimpleRadial = 2,
};

std::string camera_model_name(CameraModel model);
std::optional<CameraModel> camera_model_from_name(const std::string& name);
std::optional<CameraModel> camera_model_from_id(int id);
std::size_t camera_model_num_params(CameraModel model);

// Parameter order follows COLMAP:
//   SIMPLE_PINHOLE f, cx, cy
//   PINHOLE        fx, fy, cx, cy
//   SIMPLE_RADIAL  f, cx, cy, k
struct CameraIntrinsics {
  std::uint32_t camera_id = 0;
  CameraModel model = CameraModel::kPinhole;
  int width = 0;
  int height = 0;
  std::vector<double> params;

  static CameraIntrinsics pinhole(std::uint32_t id, int width, int height, double fx,
                                  double fy, double cx, double cy);

  double fx() const;
  double fy() const;
  double cx() const;
  double cy() const;

  // Scales (fx, cx) by new_width/width and (fy, cy) by new_height/height.
  // Models with a single focal length become PINHOLE when the two ratios differ.
  CameraIntrinsics rescaled(int new_width, int new_height) const;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

// World-to-camera transform: x_cam = R(qvec) * x_world + tvec.
struct Pose {
  Eigen::Vector4d qvec{1.0, 0.0, 0.0, 0.0};  // (qw, qx, qy, qz)
  Eigen::Vector3d tvec = Eigen::Vector3d::Zero();

  Eigen::Matrix3d rotation() const;
  // Camera center in world coordinates, -R^T t.
  Eigen::Vector3d center() const;
  Eigen::Vector3d to_camera(const Eigen::Vector3d& x_world) const;

  bool operator==(const Pose& other) const {
    return qvec == other.qvec && tvec == other.tvec;
  }
};

struct RegisteredImage {
  std::uint32_t image_id = 0;
  std::string name;
  std::uint32_t camera_id = 0;
  Pose pose;

  bool operator==(const RegisteredImage&) const = default;
};

struct Point3D {
  std::uint64_t point_id = 0;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();

  bool operator==(const Point3D& other) const {
    return point_id == other.point_id && xyz == other.xyz;
  }
};

// x' = scale * (x - center)
struct SimTransform {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return scale * (x - center); }

  bool operator==(const SimTransform& other) const {
    return center == other.center && scale == other.scale;
  }
};

struct SceneModel {
  std::map<std::uint32_t, CameraIntrinsics> cameras;
  std::vector<RegisteredImage> images;
  std::vector<Point3D> points3d;
  std::optional<SimTransform> norm;

  const CameraIntrinsics& camera_for(const RegisteredImage& image) const;

  // Checks cross-references and uniqueness; throws InputError.
  void validate() const;

  bool operator==(const SceneModel&) const = default;
};

enum class ModelFormat { kAuto, kText, kBinary };

// Reads cameras/images (and points3D when present) from a COLMAP sparse model
// directory. kAuto prefers the binary files when both variants exist.
SceneModel parse_model(const std::filesystem::path& dir, ModelFormat format = ModelFormat::kAuto);

// Rotation matrix of a (qw, qx, qy, qz) quaternion. The input is renormalized;
// it must be within 1e-3 of unit length.
Eigen::Matrix3d quat_to_rotmat(const Eigen::Vector4d& q);

inline constexpr double kDefaultTargetRadius = 0.35;

// Moves the scene into the unit reconstruction domain. With sparse points the
// center is the centroid after dropping points beyond 3x the median distance
// from the raw centroid, and the scale maps the 95th-percentile radius of the
// surviving points to `target_radius`. Dropped points are removed from the
// returned model. Without points, camera centers are used instead.
SceneModel normalize_scene(const SceneModel& model, double target_radius = kDefaultTargetRadius);

// Linear-interpolated percentile (q in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace thinrecon
