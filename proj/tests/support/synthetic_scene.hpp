#pragma once

#include <cstdint>
#include <vector>

#include "thinrecon/colmap_model.hpp"
#include "thinrecon/mesh.hpp"
#include "thinrecon/optimize.hpp"

namespace thinrecon::testing {

// Closed cylinder with axis along y: `segments` around, flat caps.
TriMesh make_disc(double radius, double thickness, int segments = 64);

// Camera at distance `dist` from the origin looking at it, azimuth measured in
// the xy plane from +x, elevation toward +z. Up is +z.
Pose look_at_origin(double azimuth_deg, double elevation_deg, double dist = 3.0);

CameraIntrinsics square_camera(int res, double focal_at_128 = 200.0);

struct SyntheticView {
  Pose pose;
  double azimuth = 0.0;
  double elevation = 0.0;
};

// 36 poses every 10 degrees on the horizon plus 8 elevated (+-45 degrees).
std::vector<SyntheticView> training_poses();
// Six poses away from the training set and from edge-on.
std::vector<SyntheticView> held_out_poses();

// Masks rendered with the hard rasterizer at `res`.
std::vector<TrainingView> render_views(const TriMesh& mesh, const std::vector<SyntheticView>& poses,
                                       int res);

}  // namespace thinrecon::testing
