#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "thinrecon/colmap_model.hpp"
#include "thinrecon/image.hpp"

namespace thinrecon {

inline constexpr int kDefaultFrameCount = 200;
inline constexpr int kDefaultPrepResolution = 512;
inline constexpr int kMaskThreshold = 128;

// One supervision unit: color frame, binary mask and the camera that saw it,
// all at the same resolution.
struct View {
  std::string name;
  ImageBuffer image;  // 3 channels
  ImageBuffer mask;   // 1 channel, values in {0, 255}
  CameraIntrinsics intrinsics;
  Pose pose;
};

// index_i = floor(i * total / n) for i in [0, n).
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n);

// Integer ratios use box averaging, anything else bilinear sampling. Upscaling
// is rejected.
ImageBuffer downscale(const ImageBuffer& img, int width, int height);

// 255 where value >= threshold, else 0.
ImageBuffer binarize_mask(const ImageBuffer& mask, int threshold);

// Luma threshold mask for frames shot against a dark background.
ImageBuffer make_mask_threshold(const ImageBuffer& rgb, int luma_threshold);

// Finds `<stem>.png` (any supported extension) inside `dir`.
std::filesystem::path find_by_stem(const std::filesystem::path& dir, const std::string& stem);

// Loads every registered image of `scene` with its mask, downscaled to
// train_res x train_res, intrinsics rescaled to match, sorted by name.
std::vector<View> load_views(const std::filesystem::path& frames_dir,
                             const std::filesystem::path& masks_dir, const SceneModel& scene,
                             int train_res, int threads = 1);

}  // namespace thinrecon
