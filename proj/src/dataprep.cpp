#include "thinrecon/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

#include "thinrecon/errors.hpp"
#include "thinrecon/parallel.hpp"

namespace thinrecon {

namespace fs = std::filesystem;

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_indices: n must be at least 1");
  if (n > total) {
    throw std::invalid_argument("sample_indices: cannot sample " + std::to_string(n) +
                                " frames from " + std::to_string(total));
  }
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i * total / n;
  return out;
}

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

ImageBuffer box_downscale(const ImageBuffer& img, int width, int height) {
  const int fx = img.width / width;
  const int fy = img.height / height;
  const double inv_area = 1.0 / (fx * fy);
  ImageBuffer out = ImageBuffer::filled(width, height, img.channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < fy; ++dy) {
          for (int dx = 0; dx < fx; ++dx) sum += img.at(x * fx + dx, y * fy + dy, c);
        }
        out.at(x, y, c) = quantize(sum * inv_area);
      }
    }
  }
  return out;
}

ImageBuffer bilinear_downscale(const ImageBuffer& img, int width, int height) {
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  ImageBuffer out = ImageBuffer::filled(width, height, img.channels);
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const double bottom = (1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        out.at(x, y, c) = quantize((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

}  // namespace

ImageBuffer downscale(const ImageBuffer& img, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("downscale: zero target dimension");
  if (width > img.width || height > img.height) {
    throw std::invalid_argument("downscale: upscaling from " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + " to " + std::to_string(width) +
                                "x" + std::to_string(height) + " is not supported");
  }
  if (width == img.width && height == img.height) return img;
  if (img.width % width == 0 && img.height % height == 0) {
    return box_downscale(img, width, height);
  }
  return bilinear_downscale(img, width, height);
}

ImageBuffer binarize_mask(const ImageBuffer& mask, int threshold) {
  if (mask.channels != 1) throw std::invalid_argument("binarize_mask: expected a 1-channel mask");
  ImageBuffer out = mask;
  for (auto& v : out.data) v = v >= threshold ? 255 : 0;
  return out;
}

ImageBuffer make_mask_threshold(const ImageBuffer& rgb, int luma_threshold) {
  if (rgb.channels != 3) throw std::invalid_argument("make_mask_threshold: expected RGB input");
  ImageBuffer out = ImageBuffer::filled(rgb.width, rgb.height, 1);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const double luma =
          0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2);
      out.at(x, y) = std::lround(luma) >= luma_threshold ? 255 : 0;
    }
  }
  return out;
}

fs::path find_by_stem(const fs::path& dir, const std::string& stem) {
  if (fs::is_directory(dir)) {
    std::vector<fs::path> matches;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().stem() == stem &&
          is_supported_image(entry.path())) {
        matches.push_back(entry.path());
      }
    }
    if (!matches.empty()) return *std::min_element(matches.begin(), matches.end());
  }
  return {};
}

std::vector<View> load_views(const fs::path& frames_dir, const fs::path& masks_dir,
                             const SceneModel& scene, int train_res, int threads) {
  if (train_res <= 0) throw std::invalid_argument("load_views: train_res must be positive");
  if (!fs::is_directory(frames_dir)) throw InputError("frames directory not found: " + frames_dir.string());
  if (!fs::is_directory(masks_dir)) throw InputError("masks directory not found: " + masks_dir.string());

  std::vector<const RegisteredImage*> order;
  for (const auto& image : scene.images) order.push_back(&image);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });

  std::vector<std::string> missing;
  std::vector<fs::path> frame_paths, mask_paths;
  for (const auto* image : order) {
    const fs::path frame = frames_dir / image->name;
    const fs::path mask = find_by_stem(masks_dir, fs::path(image->name).stem().string());
    if (!fs::exists(frame)) missing.push_back("frame " + frame.string());
    if (mask.empty()) missing.push_back("mask for '" + fs::path(image->name).stem().string() + "'");
    frame_paths.push_back(frame);
    mask_paths.push_back(mask);
  }
  if (!missing.empty()) {
    std::string msg = "missing inputs:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw InputError(msg);
  }

  std::vector<View> views(order.size());
  std::vector<std::exception_ptr> errors(order.size());
  parallel_for(order.size(), threads, [&](std::size_t i) {
    try {
      const RegisteredImage& reg = *order[i];
      ImageBuffer frame = read_png(frame_paths[i], 3);
      ImageBuffer mask = read_png(mask_paths[i], 1);
      if (frame.width != mask.width || frame.height != mask.height) {
        throw InputError("dimension mismatch between " + frame_paths[i].string() + " and " +
                         mask_paths[i].string());
      }
      const CameraIntrinsics& cam = scene.camera_for(reg);
      View& view = views[i];
      view.name = reg.name;
      view.pose = reg.pose;
      // Intrinsics refer to the COLMAP input size; frames may already be smaller.
      view.intrinsics = cam.rescaled(train_res, train_res);
      view.image = downscale(frame, train_res, train_res);
      view.mask = binarize_mask(downscale(mask, train_res, train_res), kMaskThreshold);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return views;
}

}  // namespace thinrecon
