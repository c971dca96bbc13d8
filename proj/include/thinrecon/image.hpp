#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace thinrecon {

// Row-major 8-bit image with 1 (mask) or 3 (RGB) interleaved channels.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  static ImageBuffer filled(int width, int height, int channels, std::uint8_t value = 0);

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool valid() const {
    return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
           data.size() == static_cast<std::size_t>(width) * height * channels;
  }

  bool operator==(const ImageBuffer&) const = default;
};

// Reads an 8-bit PNG converted to `channels` (1 = gray, 3 = RGB). Throws
// InputError on failure.
ImageBuffer read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const ImageBuffer& image);

bool is_supported_image(const std::filesystem::path& path);

}  // namespace thinrecon
