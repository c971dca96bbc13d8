#include "thinrecon/image.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include <png.h>

#include "thinrecon/errors.hpp"

namespace thinrecon {

ImageBuffer ImageBuffer::filled(int width, int height, int channels, std::uint8_t value) {
  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(width) * height * channels, value);
  return img;
}

ImageBuffer read_png(const std::filesystem::path& path, int channels) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw InputError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  ImageBuffer img = ImageBuffer::filled(static_cast<int>(png.width),
                                        static_cast<int>(png.height), channels);
  if (!png_image_finish_read(&png, nullptr, img.data.data(), 0, nullptr)) {
    png_image_free(&png);
    throw InputError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  if (!image.valid()) throw std::invalid_argument("write_png: invalid image buffer");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.data.data(), 0, nullptr)) {
    throw InputError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

bool is_supported_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

}  // namespace thinrecon
