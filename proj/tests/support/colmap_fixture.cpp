#include "colmap_fixture.hpp"

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <string>

#include "temp_dir.hpp"

namespace thinrecon::testing {
namespace {

// Little-endian byte writer for handwritten binary fixtures.
class Bytes {
 public:
  template <typename T>
  Bytes& put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    data_.append(raw, sizeof(T));
    return *this;
  }
  Bytes& str(const std::string& s) {
    data_.append(s);
    data_.push_back('\0');
    return *this;
  }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
};

}  // namespace

void write_toy_binary(const std::filesystem::path& dir) {
  Bytes cams;
  cams.put<std::uint64_t>(2);
  cams.put<std::uint32_t>(1).put<std::int32_t>(1).put<std::uint64_t>(512).put<std::uint64_t>(512);
  for (double p : {450.0, 450.0, 256.0, 256.0}) cams.put(p);
  cams.put<std::uint32_t>(2).put<std::int32_t>(0).put<std::uint64_t>(640).put<std::uint64_t>(480);
  for (double p : {500.0, 320.0, 240.0}) cams.put(p);
  write_file(dir / "cameras.bin", cams.data());

  const double h = 0.7071067811865476;
  Bytes imgs;
  imgs.put<std::uint64_t>(3);
  imgs.put<std::uint32_t>(5);
  for (double v : {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0}) imgs.put(v);
  imgs.put<std::uint32_t>(1).str("frame_0005.png").put<std::uint64_t>(0);
  imgs.put<std::uint32_t>(7);
  for (double v : {h, 0.0, 0.0, h, 0.5, -0.25, 3.5}) imgs.put(v);
  imgs.put<std::uint32_t>(1).str("frame_0007.png").put<std::uint64_t>(1);
  imgs.put(12.5).put(40.0).put<std::int64_t>(1);
  imgs.put<std::uint32_t>(9);
  for (double v : {0.5, 0.5, 0.5, 0.5, -1.0, 0.0, 4.5}) imgs.put(v);
  imgs.put<std::uint32_t>(2).str("frame_0009.png").put<std::uint64_t>(2);
  imgs.put(100.0).put(200.0).put<std::int64_t>(-1);
  imgs.put(300.5).put(10.25).put<std::int64_t>(2);
  write_file(dir / "images.bin", imgs.data());

  Bytes pts;
  pts.put<std::uint64_t>(3);
  auto point = [&](std::uint64_t id, double x, double y, double z, double err,
                   std::initializer_list<std::uint32_t> track) {
    pts.put(id).put(x).put(y).put(z);
    pts.put<std::uint8_t>(0).put<std::uint8_t>(0).put<std::uint8_t>(0);
    pts.put(err).put<std::uint64_t>(track.size() / 2);
    for (auto t : track) pts.put(t);
  };
  point(1, 1.0, 0.0, 0.0, 0.5, {7, 0});
  point(2, -1.0, 0.0, 0.0, 0.25, {9, 1});
  point(3, 0.0, 0.5, 0.25, 0.125, {5, 0, 7, 0});
  write_file(dir / "points3D.bin", pts.data());
}

}  // namespace thinrecon::testing
