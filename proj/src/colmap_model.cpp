#include "thinrecon/colmap_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

#include "thinrecon/errors.hpp"
#include "thinrecon/logging.hpp"

namespace thinrecon {

namespace fs = std::filesystem;

std::string camera_model_name(CameraModel model) {
  switch (model) {
    case CameraModel::kSimplePinhole:
      return "SIMPLE_PINHOLE";
    case CameraModel::kPinhole:
      return "PINHOLE";
    case CameraModel::kSimpleRadial:
      return "SIMPLE_RADIAL";
  }
  return "UNKNOWN";
}

std::optional<CameraModel> camera_model_from_name(const std::string& name) {
  if (name == "SIMPLE_PINHOLE") return CameraModel::kSimplePinhole;
  if (name == "PINHOLE") return CameraModel::kPinhole;
  if (name == "SIMPLE_RADIAL") return CameraModel::kSimpleRadial;
  return std::nullopt;
}

std::optional<CameraModel> camera_model_from_id(int id) {
  switch (id) {
    case 0:
      return CameraModel::kSimplePinhole;
    case 1:
      return CameraModel::kPinhole;
    case 2:
      return CameraModel::kSimpleRadial;
    default:
      return std::nullopt;
  }
}

std::size_t camera_model_num_params(CameraModel model) {
  return model == CameraModel::kSimplePinhole ? 3 : 4;
}

CameraIntrinsics CameraIntrinsics::pinhole(std::uint32_t id, int width, int height, double fx,
                                           double fy, double cx, double cy) {
  return CameraIntrinsics{id, CameraModel::kPinhole, width, height, {fx, fy, cx, cy}};
}

double CameraIntrinsics::fx() const { return params.at(0); }

double CameraIntrinsics::fy() const {
  return model == CameraModel::kPinhole ? params.at(1) : params.at(0);
}

double CameraIntrinsics::cx() const {
  return model == CameraModel::kPinhole ? params.at(2) : params.at(1);
}

double CameraIntrinsics::cy() const {
  return model == CameraModel::kPinhole ? params.at(3) : params.at(2);
}

CameraIntrinsics CameraIntrinsics::rescaled(int new_width, int new_height) const {
  if (new_width <= 0 || new_height <= 0) {
    throw std::invalid_argument("rescaled: target dimensions must be positive");
  }
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  CameraIntrinsics out = *this;
  out.width = new_width;
  out.height = new_height;
  if (model == CameraModel::kPinhole || sx != sy) {
    out.model = CameraModel::kPinhole;
    out.params = {fx() * sx, fy() * sy, cx() * sx, cy() * sy};
  } else {
    out.params[0] *= sx;
    out.params[1] *= sx;
    out.params[2] *= sy;
  }
  return out;
}

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera " + std::to_string(camera_id) +
                                ": width and height must be positive");
  }
  if (params.size() != camera_model_num_params(model)) {
    throw std::invalid_argument("camera " + std::to_string(camera_id) + ": " +
                                camera_model_name(model) + " expects " +
                                std::to_string(camera_model_num_params(model)) + " params");
  }
  if (!(fx() > 0.0) || !(fy() > 0.0)) {
    throw std::invalid_argument("camera " + std::to_string(camera_id) +
                                ": focal length must be positive");
  }
}

Eigen::Matrix3d Pose::rotation() const { return quat_to_rotmat(qvec); }

Eigen::Vector3d Pose::center() const { return -rotation().transpose() * tvec; }

Eigen::Vector3d Pose::to_camera(const Eigen::Vector3d& x_world) const {
  return rotation() * x_world + tvec;
}

const CameraIntrinsics& SceneModel::camera_for(const RegisteredImage& image) const {
  const auto it = cameras.find(image.camera_id);
  if (it == cameras.end()) {
    throw InputError("image '" + image.name + "' references unknown camera " +
                     std::to_string(image.camera_id));
  }
  return it->second;
}

void SceneModel::validate() const {
  std::set<std::string> names;
  for (const auto& image : images) {
    if (!cameras.contains(image.camera_id)) {
      throw InputError("image '" + image.name + "' references unknown camera " +
                       std::to_string(image.camera_id));
    }
    if (!names.insert(image.name).second) {
      throw InputError("duplicate image name '" + image.name + "'");
    }
  }
  for (const auto& [id, camera] : cameras) {
    try {
      camera.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
}

Eigen::Matrix3d quat_to_rotmat(const Eigen::Vector4d& q) {
  const double norm = q.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("quat_to_rotmat: zero or non-finite quaternion");
  }
  if (std::abs(norm - 1.0) > 1e-3) {
    throw std::invalid_argument("quat_to_rotmat: quaternion is not unit length");
  }
  const Eigen::Vector4d u = q / norm;
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

namespace {

// ---------------------------------------------------------------------------
// Text format

class TextLines {
 public:
  explicit TextLines(const fs::path& path) : path_(path), in_(path) {
    if (!in_) throw InputError("cannot open " + path.string());
  }

  // Next line that is neither blank nor a comment.
  bool next_record(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      strip_cr(line);
      return true;
    }
    return false;
  }

  // The physical next line, which may be empty.
  bool next_raw(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    strip_cr(line);
    return true;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(path_.string(), "line " + std::to_string(line_no_), message);
  }

  const fs::path& path() const { return path_; }

 private:
  static void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
  }

  fs::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

template <class T>
T read_token(std::istringstream& ss, const TextLines& lines, const char* what) {
  T value{};
  if (!(ss >> value)) lines.fail(std::string("expected ") + what);
  return value;
}

std::map<std::uint32_t, CameraIntrinsics> read_cameras_text(const fs::path& path) {
  TextLines lines(path);
  std::map<std::uint32_t, CameraIntrinsics> cameras;
  std::string line;
  while (lines.next_record(line)) {
    std::istringstream ss(line);
    CameraIntrinsics cam;
    cam.camera_id = read_token<std::uint32_t>(ss, lines, "camera id");
    const auto model_name = read_token<std::string>(ss, lines, "camera model");
    const auto model = camera_model_from_name(model_name);
    if (!model) lines.fail("unknown camera model '" + model_name + "'");
    cam.model = *model;
    cam.width = read_token<int>(ss, lines, "width");
    cam.height = read_token<int>(ss, lines, "height");
    double p = 0.0;
    while (ss >> p) cam.params.push_back(p);
    if (!ss.eof()) lines.fail("malformed camera parameter");
    try {
      cam.validate();
    } catch (const std::invalid_argument& e) {
      lines.fail(e.what());
    }
    if (!cameras.emplace(cam.camera_id, cam).second) {
      lines.fail("duplicate camera id " + std::to_string(cam.camera_id));
    }
  }
  return cameras;
}

std::vector<RegisteredImage> read_images_text(const fs::path& path) {
  TextLines lines(path);
  std::vector<RegisteredImage> images;
  std::string line;
  while (lines.next_record(line)) {
    std::istringstream ss(line);
    RegisteredImage image;
    image.image_id = read_token<std::uint32_t>(ss, lines, "image id");
    for (int i = 0; i < 4; ++i) image.pose.qvec[i] = read_token<double>(ss, lines, "qvec");
    for (int i = 0; i < 3; ++i) image.pose.tvec[i] = read_token<double>(ss, lines, "tvec");
    image.camera_id = read_token<std::uint32_t>(ss, lines, "camera id");
    image.name = read_token<std::string>(ss, lines, "image name");
    if (std::string extra; ss >> extra) lines.fail("unexpected token '" + extra + "'");
    // The points2D line follows unconditionally (possibly empty); its content
    // is not used downstream.
    std::string points2d;
    lines.next_raw(points2d);
    images.push_back(std::move(image));
  }
  return images;
}

std::vector<Point3D> read_points_text(const fs::path& path) {
  TextLines lines(path);
  std::vector<Point3D> points;
  std::string line;
  while (lines.next_record(line)) {
    std::istringstream ss(line);
    Point3D point;
    point.point_id = read_token<std::uint64_t>(ss, lines, "point id");
    for (int i = 0; i < 3; ++i) point.xyz[i] = read_token<double>(ss, lines, "xyz");
    points.push_back(point);
  }
  return points;
}

// ---------------------------------------------------------------------------
// Binary format (little-endian)

class BinaryReader {
 public:
  explicit BinaryReader(const fs::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  template <class T>
  T read() {
    if (offset_ + sizeof(T) > bytes_.size()) fail("truncated record");
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      auto* raw = reinterpret_cast<unsigned char*>(&value);
      std::reverse(raw, raw + sizeof(T));
    }
    offset_ += sizeof(T);
    return value;
  }

  std::string read_cstring() {
    const auto begin = bytes_.begin() + static_cast<std::ptrdiff_t>(offset_);
    const auto end = std::find(begin, bytes_.end(), '\0');
    if (end == bytes_.end()) fail("unterminated string");
    std::string s(begin, end);
    offset_ += s.size() + 1;
    return s;
  }

  void skip(std::uint64_t count, std::uint64_t stride) {
    if (stride != 0 && count > (bytes_.size() - offset_) / stride) fail("truncated record");
    offset_ += count * stride;
  }

  std::size_t offset() const { return offset_; }

  [[noreturn]] void fail(const std::string& message, std::size_t at) const {
    throw ParseError(path_.string(), "byte " + std::to_string(at), message);
  }
  [[noreturn]] void fail(const std::string& message) const { fail(message, offset_); }

 private:
  fs::path path_;
  std::vector<char> bytes_;
  std::size_t offset_ = 0;
};

// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(const std::string& in) {
  static constexpr char kReplacement[] = "\xEF\xBF\xBD";
  std::string out;
  out.reserve(in.size());
  const auto* s = reinterpret_cast<const unsigned char*>(in.data());
  const std::size_t n = in.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len != 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (s[i + k] & 0x3F);
      }
    }
    if (ok) {
      // Reject overlong encodings, surrogates and out-of-range code points.
      static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
      ok = cp >= kMin[len] && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    }
    if (ok) {
      out.append(in, i, len);
      i += len;
    } else {
      out += kReplacement;
      ++i;
    }
  }
  return out;
}

std::map<std::uint32_t, CameraIntrinsics> read_cameras_binary(const fs::path& path) {
  BinaryReader reader(path);
  std::map<std::uint32_t, CameraIntrinsics> cameras;
  const auto count = reader.read<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_start = reader.offset();
    CameraIntrinsics cam;
    cam.camera_id = reader.read<std::uint32_t>();
    const auto model_id = reader.read<std::int32_t>();
    const auto model = camera_model_from_id(model_id);
    if (!model) {
      reader.fail("unknown camera model id " + std::to_string(model_id), record_start + 4);
    }
    cam.model = *model;
    cam.width = static_cast<int>(reader.read<std::uint64_t>());
    cam.height = static_cast<int>(reader.read<std::uint64_t>());
    cam.params.resize(camera_model_num_params(cam.model));
    for (auto& p : cam.params) p = reader.read<double>();
    try {
      cam.validate();
    } catch (const std::invalid_argument& e) {
      reader.fail(e.what(), record_start);
    }
    if (!cameras.emplace(cam.camera_id, cam).second) {
      reader.fail("duplicate camera id " + std::to_string(cam.camera_id), record_start);
    }
  }
  return cameras;
}

std::vector<RegisteredImage> read_images_binary(const fs::path& path) {
  BinaryReader reader(path);
  std::vector<RegisteredImage> images;
  const auto count = reader.read<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    RegisteredImage image;
    image.image_id = reader.read<std::uint32_t>();
    for (int k = 0; k < 4; ++k) image.pose.qvec[k] = reader.read<double>();
    for (int k = 0; k < 3; ++k) image.pose.tvec[k] = reader.read<double>();
    image.camera_id = reader.read<std::uint32_t>();
    image.name = sanitize_utf8(reader.read_cstring());
    const auto num_points2d = reader.read<std::uint64_t>();
    // x, y (f64) and point3D id (i64) per observation.
    reader.skip(num_points2d, 24);
    images.push_back(std::move(image));
  }
  return images;
}

std::vector<Point3D> read_points_binary(const fs::path& path) {
  BinaryReader reader(path);
  std::vector<Point3D> points;
  const auto count = reader.read<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    Point3D point;
    point.point_id = reader.read<std::uint64_t>();
    for (int k = 0; k < 3; ++k) point.xyz[k] = reader.read<double>();
    reader.skip(3, 1);  // rgb
    reader.read<double>();  // reprojection error
    const auto track_length = reader.read<std::uint64_t>();
    reader.skip(track_length, 8);  // (image id, point2D idx) as i32 pairs
    points.push_back(point);
  }
  return points;
}

void check_radial_distortion(const std::map<std::uint32_t, CameraIntrinsics>& cameras) {
  for (const auto& [id, cam] : cameras) {
    if (cam.model == CameraModel::kSimpleRadial && std::abs(cam.params[3]) > 1e-8) {
      warn("camera " + std::to_string(id) + ": SIMPLE_RADIAL k=" + std::to_string(cam.params[3]) +
           " is ignored; projection uses the pinhole part only");
    }
  }
}

}  // namespace

SceneModel parse_model(const fs::path& dir, ModelFormat format) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  const bool has_binary = fs::exists(dir / "cameras.bin") && fs::exists(dir / "images.bin");
  const bool has_text = fs::exists(dir / "cameras.txt") && fs::exists(dir / "images.txt");
  if (format == ModelFormat::kAuto) {
    if (has_binary) {
      format = ModelFormat::kBinary;
    } else if (has_text) {
      format = ModelFormat::kText;
    } else {
      throw InputError("no COLMAP model (cameras/images .bin or .txt) in " + dir.string());
    }
  }

  SceneModel model;
  if (format == ModelFormat::kBinary) {
    for (const char* name : {"cameras.bin", "images.bin"}) {
      if (!fs::exists(dir / name)) throw InputError("missing file " + (dir / name).string());
    }
    model.cameras = read_cameras_binary(dir / "cameras.bin");
    model.images = read_images_binary(dir / "images.bin");
    if (fs::exists(dir / "points3D.bin")) model.points3d = read_points_binary(dir / "points3D.bin");
  } else {
    for (const char* name : {"cameras.txt", "images.txt"}) {
      if (!fs::exists(dir / name)) throw InputError("missing file " + (dir / name).string());
    }
    model.cameras = read_cameras_text(dir / "cameras.txt");
    model.images = read_images_text(dir / "images.txt");
    if (fs::exists(dir / "points3D.txt")) model.points3d = read_points_text(dir / "points3D.txt");
  }
  model.validate();
  check_radial_distortion(model.cameras);
  return model;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

double median(std::vector<double> values) { return percentile(std::move(values), 0.5); }

Eigen::Vector3d mean_of(const std::vector<Eigen::Vector3d>& xs) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

constexpr double kDegenerateExtent = 1e-12;

}  // namespace

SceneModel normalize_scene(const SceneModel& model, double target_radius) {
  if (!(target_radius > 0.0)) throw std::invalid_argument("target_radius must be positive");

  SimTransform xf;
  SceneModel out = model;
  if (!model.points3d.empty()) {
    std::vector<Eigen::Vector3d> xyz;
    xyz.reserve(model.points3d.size());
    for (const auto& p : model.points3d) xyz.push_back(p.xyz);
    const Eigen::Vector3d raw_centroid = mean_of(xyz);
    std::vector<double> raw_dist;
    raw_dist.reserve(xyz.size());
    for (const auto& x : xyz) raw_dist.push_back((x - raw_centroid).norm());
    const double cutoff = 3.0 * median(raw_dist);

    out.points3d.clear();
    std::vector<Eigen::Vector3d> kept;
    for (std::size_t i = 0; i < xyz.size(); ++i) {
      if (raw_dist[i] <= cutoff) {
        kept.push_back(xyz[i]);
        out.points3d.push_back(model.points3d[i]);
      }
    }
    xf.center = mean_of(kept);
    std::vector<double> radii;
    radii.reserve(kept.size());
    for (const auto& x : kept) radii.push_back((x - xf.center).norm());
    const double r95 = percentile(radii, 0.95);
    if (!(r95 > kDegenerateExtent)) {
      throw InputError("normalize_scene: degenerate point cloud (all points coincide)");
    }
    xf.scale = target_radius / r95;
  } else {
    if (model.images.size() < 2) {
      throw InputError("normalize_scene: need sparse points or at least two cameras");
    }
    std::vector<Eigen::Vector3d> centers;
    for (const auto& image : model.images) centers.push_back(image.pose.center());
    xf.center = mean_of(centers);
    double mean_dist = 0.0;
    for (const auto& c : centers) mean_dist += (c - xf.center).norm();
    mean_dist /= static_cast<double>(centers.size());
    if (!(mean_dist > kDegenerateExtent)) {
      throw InputError("normalize_scene: degenerate camera layout (all centers coincide)");
    }
    xf.scale = target_radius / mean_dist;
  }

  for (auto& p : out.points3d) p.xyz = xf.apply(p.xyz);
  for (auto& image : out.images) {
    const Eigen::Matrix3d r = image.pose.rotation();
    image.pose.tvec = xf.scale * (r * xf.center + image.pose.tvec);
  }
  // Compose with an earlier normalization so `norm` always maps the original
  // world frame to the current one.
  if (model.norm) {
    const SimTransform& prev = *model.norm;
    SimTransform composed;
    composed.scale = prev.scale * xf.scale;
    composed.center = prev.center + xf.center / prev.scale;
    out.norm = composed;
  } else {
    out.norm = xf;
  }
  return out;
}

}  // namespace thinrecon
