#include "thinrecon/scene_file.hpp"

#include <fstream>

#include "thinrecon/errors.hpp"

namespace thinrecon {

namespace {

constexpr const char* kFormatTag = "thinrecon-scene";
constexpr int kFormatVersion = 1;

template <class Vec>
nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw InputError(std::string("scene.json: '") + what + "' must have " + std::to_string(N) + " entries");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

nlohmann::json scene_to_json(const SceneModel& model) {
  nlohmann::json j;
  j["format"] = kFormatTag;
  j["version"] = kFormatVersion;
  j["cameras"] = nlohmann::json::array();
  for (const auto& [id, cam] : model.cameras) {
    j["cameras"].push_back({{"camera_id", cam.camera_id},
                            {"model", camera_model_name(cam.model)},
                            {"width", cam.width},
                            {"height", cam.height},
                            {"params", cam.params}});
  }
  j["images"] = nlohmann::json::array();
  for (const auto& image : model.images) {
    j["images"].push_back({{"image_id", image.image_id},
                           {"name", image.name},
                           {"camera_id", image.camera_id},
                           {"qvec", vec_to_json(image.pose.qvec)},
                           {"tvec", vec_to_json(image.pose.tvec)}});
  }
  j["points3d"] = nlohmann::json::array();
  for (const auto& p : model.points3d) {
    j["points3d"].push_back({{"point_id", p.point_id}, {"xyz", vec_to_json(p.xyz)}});
  }
  if (model.norm) {
    j["normalization"] = {{"center", vec_to_json(model.norm->center)}, {"scale", model.norm->scale}};
  } else {
    j["normalization"] = nullptr;
  }
  return j;
}

SceneModel scene_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != kFormatTag) {
      throw InputError("scene.json: missing or unknown format tag");
    }
    SceneModel model;
    for (const auto& c : j.at("cameras")) {
      CameraIntrinsics cam;
      cam.camera_id = c.at("camera_id").get<std::uint32_t>();
      const auto model_id = camera_model_from_name(c.at("model").get<std::string>());
      if (!model_id) throw InputError("scene.json: unknown camera model");
      cam.model = *model_id;
      cam.width = c.at("width").get<int>();
      cam.height = c.at("height").get<int>();
      cam.params = c.at("params").get<std::vector<double>>();
      model.cameras.emplace(cam.camera_id, cam);
    }
    for (const auto& i : j.at("images")) {
      RegisteredImage image;
      image.image_id = i.at("image_id").get<std::uint32_t>();
      image.name = i.at("name").get<std::string>();
      image.camera_id = i.at("camera_id").get<std::uint32_t>();
      image.pose.qvec = vec_from_json<4>(i.at("qvec"), "qvec");
      image.pose.tvec = vec_from_json<3>(i.at("tvec"), "tvec");
      model.images.push_back(std::move(image));
    }
    if (j.contains("points3d")) {
      for (const auto& p : j.at("points3d")) {
        model.points3d.push_back({p.at("point_id").get<std::uint64_t>(), vec_from_json<3>(p.at("xyz"), "xyz")});
      }
    }
    if (j.contains("normalization") && !j.at("normalization").is_null()) {
      const auto& n = j.at("normalization");
      model.norm = SimTransform{vec_from_json<3>(n.at("center"), "center"), n.at("scale").get<double>()};
    }
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("scene.json: ") + e.what());
  }
}

void save_scene(const std::filesystem::path& path, const SceneModel& model) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << scene_to_json(model).dump(2) << '\n';
}

SceneModel load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return scene_from_json(j);
}

}  // namespace thinrecon
