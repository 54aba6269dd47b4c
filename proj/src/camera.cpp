#include "nref/camera.hpp"

#include <fstream>

#include <json.hpp>

namespace nref {

using nlohmann::json;

Ray Camera::ray_through(double x, double y) const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorKind::Format, "camera focal lengths must be positive");
  const Vec3 d_cam((x - cx) / fx, (y - cy) / fy, 1.0);
  const Mat3 R = world_from_camera.block<3, 3>(0, 0);
  return Ray(position(), R * d_cam);
}

Ray Camera::pixel_ray(int px, int py) const { return ray_through(px + 0.5, py + 0.5); }

Camera Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fov_y_deg, int width,
                       int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);  // image down
  Camera cam;
  cam.world_from_camera.block<3, 1>(0, 0) = x;
  cam.world_from_camera.block<3, 1>(0, 1) = y;
  cam.world_from_camera.block<3, 1>(0, 2) = z;
  cam.world_from_camera.block<3, 1>(0, 3) = eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * kPi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

namespace {

json to_json(const Camera &c) {
  std::vector<double> pose;
  for (int r = 0; r < 4; ++r) {
    for (int k = 0; k < 4; ++k) pose.push_back(c.world_from_camera(r, k));
  }
  return {{"pose", pose}, {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx},
          {"cy", c.cy},   {"width", c.width}, {"height", c.height}};
}

Camera from_json(const json &j) {
  Camera c;
  try {
    const auto pose = j.at("pose").get<std::vector<double>>();
    if (pose.size() != 16) throw Error(ErrorKind::Format, "camera pose must have 16 entries");
    for (int r = 0; r < 4; ++r) {
      for (int k = 0; k < 4; ++k) c.world_from_camera(r, k) = pose[r * 4 + k];
    }
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Format, std::string("bad camera JSON: ") + e.what());
  }
  if (!(c.fx > 0.0) || !(c.fy > 0.0) || c.width < 1 || c.height < 1) {
    throw Error(ErrorKind::Format, "camera requires fx, fy > 0 and a positive image size");
  }
  return c;
}

json load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Format, "cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

void save(const std::filesystem::path &path, const json &j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Format, "cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

Camera read_camera(const std::filesystem::path &path) {
  const json j = load(path);
  if (j.is_array()) {
    if (j.empty()) throw Error(ErrorKind::Format, "empty camera list");
    return from_json(j.front());
  }
  return from_json(j);
}

void write_camera(const std::filesystem::path &path, const Camera &camera) { save(path, to_json(camera)); }

std::vector<Camera> read_cameras(const std::filesystem::path &path) {
  const json j = load(path);
  std::vector<Camera> out;
  if (!j.is_array()) {
    out.push_back(from_json(j));
    return out;
  }
  for (const auto &c : j) out.push_back(from_json(c));
  return out;
}

void write_cameras(const std::filesystem::path &path, const std::vector<Camera> &cameras) {
  json j = json::array();
  for (const auto &c : cameras) j.push_back(to_json(c));
  save(path, j);
}

}  // namespace nref
