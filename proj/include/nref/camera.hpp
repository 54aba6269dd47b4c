#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Geometry>

#include "nref/field.hpp"

namespace nref {

/// Pinhole camera. Camera space is x right, y down, z forward; pixel (px, py) covers
/// [px, px+1) x [py, py+1) and its center ray passes through ((px+0.5-cx)/fx, (py+0.5-cy)/fy, 1).
struct Camera {
  Eigen::Matrix4d world_from_camera = Eigen::Matrix4d::Identity();
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  Vec3 position() const { return world_from_camera.block<3, 1>(0, 3); }
  Ray pixel_ray(int px, int py) const;
  Ray ray_through(double x, double y) const;

  /// Camera at `eye` looking at `target`, image y axis aligned with -up.
  static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fov_y_deg, int width,
                        int height);
};

// JSON: {"pose": [16 numbers, row-major world-from-camera], "fx", "fy", "cx", "cy",
// "width", "height"}; a camera list is a JSON array of those objects.
Camera read_camera(const std::filesystem::path &path);
void write_camera(const std::filesystem::path &path, const Camera &camera);
std::vector<Camera> read_cameras(const std::filesystem::path &path);
void write_cameras(const std::filesystem::path &path, const std::vector<Camera> &cameras);

}  // namespace nref
