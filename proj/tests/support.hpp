#pragma once

#include <functional>

#include "nref/field.hpp"

namespace nref::test {

/// Grid whose samples are fn(position).
inline DensityGrid grid_from(std::array<int, 3> dims, const Vec3 &origin, double voxel,
                             const std::function<double(const Vec3 &)> &fn) {
  DensityGrid g(dims, origin, voxel);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) g.set(i, j, k, fn(g.position(i, j, k)));
  return g;
}

/// Cube grid spanning [-half, half]^3 with n samples per axis.
inline DensityGrid cube_grid(int n, double half, const std::function<double(const Vec3 &)> &fn) {
  return grid_from({n, n, n}, Vec3::Constant(-half), 2.0 * half / (n - 1), fn);
}

inline Vec3 random_unit(Rng &rng) {
  const double z = 2.0 * rng.uniform() - 1.0;
  const double phi = 2.0 * kPi * rng.uniform();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Gaussian shell of radius r around c, peak density chosen so a ray through one wall sees `depth`.
inline double sphere_shell(const Vec3 &x, const Vec3 &c, double r, double width, double depth) {
  const double d = (x - c).norm() - r;
  return depth / (width * std::sqrt(2 * kPi)) * std::exp(-d * d / (2 * width * width));
}

/// Surfels on a sphere (Fibonacci spiral), outward normals, fully visible sky.
inline SurfelCloud sphere_surfels(int count, const Vec3 &c, double r, const Vec3 &albedo, double roughness) {
  SurfelCloud cloud;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count, rho = std::sqrt(1 - z * z);
    const Vec3 n(rho * std::cos(golden * i), rho * std::sin(golden * i), z);
    Surfel s;
    s.position = c + r * n;
    s.normal = s.init_normal = n;
    s.albedo = albedo;
    s.roughness = roughness;
    s.visibility.fill(1.0);
    s.init_visibility.fill(1.0);
    cloud.surfels.push_back(s);
  }
  return cloud;
}

inline Vec3 random_in_box(Rng &rng, const Vec3 &lo, const Vec3 &hi) {
  return {lo.x() + (hi.x() - lo.x()) * rng.uniform(), lo.y() + (hi.y() - lo.y()) * rng.uniform(),
          lo.z() + (hi.z() - lo.z()) * rng.uniform()};
}

}  // namespace nref::test
