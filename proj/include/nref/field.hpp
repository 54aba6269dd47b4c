#pragma once

#include <array>
#include <concepts>
#include <filesystem>
#include <optional>
#include <vector>

#include "nref/common.hpp"

namespace nref {

/// Anything that answers a volume density at a world position.
template <typename F>
concept DensityField = requires(const F &f, const Vec3 &x) {
  { f.density(x) } -> std::convertible_to<double>;
};

/// Axis-aligned box.
struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3 &x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  Vec3 extent() const { return hi - lo; }
};

/// Regular grid of density samples. Sample (i,j,k) sits at origin + (i,j,k) * voxel_size, so the
/// grid spans [origin, origin + (dims - 1) * voxel_size] and is vacuum outside.
class DensityGrid {
 public:
  DensityGrid() = default;
  DensityGrid(std::array<int, 3> dims, Vec3 origin, double voxel_size);
  DensityGrid(std::array<int, 3> dims, Vec3 origin, double voxel_size, std::vector<double> sigma);

  const std::array<int, 3> &dims() const { return dims_; }
  const Vec3 &origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  Aabb bounds() const;
  std::size_t size() const { return sigma_.size(); }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
  }
  double at(int i, int j, int k) const { return sigma_[index(i, j, k)]; }
  void set(int i, int j, int k, double value);
  Vec3 position(int i, int j, int k) const { return origin_ + voxel_size_ * Vec3(i, j, k); }

  const std::vector<double> &values() const { return sigma_; }
  double max_value() const;

  /// Trilinear interpolation; 0 outside the grid bounds.
  double density(const Vec3 &x) const;

 private:
  std::array<int, 3> dims_{2, 2, 2};
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  std::vector<double> sigma_ = std::vector<double>(8, 0.0);
};

inline double sample_density(const DensityGrid &grid, const Vec3 &x) { return grid.density(x); }

/// Central difference of the interpolated density with step voxel_size / 2.
/// Throws OutOfBounds when x lies outside the bounds inflated by one voxel.
Vec3 density_gradient(const DensityGrid &grid, const Vec3 &x);

/// Same difference scheme for arbitrary fields, with explicit step.
template <DensityField F>
Vec3 density_gradient(const F &field, const Vec3 &x, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    g[a] = (field.density(x + e) - field.density(x - e)) / (2.0 * h);
  }
  return g;
}

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();

  Ray() = default;
  Ray(const Vec3 &o, const Vec3 &d, double tn = 0.0,
      double tf = std::numeric_limits<double>::infinity());

  Vec3 at(double t) const { return origin + t * dir; }
};

/// Parametric overlap of the ray with a box, intersected with [t_near, t_far].
std::optional<std::pair<double, double>> clip_ray(const Ray &ray, const Aabb &box);

struct Surfel {
  Vec3 position = Vec3::Zero();
  Vec3 albedo = Vec3::Constant(0.5);
  double roughness = 0.5;
  Vec3 normal = Vec3::UnitZ();
  VisibilityBins visibility{};
  Vec3 init_normal = Vec3::UnitZ();
  VisibilityBins init_visibility{};
  bool erratic = false;

  /// Re-establish the invariants after a mutation: unit normal, clamped ranges.
  void normalize();
};

struct SurfelCloud {
  std::vector<Surfel> surfels;

  std::size_t size() const { return surfels.size(); }
  bool empty() const { return surfels.empty(); }
};

// RFV1 grid files: 16-byte header ("RFV1", u32 version, 8 zero bytes), u32 dims[3],
// f32 origin[3], f32 voxel_size, then f32 sigma in x-fastest order, all little-endian.
void write_rfv(const std::filesystem::path &path, const DensityGrid &grid);
DensityGrid read_rfv(const std::filesystem::path &path);

// SFL1 surfel files: "SFL1", u32 version, u32 count, u32 bins, then per surfel f32 position[3],
// albedo[3], roughness, normal[3], init_normal[3], erratic, visibility[bins], init_visibility[bins].
void write_sfl(const std::filesystem::path &path, const SurfelCloud &cloud);
SurfelCloud read_sfl(const std::filesystem::path &path);

}  // namespace nref
