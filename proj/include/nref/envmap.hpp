#pragma once

#include <filesystem>
#include <vector>

#include "nref/common.hpp"

namespace nref {

/// Cube-face coordinates of a direction: face in OpenGL order (+X,-X,+Y,-Y,+Z,-Z), u,v in [-1,1].
struct FaceCoord {
  int face = 0;
  double u = 0.0;
  double v = 0.0;
};

FaceCoord direction_to_face(const Vec3 &w);
Vec3 face_to_direction(int face, double u, double v);

/// Mip level for a light sample: max(0.5 log2(solid_angle_sample / solid_angle_texel), 0) with
/// solid_angle_sample = 1 / (N pdf) and solid_angle_texel = 4 / W^2 / (u^2 + v^2 + 1)^{3/2},
/// clamped to [0, max_level].
double mip_level(int n_samples, double pdf, int base_resolution, double u, double v,
                 double max_level = std::numeric_limits<double>::infinity());

/// One weighted texel touched by a lookup (level, flat texel index).
struct TexelWeight {
  int level = 0;
  int texel = 0;
  double weight = 0.0;
};

/// Lookup footprint: at most 4 texels on each of two levels.
struct Footprint {
  std::array<TexelWeight, 8> taps{};
  int count = 0;

  void add(int level, int texel, double weight) {
    if (weight != 0.0) taps[count++] = {level, texel, weight};
  }
};

/// Six-face HDR environment with a box-filtered mip chain. Texels are RGB radiance, addressed as
/// face * W_l^2 + y * W_l + x on level l (W_l = W >> l); texel (x, y) covers u in
/// [2x/W_l - 1, 2(x+1)/W_l - 1] and likewise v with y.
class EnvCubeMap {
 public:
  EnvCubeMap() = default;
  explicit EnvCubeMap(int resolution, const Vec3 &fill = Vec3::Ones());

  int resolution() const { return resolution_; }
  int levels() const { return static_cast<int>(mips_.size()); }
  int level_resolution(int level) const { return resolution_ >> level; }
  int texel_count(int level = 0) const { return 6 * level_resolution(level) * level_resolution(level); }
  int texel_index(int face, int x, int y, int level = 0) const {
    const int w = level_resolution(level);
    return (face * w + y) * w + x;
  }

  const std::vector<Vec3> &level(int l) const { return mips_[l]; }
  Vec3 &texel(int index) { return mips_[0][index]; }
  const Vec3 &texel(int index) const { return mips_[0][index]; }
  /// Direction through the center of a level-0 texel.
  Vec3 texel_direction(int index) const;

  /// Rebuild levels 1.. from level 0 (2x2 box filter per level).
  void build_mips();

  /// Trilinear lookup: bilinear (clamp-to-edge per face) on floor(l) and ceil(l), blended.
  Vec3 sample(const Vec3 &w, double level, Footprint *footprint = nullptr) const;

  /// Expand a footprint into level-0 texel weights (adjoint of the box filter).
  std::vector<std::pair<int, double>> level0_weights(const Footprint &fp) const;

  /// Adjoint of build_mips: fold per-level texel gradients down into level 0.
  std::vector<Vec3> fold_gradients(std::vector<std::vector<Vec3>> per_level) const;

  void scale(const Vec3 &s);

 private:
  Vec3 bilinear(int level, const FaceCoord &fc, double weight, Footprint *fp) const;

  int resolution_ = 0;
  std::vector<std::vector<Vec3>> mips_;
};

inline Vec3 sample_env(const EnvCubeMap &env, const Vec3 &w, double level, Footprint *fp = nullptr) {
  return env.sample(w, level, fp);
}

/// Mean squared residual between level 0 and level 1 upsampled (nearest) to level 0.
double env_smooth_loss(const EnvCubeMap &env);
/// Gradient of env_smooth_loss with respect to level-0 texels.
std::vector<Vec3> env_smooth_gradient(const EnvCubeMap &env);

/// Cross layout: 4W x 3W image, faces at (column, row) +Y (1,0), -X (0,1), +Z (1,1), +X (2,1),
/// -Z (3,1), -Y (1,2); face texel (x, y) lands at image pixel (col*W + x, row*W + y), row 0 on top.
void write_env_cross(const std::filesystem::path &path, const EnvCubeMap &env);
EnvCubeMap read_env_cross(const std::filesystem::path &path);
/// Six separate W x W images named <stem>_px.pfm, _nx, _py, _ny, _pz, _nz.
void write_env_faces(const std::filesystem::path &stem, const EnvCubeMap &env);
EnvCubeMap read_env_faces(const std::filesystem::path &stem);

/// Rotate an environment about +Y by the given angle (resampled at level 0 with bilinear lookups).
EnvCubeMap rotate_env_y(const EnvCubeMap &env, double radians);

}  // namespace nref
