#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "nref/camera.hpp"
#include "nref/envmap.hpp"
#include "nref/field.hpp"
#include "nref/image.hpp"
#include "nref/shading.hpp"

namespace nref {

/// Albedo as a function of world position.
struct Texture {
  enum class Kind { Constant, Checker, Bands };
  Kind kind = Kind::Constant;
  Vec3 color_a = Vec3::Constant(0.5);
  Vec3 color_b = Vec3::Constant(0.5);
  double scale = 1.0;            // checker cell size / band period
  Vec3 axis = Vec3::UnitY();     // band direction

  Vec3 eval(const Vec3 &x) const;
};

struct Material {
  Texture albedo;
  double roughness = 0.5;
  double specular = 0.04;  // Fresnel f0
};

/// Implicit primitive. Planes are finite squares (center, unit normal, half_size) with optional
/// sinusoidal bumps; unions combine children and pass their own material down when the child has none.
struct Primitive {
  enum class Shape { Sphere, Box, Plane, Union };
  Shape shape = Shape::Sphere;
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  Vec3 half_extent = Vec3::Constant(0.5);
  Vec3 normal = Vec3::UnitZ();
  double half_size = 1.0;
  double bump_amplitude = 0.0;
  double bump_frequency = 0.0;
  std::vector<Primitive> children;
  Material material;

  /// Signed distance estimate (exact for sphere and box, Lipschitz-bounded for bumpy planes).
  double sdf(const Vec3 &x) const;
  /// Outward surface normal at a point near the surface.
  Vec3 surface_normal(const Vec3 &x) const;
};

struct SceneDesc {
  std::vector<Primitive> primitives;
  Aabb bounds{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  double shell_voxels = 0.75;   // Gaussian shell width in voxels
  double optical_depth = 30.0;  // line integral of density straight through one shell
  double noise = 0.0;           // amplitude of i.i.d. uniform per-voxel density noise
  EnvCubeMap env{16};
  std::optional<EnvCubeMap> relight_env;
  std::vector<Camera> cameras;
  std::vector<Camera> heldout;
  int reference_samples = 1024;
  std::uint64_t seed = 1;

  /// Signed distance to the nearest primitive surface and its index.
  std::pair<double, int> nearest(const Vec3 &x) const;
};

/// Load a scene description. Relative file paths inside the JSON resolve against its directory.
SceneDesc load_scene(const std::filesystem::path &path);
SceneDesc parse_scene(const std::string &json_text, const std::filesystem::path &base_dir = ".");

/// Voxel size and dims for a scene sampled with `dims` samples along its longest axis.
DensityGrid bake_scene(const SceneDesc &desc, int dims);

struct GtPoint {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 albedo = Vec3::Zero();
  double roughness = 0.5;
  double specular = 0.04;
  int primitive = -1;
};

/// Ground truth at the surface point closest to x.
GtPoint ground_truth(const SceneDesc &desc, const Vec3 &x);

/// First surface hit along a ray (sphere tracing on the union distance).
std::optional<GtPoint> intersect_scene(const SceneDesc &desc, const Ray &ray);
/// True when any primitive blocks the ray from x along w.
bool occluded(const SceneDesc &desc, const Vec3 &x, const Vec3 &w);

struct ReferenceImage {
  Image color;
  Image mask;    // 1 where the pixel ray hits a primitive
  Image albedo;  // ground-truth albedo at the hit
  Image normal;  // ground-truth normal at the hit
};

/// Oracle renderer: analytic hits, shadow rays against the primitives, shared BRDF, level-0 lookups.
ReferenceImage render_reference(const SceneDesc &desc, const Camera &camera, const EnvCubeMap &env, int n_samples,
                                std::uint64_t seed = 0);

/// Write grid.rfv, env.pfm (+ env_relight.pfm), views/ and heldout/ (view_XXX.pfm, mask_XXX.pfm,
/// cameras.json), and gt/ (albedo_XXX.pfm, normal_XXX.pfm for training views).
void write_fixture(const std::filesystem::path &dir, const SceneDesc &desc, const DensityGrid &grid);

}  // namespace nref
