#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nref/camera.hpp"
#include "nref/envmap.hpp"
#include "nref/image.hpp"
#include "nref/octree.hpp"
#include "nref/shading.hpp"

namespace nref {

enum class VisibilitySource { None, Octree, SurfelBins };

struct RenderConfig {
  SamplingConfig sampling;
  VisibilitySource visibility = VisibilitySource::SurfelBins;
  std::uint64_t seed = 0;
  bool use_mips = true;
  double specular_f0 = 0.04;
  int knn = 8;
  double knn_bandwidth_voxels = 2.0;
  ExtractionConfig extraction;
  VisibilityConfig vis;
};

/// Where shade_point reads light visibility from.
struct VisibilityLookup {
  VisibilitySource source = VisibilitySource::None;
  const VisibilityBins *bins = nullptr;  // SurfelBins
  const Octree *tree = nullptr;          // Octree
  Vec3 position = Vec3::Zero();          // Octree query origin

  double operator()(const Vec3 &wi, int bin) const;
};

/// A light sample frozen at draw time: direction, estimator weight, visibility bin and mip level.
struct ShadeSample {
  Vec3 wi = Vec3::UnitZ();
  double weight = 0.0;
  double pdf = 0.0;
  int lobe_count = 0;
  int bin = -1;
  double level = 0.0;
};

std::vector<ShadeSample> draw_shade_samples(const BrdfParams &brdf, const Vec3 &n, const Vec3 &wo,
                                            const EnvCubeMap &env, const RenderConfig &cfg, Rng &rng);

/// Estimate of the reflected radiance for a fixed sample set.
Vec3 shade_samples(std::span<const ShadeSample> samples, const BrdfParams &brdf, const Vec3 &n, const Vec3 &wo,
                   const EnvCubeMap &env, const VisibilityLookup &vis);

/// Monte-Carlo estimate of the reflected radiance toward wv (unit, pointing away from the surface).
/// When `record` is given it receives the sample set used.
Vec3 shade_point(const Surfel &surfel, const Vec3 &wv, const EnvCubeMap &env, const VisibilityLookup &vis,
                 const RenderConfig &cfg, Rng &rng, std::vector<ShadeSample> *record = nullptr);

/// Per-sample intermediate values kept by shade_forward for the backward pass.
struct ShadeTape {
  struct Entry {
    Vec3 f = Vec3::Zero();
    Vec3 df_rough = Vec3::Zero();
    Mat3 df_normal = Mat3::Zero();  // raw (unprojected) rows
    Vec3 radiance = Vec3::Zero();
    Footprint footprint;
    double visibility = 0.0;
    double cos = 0.0;
    double weight = 0.0;
    Vec3 wi = Vec3::Zero();
    int bin = -1;
  };
  std::vector<Entry> entries;
};

/// Gradients of one shaded value with respect to the surfel parameters.
struct ShadeAdjoint {
  Vec3 d_albedo = Vec3::Zero();
  double d_roughness = 0.0;
  Vec3 d_normal = Vec3::Zero();  // raw gradient with respect to the (unnormalized) normal vector
  VisibilityBins d_visibility{};
};

/// Per-level texel gradient buffers matching an EnvCubeMap's mip chain.
using EnvGradient = std::vector<std::vector<Vec3>>;
EnvGradient make_env_gradient(const EnvCubeMap &env);

/// Forward pass with visibility taken from surfel bins; fills the tape.
Vec3 shade_forward(std::span<const ShadeSample> samples, const BrdfParams &brdf, const Vec3 &n, const Vec3 &wo,
                   const EnvCubeMap &env, const VisibilityBins &bins, ShadeTape &tape);

/// Accumulate d(upstream . L)/d(parameters) into `out` and into per-level env texel gradients.
void shade_backward(const ShadeTape &tape, const Vec3 &upstream, ShadeAdjoint &out, EnvGradient *env_grad);

/// Squared L2 distance over the three channels.
inline double render_loss(const Vec3 &predicted, const Vec3 &observed) { return (observed - predicted).squaredNorm(); }

struct RenderedImage {
  Image color;
  std::vector<double> alpha;
  std::vector<bool> hit;
};

/// Gaussian-weighted average of the k nearest surfels' attributes at x.
Surfel interpolate_surfel(const SurfelCloud &cloud, const SurfelIndex &index, const Vec3 &x, int k, double bandwidth);

/// Per pixel: median surface point through the octree, interpolated attributes, shade_point.
RenderedImage render_image(const Camera &camera, const Octree &tree, const SurfelCloud &cloud,
                           const SurfelIndex &index, const EnvCubeMap &env, const RenderConfig &cfg);

RenderedImage relight(const Camera &camera, const Octree &tree, const SurfelCloud &cloud, const SurfelIndex &index,
                      const EnvCubeMap &new_env, const RenderConfig &cfg);

RenderedImage edit_material(const Camera &camera, const Octree &tree, const SurfelCloud &cloud,
                            const SurfelIndex &index, const EnvCubeMap &env, const RenderConfig &cfg,
                            const std::function<void(Surfel &)> &edit);

}  // namespace nref
