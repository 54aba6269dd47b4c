#pragma once

#include <filesystem>
#include <string>

#include "nref/octree.hpp"
#include "nref/shading.hpp"
#include "nref/surface.hpp"

namespace nref {

struct FilterConfig {
  double sigma_x_voxels = 3.0;
  double sigma_normal = 0.3;
  double sigma_albedo = 0.15;
  double sigma_roughness = 0.1;
  double sigma_parsimony = 0.2;
  int samples = 8;
  int kmeans_k = 16;
  int keep_per_cluster = 4;
  bool l2 = false;  // L1 residual norm by default
};

struct LossWeights {
  double render = 1.0;
  double commitment_stage_a = 0.5;
  double commitment_warmup = 0.5;
  double commitment_joint = 0.1;
  double smooth_albedo = 0.5;
  double smooth_roughness = 0.01;
  double smooth_shape = 0.1;
  bool smooth_visibility = true;  // visibility bins reuse the shape weight
  double parsimony_albedo = 0.1;
  double parsimony_roughness = 0.005;
  double env_smooth = 1.0;
  double warmup_prior_scale = 0.1;
};

struct Schedule {
  int stage_a_epochs = 100;
  int warmup_epochs = 100;
  int joint_epochs = 200;
  int batch_size = 1024;
};

struct LearningRates {
  double albedo = 1e-2;
  double roughness = 1e-2;
  double visibility = 1e-2;
  double normal = 5e-3;
  double env = 2e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SurfelConfig {
  double spacing_voxels = 1.5;     // merge radius of the hit hash grid
  double erratic_angle_deg = 60.0;
  int erratic_neighbors = 8;
  int visibility_rays_per_bin = 4;
  bool median_extraction = true;   // false: expected termination (baseline)
  int max_rays_per_view = 0;       // 0 keeps every masked pixel
};

/// Every tunable, with defaults equal to the documented design values.
struct Config {
  ExtractionConfig extraction;
  int octree_max_depth = 8;
  int octree_leaf_cells = 4;
  double visibility_offset_voxels = 2.0;
  FilterConfig filter;
  SamplingConfig sampling;
  double specular_f0 = 0.04;
  int env_resolution = 16;
  bool use_mips = true;
  int knn = 8;
  double knn_bandwidth_voxels = 2.0;
  LossWeights weights;
  Schedule schedule;
  LearningRates lr;
  SurfelConfig surfels;
  std::uint64_t seed = 0;

  /// Throws Config on any out-of-range value.
  void validate() const;
};

/// Parse a (possibly partial) config JSON; unknown keys are rejected.
Config parse_config(const std::string &json_text);
Config load_config(const std::filesystem::path &path);
std::string config_to_json(const Config &cfg);

}  // namespace nref
