#include "nref/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nref {

using nlohmann::json;

namespace {

// Every config entry as (section, key, field); section "" is the top level.
template <typename C, typename F>
void for_each_field(C &c, F &&f) {
  f("extraction", "tau_hit", c.extraction.tau_hit);
  f("extraction", "steps_per_unit", c.extraction.steps_per_unit);
  f("extraction", "min_steps_per_voxel", c.extraction.min_steps_per_voxel);
  f("extraction", "bisection_tol_voxels", c.extraction.bisection_tol_voxels);
  f("extraction", "normal_radius_voxels", c.extraction.normal_radius_voxels);
  f("extraction", "normal_samples", c.extraction.normal_samples);
  f("extraction", "normal_eps", c.extraction.normal_eps);
  f("octree", "max_depth", c.octree_max_depth);
  f("octree", "leaf_cells", c.octree_leaf_cells);
  f("octree", "visibility_offset_voxels", c.visibility_offset_voxels);
  f("filter", "sigma_x_voxels", c.filter.sigma_x_voxels);
  f("filter", "sigma_normal", c.filter.sigma_normal);
  f("filter", "sigma_albedo", c.filter.sigma_albedo);
  f("filter", "sigma_roughness", c.filter.sigma_roughness);
  f("filter", "sigma_parsimony", c.filter.sigma_parsimony);
  f("filter", "samples", c.filter.samples);
  f("filter", "kmeans_k", c.filter.kmeans_k);
  f("filter", "keep_per_cluster", c.filter.keep_per_cluster);
  f("filter", "l2_norm", c.filter.l2);
  f("sampling", "n_spec", c.sampling.n_spec);
  f("sampling", "n_diff", c.sampling.n_diff);
  f("sampling", "uniform_diffuse", c.sampling.uniform_diffuse);
  f("sampling", "balance_heuristic", c.sampling.balance_heuristic);
  f("sampling", "specular_f0", c.specular_f0);
  f("env", "resolution", c.env_resolution);
  f("env", "use_mips", c.use_mips);
  f("render", "knn", c.knn);
  f("render", "knn_bandwidth_voxels", c.knn_bandwidth_voxels);
  f("weights", "render", c.weights.render);
  f("weights", "commitment_stage_a", c.weights.commitment_stage_a);
  f("weights", "commitment_warmup", c.weights.commitment_warmup);
  f("weights", "commitment_joint", c.weights.commitment_joint);
  f("weights", "smooth_albedo", c.weights.smooth_albedo);
  f("weights", "smooth_roughness", c.weights.smooth_roughness);
  f("weights", "smooth_shape", c.weights.smooth_shape);
  f("weights", "smooth_visibility", c.weights.smooth_visibility);
  f("weights", "parsimony_albedo", c.weights.parsimony_albedo);
  f("weights", "parsimony_roughness", c.weights.parsimony_roughness);
  f("weights", "env_smooth", c.weights.env_smooth);
  f("weights", "warmup_prior_scale", c.weights.warmup_prior_scale);
  f("schedule", "stage_a_epochs", c.schedule.stage_a_epochs);
  f("schedule", "warmup_epochs", c.schedule.warmup_epochs);
  f("schedule", "joint_epochs", c.schedule.joint_epochs);
  f("schedule", "batch_size", c.schedule.batch_size);
  f("learning_rates", "albedo", c.lr.albedo);
  f("learning_rates", "roughness", c.lr.roughness);
  f("learning_rates", "visibility", c.lr.visibility);
  f("learning_rates", "normal", c.lr.normal);
  f("learning_rates", "env", c.lr.env);
  f("learning_rates", "beta1", c.lr.beta1);
  f("learning_rates", "beta2", c.lr.beta2);
  f("learning_rates", "eps", c.lr.eps);
  f("surfels", "spacing_voxels", c.surfels.spacing_voxels);
  f("surfels", "erratic_angle_deg", c.surfels.erratic_angle_deg);
  f("surfels", "erratic_neighbors", c.surfels.erratic_neighbors);
  f("surfels", "visibility_rays_per_bin", c.surfels.visibility_rays_per_bin);
  f("surfels", "median_extraction", c.surfels.median_extraction);
  f("surfels", "max_rays_per_view", c.surfels.max_rays_per_view);
  f("", "seed", c.seed);
}

void require(bool ok, const std::string &what) {
  if (!ok) throw Error(ErrorKind::Config, what);
}

}  // namespace

void Config::validate() const {
  const auto &e = extraction;
  require(e.tau_hit > 0.0 && e.tau_hit < 1.0, "extraction.tau_hit must be in (0, 1)");
  require(e.steps_per_unit > 0.0 && e.min_steps_per_voxel >= 0.0, "extraction step densities must be positive");
  require(e.bisection_tol_voxels > 0.0, "extraction.bisection_tol_voxels must be > 0");
  require(e.normal_radius_voxels > 0.0 && e.normal_samples >= 1 && e.normal_eps >= 0.0,
          "normal extraction settings out of range");
  require(octree_max_depth >= 1 && octree_max_depth <= 16, "octree.max_depth must be in [1, 16]");
  require(octree_leaf_cells >= 1 && (octree_leaf_cells & (octree_leaf_cells - 1)) == 0,
          "octree.leaf_cells must be a power of two");
  require(visibility_offset_voxels >= 0.0, "octree.visibility_offset_voxels must be >= 0");
  require(filter.sigma_x_voxels > 0 && filter.sigma_normal > 0 && filter.sigma_albedo > 0 &&
              filter.sigma_roughness > 0 && filter.sigma_parsimony > 0,
          "filter bandwidths must be > 0");
  require(filter.samples >= 1 && filter.kmeans_k >= 1 && filter.keep_per_cluster >= 1, "filter counts must be >= 1");
  require(sampling.n_spec >= 1 && sampling.n_diff >= 1, "sampling counts must be >= 1");
  require(specular_f0 >= 0.0 && specular_f0 <= 1.0, "sampling.specular_f0 must be in [0, 1]");
  require(env_resolution >= 1 && env_resolution <= 4096 && (env_resolution & (env_resolution - 1)) == 0,
          "env.resolution must be a power of two");
  require(knn >= 1 && knn_bandwidth_voxels > 0.0, "render.knn and bandwidth must be positive");
  const auto &w = weights;
  for (double v : {w.render, w.commitment_stage_a, w.commitment_warmup, w.commitment_joint, w.smooth_albedo,
                   w.smooth_roughness, w.smooth_shape, w.parsimony_albedo, w.parsimony_roughness, w.env_smooth,
                   w.warmup_prior_scale}) {
    require(v >= 0.0 && std::isfinite(v), "loss weights must be finite and >= 0");
  }
  require(schedule.stage_a_epochs >= 0 && schedule.warmup_epochs >= 0 && schedule.joint_epochs >= 0,
          "epoch counts must be >= 0");
  require(schedule.batch_size >= 1, "schedule.batch_size must be >= 1");
  for (double v : {lr.albedo, lr.roughness, lr.visibility, lr.normal, lr.env}) {
    require(v >= 0.0 && std::isfinite(v), "learning rates must be finite and >= 0");
  }
  require(lr.beta1 >= 0.0 && lr.beta1 < 1.0 && lr.beta2 >= 0.0 && lr.beta2 < 1.0 && lr.eps > 0.0,
          "optimizer moments out of range");
  require(surfels.spacing_voxels > 0.0, "surfels.spacing_voxels must be > 0");
  require(surfels.erratic_angle_deg > 0.0 && surfels.erratic_angle_deg <= 180.0,
          "surfels.erratic_angle_deg must be in (0, 180]");
  require(surfels.erratic_neighbors >= 1 && surfels.visibility_rays_per_bin >= 1, "surfel counts must be >= 1");
  require(surfels.max_rays_per_view >= 0, "surfels.max_rays_per_view must be >= 0");
}

Config parse_config(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Config, std::string("config JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  std::map<std::string, std::set<std::string>> known;
  Config cfg;
  for_each_field(cfg, [&](const char *section, const char *key, auto &) { known[section].insert(key); });
  for (const auto &item : j.items()) {
    if (item.value().is_object()) {
      require(known.count(item.key()) && !std::string(item.key()).empty(), "unknown config section '" + item.key() + "'");
      for (const auto &inner : item.value().items()) {
        require(known[item.key()].count(inner.key()), "unknown config key '" + item.key() + "." + inner.key() + "'");
      }
    } else {
      require(known[""].count(item.key()), "unknown config key '" + item.key() + "'");
    }
  }
  for_each_field(cfg, [&](const char *section, const char *key, auto &field) {
    const json *node = std::string(section).empty() ? &j : (j.contains(section) ? &j[section] : nullptr);
    if (!node || !node->contains(key)) return;
    try {
      field = node->at(key).get<std::decay_t<decltype(field)>>();
    } catch (const json::exception &e) {
      throw Error(ErrorKind::Config, std::string("bad value for ") + section + "." + key + ": " + e.what());
    }
  });
  cfg.validate();
  return cfg;
}

Config load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const Config &cfg) {
  json j = json::object();
  for_each_field(cfg, [&](const char *section, const char *key, const auto &field) {
    if (std::string(section).empty()) {
      j[key] = field;
    } else {
      j[section][key] = field;
    }
  });
  return j.dump(2);
}

}  // namespace nref
