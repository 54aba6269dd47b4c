#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nref/camera.hpp"
#include "nref/config.hpp"
#include "nref/envmap.hpp"
#include "nref/gkd.hpp"
#include "nref/image.hpp"
#include "nref/octree.hpp"
#include "nref/renderer.hpp"

namespace nref {

struct TrainingView {
  Camera camera;
  Image image;
  Image mask;  // empty: every pixel counts
};

/// Reads cameras.json plus view_XXX.pfm and optional mask_XXX.pfm from a directory.
std::vector<TrainingView> load_views(const std::filesystem::path &dir);

/// One observed pixel tied to the surfel its ray produced.
struct TrainingRay {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
  Vec3 color = Vec3::Zero();
  std::size_t surfel = 0;
};

struct SurfelInit {
  SurfelCloud cloud;
  std::vector<TrainingRay> rays;
  std::vector<double> normal_magnitude;  // pre-normalization density-gradient magnitude per surfel
};

/// Surface points from masked pixel rays (median or expected extraction), merged on a hash grid,
/// with density-gradient normals oriented toward the observing rays, octree visibility bins and
/// erratic flags. Throws NoSurface when no ray reaches the opacity threshold.
SurfelInit initialize_surfels(const Octree &tree, const std::vector<TrainingView> &views, const Config &cfg);

/// Mean over rays of |n - n0|^2 plus the per-bin mean of (v - v0)^2; erratic surfels add zero
/// but still count in the denominator.
double commitment_loss(const SurfelCloud &cloud, std::span<const std::size_t> batch);
/// Mean over rays of max(0, -n . view)^2 with view pointing from the surface to the camera.
double normal_view_loss(const SurfelCloud &cloud, std::span<const std::size_t> batch,
                        std::span<const Vec3> view_dirs);

enum class Stage { NormalVisibility, Warmup, Joint };
const char *stage_name(Stage stage);

/// Loss weights in effect for a stage.
struct StageWeights {
  double render = 1.0;
  double commitment = 0.5;
  double smooth_albedo = 0.0;
  double smooth_roughness = 0.0;
  double smooth_normal = 0.0;
  double smooth_visibility = 0.0;
  double parsimony_albedo = 0.0;
  double parsimony_roughness = 0.0;
  double env_smooth = 0.0;
  bool train_material = false;  // albedo, roughness, environment
};
StageWeights stage_weights(const LossWeights &w, Stage stage);

struct LossBreakdown {
  double total = 0.0;
  double render = 0.0;      // mean squared error per ray (sum over channels)
  double commitment = 0.0;  // commitment plus normal-view term
  double prior = 0.0;       // weighted prior sum
  double env_smooth = 0.0;
};

/// Unconstrained parameters of the decomposition and their gradients.
struct ParamBlock {
  std::vector<double> albedo;      // logits, 3 per surfel
  std::vector<double> roughness;   // logits, 1 per surfel
  std::vector<Vec3> normal;        // unit normals (updated along the tangent plane)
  std::vector<double> visibility;  // logits, kVisBins per surfel
  std::vector<Vec3> env_log;       // log radiance per level-0 texel

  void zero_like(const ParamBlock &other);
};

struct EpochMetrics {
  int epoch = 0;
  Stage stage = Stage::NormalVisibility;
  LossBreakdown loss;
  double psnr = 0.0;
};

struct Decomposition {
  SurfelCloud cloud;
  EnvCubeMap env;
  std::vector<EpochMetrics> log;
};

/// Multi-stage optimizer state. Exposed so tests can evaluate single batches with frozen samples.
class Decomposer {
 public:
  Decomposer(const Octree &tree, SurfelInit init, const Config &cfg, const EnvCubeMap &initial_env);

  const SurfelCloud &cloud() const { return cloud_; }
  const EnvCubeMap &env() const { return env_; }
  const std::vector<TrainingRay> &rays() const { return rays_; }
  const ParamBlock &params() const { return params_; }
  ParamBlock &mutable_params() { return params_; }
  /// Push params into the surfel cloud and the environment (and rebuild mips).
  void sync();

  /// Rebuild the Gaussian KD-trees and parsimony candidates from current attributes.
  void rebuild_trees(int epoch);

  /// Frozen per-ray light samples so repeated evaluations see identical estimators.
  using SampleCache = std::vector<std::vector<ShadeSample>>;
  SampleCache draw_samples(std::span<const std::size_t> batch, std::uint64_t stream) const;

  /// Loss over a batch of ray indices. `grad` (if non-null) receives gradients with respect to the
  /// parameter block (normals: tangent-plane projection).
  LossBreakdown evaluate(std::span<const std::size_t> batch, const StageWeights &w, const SampleCache &samples,
                         std::uint64_t prior_stream, int epoch, ParamBlock *grad) const;

  /// One optimizer step on a batch.
  LossBreakdown step(std::span<const std::size_t> batch, Stage stage, int epoch, std::uint64_t stream);

  /// Full schedule; `on_epoch` is called after every epoch.
  std::vector<EpochMetrics> run(const std::function<void(const EpochMetrics &)> &on_epoch = {});

 private:
  struct Adam {
    std::vector<double> m, v;
    std::vector<int> t;
  };
  void adam_update(std::vector<double> &x, const std::vector<double> &g, Adam &state, double lr, int width);

  const Octree *tree_;
  Config cfg_;
  SurfelCloud cloud_;
  std::vector<TrainingRay> rays_;
  EnvCubeMap env_;
  ParamBlock params_;
  GaussianKdTree albedo_tree_, roughness_tree_, shape_tree_, parsimony_tree_;
  bool have_parsimony_ = false;
  std::vector<double> parsimony_query_;  // albedo features frozen with the trees
  Adam adam_albedo_, adam_rough_, adam_normal_, adam_vis_, adam_env_;
};

/// Renderer settings implied by a config (sampling, mips, kNN interpolation, extraction, visibility).
RenderConfig render_config(const Config &cfg);

Decomposition run_decomposition(const Octree &tree, const std::vector<TrainingView> &views, const Config &cfg,
                                const std::function<void(const EpochMetrics &)> &on_epoch = {});

/// Columns: epoch,total,R,C,P,PSNR (fixed-precision, byte-stable).
void write_metrics_csv(const std::filesystem::path &path, const std::vector<EpochMetrics> &log);

/// Per-channel least-squares scale s minimising sum |s * a - b|^2.
Vec3 fit_channel_scale(std::span<const Vec3> predicted, std::span<const Vec3> reference);

}  // namespace nref
