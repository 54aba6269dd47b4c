#include "nref/decompose.hpp"

#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_map>

namespace nref {

std::vector<TrainingView> load_views(const std::filesystem::path &dir) {
  const auto cams = read_cameras(dir / "cameras.json");
  std::vector<TrainingView> views;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu.pfm", i);
    TrainingView v;
    v.camera = cams[i];
    v.image = read_pfm(dir / name);
    std::snprintf(name, sizeof(name), "mask_%03zu.pfm", i);
    if (std::filesystem::exists(dir / name)) v.mask = read_pfm(dir / name);
    if (v.image.width != v.camera.width || v.image.height != v.camera.height ||
        (!v.mask.pixels.empty() && (v.mask.width != v.image.width || v.mask.height != v.image.height))) {
      throw Error(ErrorKind::Format, "view " + std::to_string(i) + " does not match its camera size");
    }
    views.push_back(std::move(v));
  }
  return views;
}

// ---------------------------------------------------------------------------------------------
// Surfel initialization

namespace {

struct CellKey {
  long x, y, z;
  bool operator==(const CellKey &o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
  std::size_t operator()(const CellKey &k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct PixelRay {
  Ray ray;
  Vec3 color;
};

}  // namespace

SurfelInit initialize_surfels(const Octree &tree, const std::vector<TrainingView> &views, const Config &cfg) {
  const DensityGrid &grid = tree.grid();
  const double voxel = grid.voxel_size();
  std::vector<PixelRay> pixels;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const TrainingView &view = views[v];
    std::vector<int> chosen;
    for (int p = 0; p < view.image.width * view.image.height; ++p) {
      if (!view.mask.pixels.empty() && view.mask.pixels[p].x() < 0.5) continue;
      chosen.push_back(p);
    }
    const int cap = cfg.surfels.max_rays_per_view;
    if (cap > 0 && static_cast<int>(chosen.size()) > cap) {
      Rng rng = Rng::stream(cfg.seed, v, 0x7a11);
      for (int i = 0; i < cap; ++i) std::swap(chosen[i], chosen[i + rng.below(chosen.size() - i)]);
      chosen.resize(cap);
      std::sort(chosen.begin(), chosen.end());
    }
    for (int p : chosen) {
      pixels.push_back({view.camera.pixel_ray(p % view.image.width, p / view.image.width), view.image.pixels[p]});
    }
  }

  std::vector<std::optional<SurfaceHit>> hits(pixels.size());
  const long np = static_cast<long>(pixels.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (long i = 0; i < np; ++i) {
    hits[i] = cfg.surfels.median_extraction ? surface_median_fast(tree, pixels[i].ray, cfg.extraction)
                                            : surface_expected_fast(tree, pixels[i].ray, cfg.extraction);
  }

  SurfelInit out;
  std::unordered_map<CellKey, std::size_t, CellHash> cells;
  std::vector<Vec3> pos_sum, view_sum;
  std::vector<int> count;
  const double spacing = cfg.surfels.spacing_voxels * voxel;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (!hits[i]) continue;
    const Vec3 &x = hits[i]->position;
    const CellKey key{static_cast<long>(std::floor(x.x() / spacing)), static_cast<long>(std::floor(x.y() / spacing)),
                      static_cast<long>(std::floor(x.z() / spacing))};
    auto [it, fresh] = cells.try_emplace(key, pos_sum.size());
    if (fresh) {
      pos_sum.push_back(Vec3::Zero());
      view_sum.push_back(Vec3::Zero());
      count.push_back(0);
    }
    pos_sum[it->second] += x;
    view_sum[it->second] -= pixels[i].ray.dir;
    ++count[it->second];
    out.rays.push_back({pixels[i].ray.origin, pixels[i].ray.dir, pixels[i].color, it->second});
  }
  if (pos_sum.empty()) throw Error(ErrorKind::NoSurface, "no training ray reached the opacity threshold");

  const std::size_t n = pos_sum.size();
  out.cloud.surfels.resize(n);
  out.normal_magnitude.assign(n, 0.0);
  std::vector<char> weak(n, 0);
  VisibilityConfig vcfg;
  vcfg.offset_voxels = cfg.visibility_offset_voxels;
  vcfg.march = cfg.extraction;
  const long ns = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < ns; ++i) {
    Surfel &s = out.cloud.surfels[i];
    s.position = pos_sum[i] / count[i];
    const Vec3 view = view_sum[i].normalized();
    Vec3 normal = view;
    try {
      const NormalEstimate est = extract_normal(grid, s.position, cfg.extraction);
      normal = est.normal;
      out.normal_magnitude[i] = est.magnitude;
      weak[i] = est.weak;
    } catch (const Error &) {
      weak[i] = 1;
    }
    if (normal.dot(view) < 0.0) normal = -normal;  // a surface seen by a ray faces it
    s.normal = s.init_normal = normal;
    s.init_visibility = visibility_bins(tree, s.position, normal, cfg.surfels.visibility_rays_per_bin, vcfg);
    s.visibility = s.init_visibility;
    s.albedo = Vec3::Constant(0.5);
    s.roughness = 0.5;
  }

  // erratic: weak gradient, or far from the mean normal of the nearest neighbours
  const SurfelIndex index(out.cloud);
  const double max_angle = cfg.surfels.erratic_angle_deg;
  for (std::size_t i = 0; i < n; ++i) {
    Surfel &s = out.cloud.surfels[i];
    bool erratic = weak[i];
    if (!erratic && n > 1) {
      const auto nn = index.knn(s.position, cfg.surfels.erratic_neighbors + 1);
      Vec3 mean = Vec3::Zero();
      for (const auto &nb : nn) {
        if (nb.index != i) mean += out.cloud.surfels[nb.index].init_normal;
      }
      erratic = mean.norm() > 0.0 && angle_deg(s.init_normal, mean) > max_angle;
    }
    s.erratic = erratic;
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Losses

namespace {
double bin_residual_mean(const Surfel &s) {
  double acc = 0.0;
  for (int b = 0; b < kVisBins; ++b) {
    const double d = s.visibility[b] - s.init_visibility[b];
    acc += d * d;
  }
  return acc / kVisBins;
}
}  // namespace

double commitment_loss(const SurfelCloud &cloud, std::span<const std::size_t> batch) {
  if (batch.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : batch) {
    const Surfel &s = cloud.surfels[i];
    if (s.erratic) continue;
    acc += (s.normal - s.init_normal).squaredNorm() + bin_residual_mean(s);
  }
  return acc / static_cast<double>(batch.size());
}

double normal_view_loss(const SurfelCloud &cloud, std::span<const std::size_t> batch,
                        std::span<const Vec3> view_dirs) {
  if (batch.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double d = std::min(0.0, cloud.surfels[batch[b]].normal.dot(view_dirs[b]));
    acc += d * d;
  }
  return acc / static_cast<double>(batch.size());
}

const char *stage_name(Stage stage) {
  switch (stage) {
    case Stage::NormalVisibility: return "normal-visibility";
    case Stage::Warmup: return "warm-up";
    case Stage::Joint: return "joint";
  }
  return "?";
}

StageWeights stage_weights(const LossWeights &w, Stage stage) {
  StageWeights s;
  s.render = w.render;
  const double vis = w.smooth_visibility ? w.smooth_shape : 0.0;
  switch (stage) {
    case Stage::NormalVisibility:
      s.commitment = w.commitment_stage_a;
      s.smooth_normal = w.smooth_shape;
      s.smooth_visibility = vis;
      break;
    case Stage::Warmup:
    case Stage::Joint: {
      const double k = stage == Stage::Warmup ? w.warmup_prior_scale : 1.0;
      s.commitment = stage == Stage::Warmup ? w.commitment_warmup : w.commitment_joint;
      s.smooth_albedo = k * w.smooth_albedo;
      s.smooth_roughness = k * w.smooth_roughness;
      s.smooth_normal = k * w.smooth_shape;
      s.smooth_visibility = k * vis;
      s.parsimony_albedo = k * w.parsimony_albedo;
      s.parsimony_roughness = k * w.parsimony_roughness;
      s.env_smooth = w.env_smooth;
      s.train_material = true;
      break;
    }
  }
  return s;
}

void ParamBlock::zero_like(const ParamBlock &o) {
  albedo.assign(o.albedo.size(), 0.0);
  roughness.assign(o.roughness.size(), 0.0);
  normal.assign(o.normal.size(), Vec3::Zero());
  visibility.assign(o.visibility.size(), 0.0);
  env_log.assign(o.env_log.size(), Vec3::Zero());
}

// ---------------------------------------------------------------------------------------------
// Decomposer

namespace {

constexpr double kVisLogitClamp = 1e-3;

double roughness_value(double logit_r) { return kRoughnessEps + (1.0 - 2.0 * kRoughnessEps) * sigmoid(logit_r); }
double roughness_logit(double r) {
  const double s = (std::clamp(r, kRoughnessEps, 1.0 - kRoughnessEps) - kRoughnessEps) / (1.0 - 2.0 * kRoughnessEps);
  return logit(std::clamp(s, 1e-6, 1.0 - 1e-6));
}

}  // namespace

Decomposer::Decomposer(const Octree &tree, SurfelInit init, const Config &cfg, const EnvCubeMap &initial_env)
    : tree_(&tree), cfg_(cfg), cloud_(std::move(init.cloud)), rays_(std::move(init.rays)), env_(initial_env) {
  const std::size_t n = cloud_.size();
  params_.albedo.resize(3 * n);
  params_.roughness.resize(n);
  params_.normal.resize(n);
  params_.visibility.resize(std::size_t(kVisBins) * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Surfel &s = cloud_.surfels[i];
    for (int c = 0; c < 3; ++c) params_.albedo[3 * i + c] = logit(std::clamp(s.albedo[c], 1e-4, 1.0 - 1e-4));
    params_.roughness[i] = roughness_logit(s.roughness);
    params_.normal[i] = s.normal;
    for (int b = 0; b < kVisBins; ++b) {
      params_.visibility[i * kVisBins + b] = logit(std::clamp(s.visibility[b], kVisLogitClamp, 1.0 - kVisLogitClamp));
    }
  }
  params_.env_log.resize(env_.texel_count(0));
  for (int t = 0; t < env_.texel_count(0); ++t) params_.env_log[t] = env_.texel(t).cwiseMax(1e-6).array().log();
  sync();
}

void Decomposer::sync() {
  for (std::size_t i = 0; i < cloud_.size(); ++i) {
    Surfel &s = cloud_.surfels[i];
    for (int c = 0; c < 3; ++c) s.albedo[c] = sigmoid(params_.albedo[3 * i + c]);
    s.roughness = roughness_value(params_.roughness[i]);
    s.normal = params_.normal[i].normalized();
    params_.normal[i] = s.normal;
    for (int b = 0; b < kVisBins; ++b) s.visibility[b] = sigmoid(params_.visibility[i * kVisBins + b]);
  }
  for (int t = 0; t < env_.texel_count(0); ++t) env_.texel(t) = params_.env_log[t].array().exp();
  env_.build_mips();
}

void Decomposer::rebuild_trees(int epoch) {
  const std::size_t n = cloud_.size();
  if (n < 2) return;
  const double sx = cfg_.filter.sigma_x_voxels * tree_->grid().voxel_size();
  std::vector<double> fa, fr, fs;
  fa.reserve(6 * n);
  fr.reserve(4 * n);
  fs.reserve(6 * n);
  for (const Surfel &s : cloud_.surfels) {
    for (int a = 0; a < 3; ++a) {
      fa.push_back(s.position[a] / sx);
      fr.push_back(s.position[a] / sx);
      fs.push_back(s.position[a] / sx);
    }
    for (int a = 0; a < 3; ++a) fa.push_back(s.albedo[a] / cfg_.filter.sigma_albedo);
    fr.push_back(s.roughness / cfg_.filter.sigma_roughness);
    for (int a = 0; a < 3; ++a) fs.push_back(s.normal[a] / cfg_.filter.sigma_normal);
  }
  albedo_tree_ = GaussianKdTree(6, std::move(fa), {}, epoch);
  roughness_tree_ = GaussianKdTree(4, std::move(fr), {}, epoch);
  shape_tree_ = GaussianKdTree(6, std::move(fs), {}, epoch);

  std::vector<Vec3> albedos;
  for (const Surfel &s : cloud_.surfels) albedos.push_back(s.albedo);
  Rng rng = Rng::stream(cfg_.seed, static_cast<std::uint64_t>(epoch), 0x9a75);
  const int k = std::min<int>(cfg_.filter.kmeans_k, static_cast<int>(n));
  const auto cand = parsimony_candidates(albedos, k, cfg_.filter.keep_per_cluster, rng);
  have_parsimony_ = cand.size() >= 2;
  if (have_parsimony_) {
    std::vector<double> fp;
    for (std::size_t c : cand) {
      for (int a = 0; a < 3; ++a) fp.push_back(albedos[c][a] / cfg_.filter.sigma_parsimony);
    }
    parsimony_tree_ = GaussianKdTree(3, std::move(fp), cand, epoch);
    parsimony_query_.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) parsimony_query_[3 * i + a] = albedos[i][a] / cfg_.filter.sigma_parsimony;
    }
  }
}

Decomposer::SampleCache Decomposer::draw_samples(std::span<const std::size_t> batch, std::uint64_t stream) const {
  SampleCache cache(batch.size());
  const RenderConfig rc = render_config(cfg_);
  const long nb = static_cast<long>(batch.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long b = 0; b < nb; ++b) {
    const TrainingRay &ray = rays_[batch[b]];
    const Surfel &s = cloud_.surfels[ray.surfel];
    BrdfParams p;
    p.albedo = s.albedo;
    p.roughness = s.roughness;
    p.specular_f0 = Vec3::Constant(cfg_.specular_f0);
    Rng rng = Rng::stream(cfg_.seed, stream, batch[b]);
    cache[b] = draw_shade_samples(p, s.normal, -ray.dir, env_, rc, rng);
  }
  return cache;
}

LossBreakdown Decomposer::evaluate(std::span<const std::size_t> batch, const StageWeights &w,
                                   const SampleCache &samples, std::uint64_t prior_stream, int epoch,
                                   ParamBlock *grad) const {
  LossBreakdown out;
  const std::size_t nb = batch.size();
  if (nb == 0) return out;
  const std::size_t n = cloud_.size();
  const double inv_b = 1.0 / static_cast<double>(nb);
  const bool want_env = grad && w.train_material;

  // value-space gradients
  std::vector<double> g_albedo(3 * n, 0.0), g_rough(n, 0.0), g_normal(3 * n, 0.0),
      g_vis(std::size_t(kVisBins) * n, 0.0);

  // rendering term, evaluated in fixed chunks so the reduction order never depends on threads
  constexpr std::size_t kChunk = 64;
  const std::size_t n_chunks = (nb + kChunk - 1) / kChunk;
  std::vector<double> ray_loss(nb, 0.0);
  std::vector<ShadeAdjoint> adjoints(grad ? nb : 0);
  std::vector<EnvGradient> env_chunks(want_env ? n_chunks : 0);
  const Vec3 f0 = Vec3::Constant(cfg_.specular_f0);
  const long nc = static_cast<long>(n_chunks);
#pragma omp parallel for schedule(dynamic, 1)
  for (long c = 0; c < nc; ++c) {
    ShadeTape tape;
    EnvGradient *eg = nullptr;
    if (want_env) {
      env_chunks[c] = make_env_gradient(env_);
      eg = &env_chunks[c];
    }
    const std::size_t end = std::min(nb, (c + 1) * kChunk);
    for (std::size_t b = c * kChunk; b < end; ++b) {
      const TrainingRay &ray = rays_[batch[b]];
      const Surfel &s = cloud_.surfels[ray.surfel];
      BrdfParams p;
      p.albedo = s.albedo;
      p.roughness = s.roughness;
      p.specular_f0 = f0;
      const Vec3 L = shade_forward(samples[b], p, s.normal, -ray.dir, env_, s.visibility, tape);
      const Vec3 r = L - ray.color;
      ray_loss[b] = r.squaredNorm();
      if (grad) shade_backward(tape, (2.0 * w.render * inv_b) * r, adjoints[b], eg);
    }
  }
  for (double l : ray_loss) out.render += l;
  out.render *= inv_b;

  if (grad) {
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t s = rays_[batch[b]].surfel;
      const ShadeAdjoint &a = adjoints[b];
      for (int c = 0; c < 3; ++c) {
        g_albedo[3 * s + c] += a.d_albedo[c];
        g_normal[3 * s + c] += a.d_normal[c];
      }
      g_rough[s] += a.d_roughness;
      for (int k = 0; k < kVisBins; ++k) g_vis[s * kVisBins + k] += a.d_visibility[k];
    }
  }

  // commitment and normal-view terms
  double commit = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const TrainingRay &ray = rays_[batch[b]];
    const std::size_t i = ray.surfel;
    const Surfel &s = cloud_.surfels[i];
    if (!s.erratic) {
      commit += (s.normal - s.init_normal).squaredNorm() + bin_residual_mean(s);
      if (grad) {
        const Vec3 gn = (2.0 * w.commitment * inv_b) * (s.normal - s.init_normal);
        for (int c = 0; c < 3; ++c) g_normal[3 * i + c] += gn[c];
        for (int k = 0; k < kVisBins; ++k) {
          g_vis[i * kVisBins + k] += 2.0 * w.commitment * inv_b * (s.visibility[k] - s.init_visibility[k]) / kVisBins;
        }
      }
    }
    const Vec3 view = -ray.dir;
    const double d = s.normal.dot(view);
    if (d < 0.0) {
      commit += d * d;
      if (grad) {
        for (int c = 0; c < 3; ++c) g_normal[3 * i + c] += 2.0 * w.commitment * inv_b * d * view[c];
      }
    }
  }
  out.commitment = commit * inv_b;

  // bilateral priors over the distinct surfels of the batch
  if (n >= 2) {
    std::set<std::size_t> uniq_set;
    for (std::size_t b : batch) uniq_set.insert(rays_[b].surfel);
    const std::vector<std::size_t> uniq(uniq_set.begin(), uniq_set.end());
    std::vector<double> f_albedo(3 * n), f_rough(n), f_normal(3 * n), f_vis(std::size_t(kVisBins) * n);
    for (std::size_t i = 0; i < n; ++i) {
      const Surfel &s = cloud_.surfels[i];
      for (int c = 0; c < 3; ++c) {
        f_albedo[3 * i + c] = s.albedo[c];
        f_normal[3 * i + c] = s.normal[c];
      }
      f_rough[i] = s.roughness;
      std::copy(s.visibility.begin(), s.visibility.end(), f_vis.begin() + i * kVisBins);
    }
    PriorOptions opt;
    opt.samples = cfg_.filter.samples;
    opt.norm = cfg_.filter.l2 ? PriorNorm::L2 : PriorNorm::L1;
    opt.current_epoch = epoch;
    const auto run_prior = [&](double weight, const GaussianKdTree &tree, std::span<const double> field, int dim,
                               std::vector<double> &g, std::uint64_t salt, std::span<const double> queries) {
      if (weight <= 0.0) return;
      Rng rng = Rng::stream(cfg_.seed, prior_stream, salt);
      std::span<double> gs;
      if (grad) gs = g;
      out.prior += weight * prior_loss(tree, FieldView{field, dim}, uniq, opt, rng, gs, weight, queries);
    };
    run_prior(w.smooth_albedo, albedo_tree_, f_albedo, 3, g_albedo, 1, {});
    run_prior(w.smooth_roughness, roughness_tree_, f_rough, 1, g_rough, 2, {});
    run_prior(w.smooth_normal, shape_tree_, f_normal, 3, g_normal, 3, {});
    run_prior(w.smooth_visibility, shape_tree_, f_vis, kVisBins, g_vis, 4, {});
    if (have_parsimony_ && (w.parsimony_albedo > 0.0 || w.parsimony_roughness > 0.0)) {
      std::vector<double> q;
      q.reserve(3 * uniq.size());
      for (std::size_t i : uniq) {
        for (int c = 0; c < 3; ++c) q.push_back(parsimony_query_[3 * i + c]);
      }
      run_prior(w.parsimony_albedo, parsimony_tree_, f_albedo, 3, g_albedo, 5, q);
      run_prior(w.parsimony_roughness, parsimony_tree_, f_rough, 1, g_rough, 6, q);
    }
  }

  std::vector<Vec3> g_env0;
  if (w.train_material && w.env_smooth > 0.0) {
    out.env_smooth = env_smooth_loss(env_);
    if (grad) {
      g_env0 = env_smooth_gradient(env_);
      for (auto &g : g_env0) g *= w.env_smooth;
    }
  }

  out.total = w.render * out.render + w.commitment * out.commitment + out.prior + w.env_smooth * out.env_smooth;
  if (!std::isfinite(out.total)) {
    char msg[256];
    std::snprintf(msg, sizeof(msg), "epoch %d: R=%g C=%g P=%g E=%g", epoch, out.render, out.commitment, out.prior,
                  out.env_smooth);
    throw Error(ErrorKind::NonFiniteLoss, msg);
  }
  if (!grad) return out;

  grad->zero_like(params_);
  for (std::size_t i = 0; i < n; ++i) {
    const Surfel &s = cloud_.surfels[i];
    for (int c = 0; c < 3; ++c) grad->albedo[3 * i + c] = g_albedo[3 * i + c] * s.albedo[c] * (1.0 - s.albedo[c]);
    const double sr = sigmoid(params_.roughness[i]);
    grad->roughness[i] = g_rough[i] * (1.0 - 2.0 * kRoughnessEps) * sr * (1.0 - sr);
    const Vec3 gn(g_normal[3 * i], g_normal[3 * i + 1], g_normal[3 * i + 2]);
    grad->normal[i] = gn - s.normal * s.normal.dot(gn);
    for (int k = 0; k < kVisBins; ++k) {
      const double v = s.visibility[k];
      grad->visibility[i * kVisBins + k] = g_vis[i * kVisBins + k] * v * (1.0 - v);
    }
  }
  if (want_env) {
    EnvGradient total = make_env_gradient(env_);
    for (const auto &chunk : env_chunks) {
      for (std::size_t l = 0; l < total.size(); ++l) {
        for (std::size_t t = 0; t < total[l].size(); ++t) total[l][t] += chunk[l][t];
      }
    }
    std::vector<Vec3> g0 = env_.fold_gradients(std::move(total));
    if (!g_env0.empty()) {
      for (std::size_t t = 0; t < g0.size(); ++t) g0[t] += g_env0[t];
    }
    for (std::size_t t = 0; t < g0.size(); ++t) grad->env_log[t] = g0[t].cwiseProduct(env_.texel(static_cast<int>(t)));
  }
  return out;
}

void Decomposer::adam_update(std::vector<double> &x, const std::vector<double> &g, Adam &st, double lr, int width) {
  if (st.m.size() != x.size()) {
    st.m.assign(x.size(), 0.0);
    st.v.assign(x.size(), 0.0);
    st.t.assign(x.size() / width, 0);
  }
  const double b1 = cfg_.lr.beta1, b2 = cfg_.lr.beta2, eps = cfg_.lr.eps;
  const std::size_t rows = x.size() / width;
  for (std::size_t r = 0; r < rows; ++r) {
    bool touched = false;
    for (int k = 0; k < width && !touched; ++k) touched = g[r * width + k] != 0.0;
    if (!touched) continue;  // lazy update: rows outside the batch keep their moments
    const int t = ++st.t[r];
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (int k = 0; k < width; ++k) {
      const std::size_t i = r * width + k;
      st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
      st.v[i] = b2 * st.v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
    }
  }
}

namespace {
std::vector<double> flatten(const std::vector<Vec3> &v) {
  std::vector<double> out(3 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (int c = 0; c < 3; ++c) out[3 * i + c] = v[i][c];
  }
  return out;
}
void unflatten(const std::vector<double> &f, std::vector<Vec3> &v) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = Vec3(f[3 * i], f[3 * i + 1], f[3 * i + 2]);
}
}  // namespace

LossBreakdown Decomposer::step(std::span<const std::size_t> batch, Stage stage, int epoch, std::uint64_t stream) {
  const StageWeights w = stage_weights(cfg_.weights, stage);
  const SampleCache samples = draw_samples(batch, stream);
  ParamBlock g;
  const LossBreakdown loss = evaluate(batch, w, samples, stream, epoch, &g);

  std::vector<double> normals = flatten(params_.normal);
  adam_update(normals, flatten(g.normal), adam_normal_, cfg_.lr.normal, 3);
  unflatten(normals, params_.normal);
  adam_update(params_.visibility, g.visibility, adam_vis_, cfg_.lr.visibility, kVisBins);
  if (w.train_material) {
    adam_update(params_.albedo, g.albedo, adam_albedo_, cfg_.lr.albedo, 3);
    adam_update(params_.roughness, g.roughness, adam_rough_, cfg_.lr.roughness, 1);
    std::vector<double> env = flatten(params_.env_log);
    adam_update(env, flatten(g.env_log), adam_env_, cfg_.lr.env, static_cast<int>(env.size()));
    unflatten(env, params_.env_log);
  }
  sync();
  return loss;
}

std::vector<EpochMetrics> Decomposer::run(const std::function<void(const EpochMetrics &)> &on_epoch) {
  std::vector<EpochMetrics> log;
  const Schedule &sc = cfg_.schedule;
  const int total = sc.stage_a_epochs + sc.warmup_epochs + sc.joint_epochs;
  std::vector<std::size_t> order(rays_.size());
  for (int e = 0; e < total; ++e) {
    const Stage stage = e < sc.stage_a_epochs                     ? Stage::NormalVisibility
                        : e < sc.stage_a_epochs + sc.warmup_epochs ? Stage::Warmup
                                                                   : Stage::Joint;
    rebuild_trees(e);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::stream(cfg_.seed, static_cast<std::uint64_t>(e), 0x5407);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochMetrics m;
    m.epoch = e;
    m.stage = stage;
    const std::size_t bs = static_cast<std::size_t>(sc.batch_size);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const std::uint64_t stream = (static_cast<std::uint64_t>(e) << 32) | batch_index;
      const LossBreakdown l = step(batch, stage, e, stream);
      const double frac = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      m.loss.total += frac * l.total;
      m.loss.render += frac * l.render;
      m.loss.commitment += frac * l.commitment;
      m.loss.prior += frac * l.prior;
      m.loss.env_smooth += frac * l.env_smooth;
    }
    const double mse = m.loss.render / 3.0;
    m.psnr = mse > 0.0 ? -10.0 * std::log10(mse) : 99.0;
    log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return log;
}

RenderConfig render_config(const Config &cfg) {
  RenderConfig rc;
  rc.sampling = cfg.sampling;
  rc.seed = cfg.seed;
  rc.use_mips = cfg.use_mips;
  rc.specular_f0 = cfg.specular_f0;
  rc.knn = cfg.knn;
  rc.knn_bandwidth_voxels = cfg.knn_bandwidth_voxels;
  rc.extraction = cfg.extraction;
  rc.vis.offset_voxels = cfg.visibility_offset_voxels;
  rc.vis.march = cfg.extraction;
  return rc;
}

Decomposition run_decomposition(const Octree &tree, const std::vector<TrainingView> &views, const Config &cfg,
                                const std::function<void(const EpochMetrics &)> &on_epoch) {
  if (views.size() < 2) throw Error(ErrorKind::Config, "decomposition needs at least 2 views");
  SurfelInit init = initialize_surfels(tree, views, cfg);
  Vec3 mean = Vec3::Zero();
  for (const auto &r : init.rays) mean += r.color;
  mean /= static_cast<double>(init.rays.size());
  // with albedo fixed at 0.5 a constant light of twice the mean pixel value explains the average
  const EnvCubeMap env(cfg.env_resolution, (2.0 * mean).cwiseMax(1e-3));
  Decomposer d(tree, std::move(init), cfg, env);
  Decomposition out;
  out.log = d.run(on_epoch);
  out.cloud = d.cloud();
  out.env = d.env();
  return out;
}

void write_metrics_csv(const std::filesystem::path &path, const std::vector<EpochMetrics> &log) {
  FILE *f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::Format, "cannot open for writing: " + path.string());
  std::fprintf(f, "epoch,total,R,C,P,PSNR\n");
  for (const auto &m : log) {
    std::fprintf(f, "%d,%.9e,%.9e,%.9e,%.9e,%.6f\n", m.epoch, m.loss.total, m.loss.render, m.loss.commitment,
                 m.loss.prior, m.psnr);
  }
  std::fclose(f);
}

Vec3 fit_channel_scale(std::span<const Vec3> predicted, std::span<const Vec3> reference) {
  Vec3 num = Vec3::Zero(), den = Vec3::Zero();
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    num += predicted[i].cwiseProduct(reference[i]);
    den += predicted[i].cwiseProduct(predicted[i]);
  }
  Vec3 s;
  for (int c = 0; c < 3; ++c) s[c] = den[c] > 0.0 ? num[c] / den[c] : 1.0;
  return s;
}

}  // namespace nref
