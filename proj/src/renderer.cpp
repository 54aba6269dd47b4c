#include "nref/renderer.hpp"

namespace nref {

double VisibilityLookup::operator()(const Vec3 &wi, int bin) const {
  switch (source) {
    case VisibilitySource::None: return 1.0;
    case VisibilitySource::SurfelBins: return bin >= 0 ? (*bins)[bin] : 0.0;
    case VisibilitySource::Octree: return visibility(*tree, position, wi);
  }
  return 1.0;
}

std::vector<ShadeSample> draw_shade_samples(const BrdfParams &brdf, const Vec3 &n, const Vec3 &wo,
                                            const EnvCubeMap &env, const RenderConfig &cfg, Rng &rng) {
  const auto dirs = sample_direction(brdf, n, wo, rng, cfg.sampling);
  const Frame frame(n);
  std::vector<ShadeSample> out;
  out.reserve(dirs.size());
  for (const auto &d : dirs) {
    ShadeSample s;
    s.wi = d.wi;
    s.weight = d.weight;
    s.pdf = d.pdf;
    s.lobe_count = d.lobe_count;
    s.bin = visibility_bin(frame, d.wi);
    if (cfg.use_mips) {
      const FaceCoord fc = direction_to_face(d.wi);
      s.level = mip_level(d.lobe_count, d.pdf, env.resolution(), fc.u, fc.v, env.levels() - 1);
    }
    out.push_back(s);
  }
  return out;
}

Vec3 shade_samples(std::span<const ShadeSample> samples, const BrdfParams &brdf, const Vec3 &n, const Vec3 &wo,
                   const EnvCubeMap &env, const VisibilityLookup &vis) {
  Vec3 acc = Vec3::Zero();
  for (const auto &s : samples) {
    const double c = n.dot(s.wi);
    if (c <= 0.0) continue;
    const Vec3 f = eval_brdf(brdf, n, s.wi, wo);
    if (f.isZero(0.0)) continue;
    const double v = vis(s.wi, s.bin);
    if (v == 0.0) continue;
    acc += f.cwiseProduct(env.sample(s.wi, s.level)) * (v * c * s.weight);
  }
  return acc;
}

namespace {
BrdfParams brdf_of(const Surfel &s, double f0) {
  BrdfParams p;
  p.albedo = s.albedo;
  p.roughness = s.roughness;
  p.specular_f0 = Vec3::Constant(f0);
  return p;
}
}  // namespace

Vec3 shade_point(const Surfel &surfel, const Vec3 &wv, const EnvCubeMap &env, const VisibilityLookup &vis,
                 const RenderConfig &cfg, Rng &rng, std::vector<ShadeSample> *record) {
  const BrdfParams p = brdf_of(surfel, cfg.specular_f0);
  auto samples = draw_shade_samples(p, surfel.normal, wv, env, cfg, rng);
  const Vec3 out = shade_samples(samples, p, surfel.normal, wv, env, vis);
  if (record) *record = std::move(samples);
  return out;
}

EnvGradient make_env_gradient(const EnvCubeMap &env) {
  EnvGradient g(env.levels());
  for (int l = 0; l < env.levels(); ++l) g[l].assign(env.texel_count(l), Vec3::Zero());
  return g;
}

Vec3 shade_forward(std::span<const ShadeSample> samples, const BrdfParams &brdf, const Vec3 &n, const Vec3 &wo,
                   const EnvCubeMap &env, const VisibilityBins &bins, ShadeTape &tape) {
  tape.entries.clear();
  Vec3 acc = Vec3::Zero();
  BrdfGradients g;
  for (const auto &s : samples) {
    if (s.bin < 0) continue;
    const double c = n.dot(s.wi);
    if (c <= 0.0) continue;
    if (!brdf_with_gradients(brdf, n, s.wi, wo, g, false)) continue;
    ShadeTape::Entry e;
    e.f = g.value;
    e.df_rough = g.d_roughness;
    e.df_normal = g.d_normal;
    e.radiance = env.sample(s.wi, s.level, &e.footprint);
    e.visibility = bins[s.bin];
    e.cos = c;
    e.weight = s.weight;
    e.wi = s.wi;
    e.bin = s.bin;
    acc += e.f.cwiseProduct(e.radiance) * (e.visibility * c * s.weight);
    tape.entries.push_back(e);
  }
  return acc;
}

void shade_backward(const ShadeTape &tape, const Vec3 &upstream, ShadeAdjoint &out, EnvGradient *env_grad) {
  for (const auto &e : tape.entries) {
    const Vec3 gl = upstream.cwiseProduct(e.radiance);  // d/d f_c of upstream . L per unit (v cos w)
    const double vcw = e.visibility * e.cos * e.weight;
    out.d_albedo += gl * (kInvPi * vcw);
    out.d_roughness += gl.dot(e.df_rough) * vcw;
    // L_c = f_c(n) * (n . wi) * rad_c * v * w
    out.d_normal += (e.df_normal.transpose() * gl) * vcw + e.wi * (gl.dot(e.f) * e.visibility * e.weight);
    out.d_visibility[e.bin] += gl.dot(e.f) * e.cos * e.weight;
    if (env_grad) {
      const Vec3 ge = upstream.cwiseProduct(e.f) * vcw;
      for (int t = 0; t < e.footprint.count; ++t) {
        const auto &tap = e.footprint.taps[t];
        (*env_grad)[tap.level][tap.texel] += ge * tap.weight;
      }
    }
  }
}

Surfel interpolate_surfel(const SurfelCloud &cloud, const SurfelIndex &index, const Vec3 &x, int k, double bandwidth) {
  const auto nn = index.knn(x, static_cast<std::size_t>(k));
  Surfel s;
  s.position = x;
  s.albedo.setZero();
  s.roughness = 0.0;
  s.normal.setZero();
  s.visibility.fill(0.0);
  double wsum = 0.0;
  const double inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth);
  for (const auto &nb : nn) {
    const double w = std::exp(-nb.distance * nb.distance * inv2b2);
    const Surfel &o = cloud.surfels[nb.index];
    s.albedo += w * o.albedo;
    s.roughness += w * o.roughness;
    s.normal += w * o.normal;
    for (int b = 0; b < kVisBins; ++b) s.visibility[b] += w * o.visibility[b];
    wsum += w;
  }
  if (!(wsum > 0.0) || s.normal.norm() < 1e-12) {
    // every neighbour is many bandwidths away: fall back to the nearest surfel
    Surfel o = cloud.surfels[nn.front().index];
    o.position = x;
    return o;
  }
  s.albedo /= wsum;
  s.roughness /= wsum;
  for (auto &v : s.visibility) v /= wsum;
  s.normal.normalize();
  s.init_normal = s.normal;
  s.init_visibility = s.visibility;
  return s;
}

RenderedImage render_image(const Camera &camera, const Octree &tree, const SurfelCloud &cloud,
                           const SurfelIndex &index, const EnvCubeMap &env, const RenderConfig &cfg) {
  RenderedImage out;
  out.color = Image(camera.width, camera.height);
  const std::size_t n = std::size_t(camera.width) * camera.height;
  out.alpha.assign(n, 0.0);
  std::vector<char> hit(n, 0);
  const double bandwidth = cfg.knn_bandwidth_voxels * tree.grid().voxel_size();
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (long p = 0; p < count; ++p) {
    if (cloud.empty()) continue;
    const int px = static_cast<int>(p % camera.width), py = static_cast<int>(p / camera.width);
    const Ray ray = camera.pixel_ray(px, py);
    const auto h = surface_median_fast(tree, ray, cfg.extraction);
    if (!h) continue;
    hit[p] = 1;
    out.alpha[p] = std::clamp(2.0 * h->opacity, 0.0, 1.0);
    const Surfel s = interpolate_surfel(cloud, index, h->position, cfg.knn, bandwidth);
    VisibilityLookup vis;
    vis.source = cfg.visibility;
    vis.bins = &s.visibility;
    vis.tree = &tree;
    vis.position = h->position;
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(p), 0x5eed);
    out.color.pixels[p] = shade_point(s, -ray.dir, env, vis, cfg, rng);
  }
  out.hit.assign(hit.begin(), hit.end());
  return out;
}

RenderedImage relight(const Camera &camera, const Octree &tree, const SurfelCloud &cloud, const SurfelIndex &index,
                      const EnvCubeMap &new_env, const RenderConfig &cfg) {
  return render_image(camera, tree, cloud, index, new_env, cfg);
}

RenderedImage edit_material(const Camera &camera, const Octree &tree, const SurfelCloud &cloud,
                            const SurfelIndex &index, const EnvCubeMap &env, const RenderConfig &cfg,
                            const std::function<void(Surfel &)> &edit) {
  SurfelCloud edited = cloud;
  for (auto &s : edited.surfels) {
    edit(s);
    s.normalize();
  }
  return render_image(camera, tree, edited, index, env, cfg);
}

}  // namespace nref
