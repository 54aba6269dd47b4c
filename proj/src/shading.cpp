#include "nref/shading.hpp"

namespace nref {

double ggx_distribution(double n_dot_h, double alpha) {
  const double a2 = alpha * alpha;
  const double d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

namespace {

struct Microfacet {
  double n_dot_l, n_dot_v, n_dot_h, v_dot_h;
  Vec3 h;
};

bool geometry(const Vec3 &n, const Vec3 &wi, const Vec3 &wo, Microfacet &m) {
  m.n_dot_l = n.dot(wi);
  m.n_dot_v = n.dot(wo);
  if (m.n_dot_l <= 0.0 || m.n_dot_v <= 0.0) return false;
  m.h = (wi + wo).normalized();
  m.n_dot_h = n.dot(m.h);
  m.v_dot_h = std::max(0.0, wo.dot(m.h));
  return true;
}

// Grazing reflectance f90 = min(1, 50 f0): plain Schlick for any dielectric f0 >= 0.02, and a
// zero f0 switches the specular lobe off entirely.
Vec3 schlick(const Vec3 &f0, double v_dot_h) {
  const double m = 1.0 - v_dot_h;
  const double m5 = m * m * m * m * m;
  const Vec3 f90 = (50.0 * f0).cwiseMin(1.0);
  return f0 + (f90 - f0) * m5;
}

}  // namespace

Vec3 eval_brdf(const BrdfParams &p, const Vec3 &n, const Vec3 &wi, const Vec3 &wo) {
  Microfacet m;
  if (!geometry(n, wi, wo, m)) return Vec3::Zero();
  const double a2 = p.roughness * p.roughness;
  const double D = ggx_distribution(m.n_dot_h, p.roughness);
  const double sl = std::sqrt(m.n_dot_l * m.n_dot_l * (1.0 - a2) + a2);
  const double sv = std::sqrt(m.n_dot_v * m.n_dot_v * (1.0 - a2) + a2);
  const double vis = 0.5 / std::max(m.n_dot_v * sl + m.n_dot_l * sv, kMicrofacetClamp);
  return p.albedo * kInvPi + schlick(p.specular_f0, m.v_dot_h) * (D * vis);
}

bool brdf_with_gradients(const BrdfParams &p, const Vec3 &n, const Vec3 &wi, const Vec3 &wo,
                         BrdfGradients &out, bool project_normal) {
  Microfacet m;
  if (!geometry(n, wi, wo, m)) {
    out = BrdfGradients{};
    return false;
  }
  const double alpha = p.roughness;
  const double a2 = alpha * alpha;
  const double d = m.n_dot_h * m.n_dot_h * (a2 - 1.0) + 1.0;
  const double D = a2 / (kPi * d * d);
  const double dD_da2 = (d - 2.0 * a2 * m.n_dot_h * m.n_dot_h) / (kPi * d * d * d);
  const double dD_dnh = -4.0 * a2 * m.n_dot_h * (a2 - 1.0) / (kPi * d * d * d);

  const double sl = std::sqrt(m.n_dot_l * m.n_dot_l * (1.0 - a2) + a2);
  const double sv = std::sqrt(m.n_dot_v * m.n_dot_v * (1.0 - a2) + a2);
  const double den = m.n_dot_v * sl + m.n_dot_l * sv;
  double vis, dvis_da2 = 0.0, dvis_dnl = 0.0, dvis_dnv = 0.0;
  if (den > kMicrofacetClamp) {
    vis = 0.5 / den;
    const double k = -0.5 / (den * den);
    dvis_da2 = k * (m.n_dot_v * (1.0 - m.n_dot_l * m.n_dot_l) / (2.0 * sl) +
                    m.n_dot_l * (1.0 - m.n_dot_v * m.n_dot_v) / (2.0 * sv));
    dvis_dnl = k * (sv + m.n_dot_v * m.n_dot_l * (1.0 - a2) / sl);
    dvis_dnv = k * (sl + m.n_dot_l * m.n_dot_v * (1.0 - a2) / sv);
  } else {
    vis = 0.5 / kMicrofacetClamp;
  }
  const Vec3 F = schlick(p.specular_f0, m.v_dot_h);

  out.value = p.albedo * kInvPi + F * (D * vis);
  out.d_albedo = Vec3::Constant(kInvPi);
  out.d_roughness = F * ((dD_da2 * vis + D * dvis_da2) * 2.0 * alpha);
  const Vec3 dspec_dn = dD_dnh * vis * m.h + D * (dvis_dnl * wi + dvis_dnv * wo);
  out.d_normal = F * dspec_dn.transpose();
  if (project_normal) out.d_normal = out.d_normal * (Mat3::Identity() - n * n.transpose());
  return true;
}

BrdfGradients brdf_gradients(const BrdfParams &params, const Vec3 &n, const Vec3 &wi, const Vec3 &wo) {
  if (n.dot(wi) < kGeometryEps || n.dot(wo) < kGeometryEps) {
    throw Error(ErrorKind::DegenerateGeometry, "directions too close to the shading horizon");
  }
  BrdfGradients g;
  brdf_with_gradients(params, n, wi, wo, g);
  return g;
}

double pdf_ggx_reflect(double alpha, const Vec3 &n, const Vec3 &wi, const Vec3 &wo) {
  const Vec3 hsum = wi + wo;
  const double len = hsum.norm();
  if (len <= 0.0) return 0.0;
  // the half-vector that produced wi is whichever of +-h faces the normal; the reflection
  // Jacobian only sees |wo.h|, so the density covers the full sphere of wi
  const Vec3 h = hsum / len;
  const double n_dot_h = std::abs(n.dot(h));
  const double o_dot_h = std::abs(wo.dot(h));
  if (n_dot_h <= 0.0 || o_dot_h <= 0.0) return 0.0;
  return ggx_distribution(n_dot_h, alpha) * n_dot_h / (4.0 * o_dot_h);
}

double pdf_diffuse(const Vec3 &n, const Vec3 &wi, bool uniform) {
  const double c = n.dot(wi);
  if (c <= 0.0) return 0.0;
  return uniform ? 1.0 / (2.0 * kPi) : c * kInvPi;
}

std::vector<DirectionSample> sample_direction(const BrdfParams &params, const Vec3 &n, const Vec3 &wo,
                                              Rng &rng, const SamplingConfig &cfg) {
  std::vector<DirectionSample> out;
  out.reserve(cfg.n_spec + cfg.n_diff);
  const Frame frame(n);
  const double alpha = params.roughness;
  const double a2 = alpha * alpha;

  const auto finish = [&](DirectionSample s) {
    s.pdf_spec = cfg.n_spec > 0 ? pdf_ggx_reflect(alpha, n, s.wi, wo) : 0.0;
    s.pdf_diff = cfg.n_diff > 0 ? pdf_diffuse(n, s.wi, cfg.uniform_diffuse) : 0.0;
    s.pdf = s.lobe == Lobe::Specular ? s.pdf_spec : s.pdf_diff;
    if (!(s.pdf > 0.0)) return;
    const double denom = cfg.balance_heuristic
                             ? cfg.n_spec * s.pdf_spec + cfg.n_diff * s.pdf_diff
                             : (cfg.n_spec + cfg.n_diff) * s.pdf;
    s.weight = 1.0 / denom;
    out.push_back(s);
  };

  for (int i = 0; i < cfg.n_spec; ++i) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const double tan2 = a2 * u1 / std::max(1.0 - u1, 1e-300);
    const double cos_h = 1.0 / std::sqrt(1.0 + tan2);
    const double sin_h = std::sqrt(std::max(0.0, 1.0 - cos_h * cos_h));
    const double phi = 2.0 * kPi * u2;
    const Vec3 h = frame.to_world(Vec3(sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h));
    const double o_dot_h = wo.dot(h);
    if (o_dot_h == 0.0) continue;
    const Vec3 wi = (2.0 * o_dot_h * h - wo).normalized();
    if (n.dot(wi) <= 0.0) continue;
    DirectionSample s;
    s.wi = wi;
    s.lobe = Lobe::Specular;
    s.lobe_count = cfg.n_spec;
    finish(s);
  }
  for (int i = 0; i < cfg.n_diff; ++i) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const double z = cfg.uniform_diffuse ? u1 : std::sqrt(1.0 - u1);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * kPi * u2;
    DirectionSample s;
    s.wi = frame.to_world(Vec3(r * std::cos(phi), r * std::sin(phi), z));
    if (n.dot(s.wi) <= 0.0) continue;
    s.lobe = Lobe::Diffuse;
    s.lobe_count = cfg.n_diff;
    finish(s);
  }
  return out;
}

}  // namespace nref
