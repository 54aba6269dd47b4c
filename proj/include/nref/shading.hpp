#pragma once

#include <vector>

#include "nref/common.hpp"

namespace nref {

/// Lambert diffuse plus GGX microfacet specular (height-correlated Smith masking, Schlick Fresnel).
/// The GGX alpha parameter is the roughness itself.
struct BrdfParams {
  Vec3 albedo = Vec3::Constant(0.5);
  double roughness = 0.5;
  Vec3 specular_f0 = Vec3::Constant(0.04);
};

inline constexpr double kMicrofacetClamp = 1e-4;
inline constexpr double kGeometryEps = 1e-4;

/// GGX normal distribution D(n.h) for alpha = roughness.
double ggx_distribution(double n_dot_h, double alpha);

/// Per-steradian reflectance; zero when either direction is below the shading horizon.
Vec3 eval_brdf(const BrdfParams &params, const Vec3 &n, const Vec3 &wi, const Vec3 &wo);

struct BrdfGradients {
  Vec3 value = Vec3::Zero();
  Vec3 d_albedo = Vec3::Zero();     // d f_c / d albedo_c (no cross-channel terms)
  Vec3 d_roughness = Vec3::Zero();  // d f_c / d roughness
  Mat3 d_normal = Mat3::Zero();     // row c: d f_c / d n, projected onto the tangent plane
};

/// Value and analytic derivatives of eval_brdf. `d_normal_raw` keeps the unprojected
/// derivative when the caller needs to chain through its own normal parameterization.
/// Returns false (all zero) below the horizon.
bool brdf_with_gradients(const BrdfParams &params, const Vec3 &n, const Vec3 &wi, const Vec3 &wo,
                         BrdfGradients &out, bool project_normal = true);

/// Throwing front end: DegenerateGeometry when n.wi or n.wo is below kGeometryEps.
BrdfGradients brdf_gradients(const BrdfParams &params, const Vec3 &n, const Vec3 &wi, const Vec3 &wo);

enum class Lobe { Diffuse, Specular };

struct DirectionSample {
  Vec3 wi = Vec3::UnitZ();
  double pdf = 0.0;        // pdf of the lobe that generated the sample (per steradian)
  Lobe lobe = Lobe::Diffuse;
  double pdf_spec = 0.0;   // both lobe densities at wi
  double pdf_diff = 0.0;
  double weight = 0.0;     // estimator weight: contribution = integrand(wi) * weight
  int lobe_count = 0;      // samples drawn from this sample's lobe
};

struct SamplingConfig {
  int n_spec = 128;
  int n_diff = 64;
  bool uniform_diffuse = false;  // uniform hemisphere instead of cosine-weighted
  bool balance_heuristic = true; // false: pool both sets with their own pdfs
};

double pdf_ggx_reflect(double alpha, const Vec3 &n, const Vec3 &wi, const Vec3 &wo);
double pdf_diffuse(const Vec3 &n, const Vec3 &wi, bool uniform);

/// n_spec GGX reflection samples plus n_diff diffuse-lobe samples. Samples falling below the
/// horizon carry zero integrand and are dropped; weights keep the estimator unbiased.
std::vector<DirectionSample> sample_direction(const BrdfParams &params, const Vec3 &n, const Vec3 &wo,
                                              Rng &rng, const SamplingConfig &cfg = {});

}  // namespace nref
