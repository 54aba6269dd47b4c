#pragma once

#include <optional>
#include <vector>

#include "nref/field.hpp"

namespace nref {

/// Accumulated opacity T(t) = 1 - exp(-integral of sigma) sampled at uniform segment boundaries.
/// sigma_mid[k] is the midpoint density of segment k, which makes T exact between samples.
struct TransmittanceProfile {
  std::vector<double> ts;
  std::vector<double> T;
  std::vector<double> sigma_mid;
  std::vector<double> depth;  // optical depth at each entry of ts

  double t_near() const { return ts.front(); }
  double t_far() const { return ts.back(); }
  double total() const { return T.back(); }
  double step() const { return ts.size() > 1 ? ts[1] - ts[0] : 0.0; }

  /// Piecewise-exponential interpolant consistent with the midpoint rule.
  double at(double t) const;
};

struct ExtractionConfig {
  double tau_hit = 0.5;            // minimum total opacity for a ray to carry a surface
  double steps_per_unit = 256.0;   // quadrature density along rays (scene units)
  double min_steps_per_voxel = 4;  // lower bound so thin shells stay resolved on fine grids
  double bisection_tol_voxels = 1.0 / 16.0;
  double normal_radius_voxels = 1.5;
  int normal_samples = 32;
  double normal_eps = 1e-5;
};

/// Segment count for a ray of the given length through a grid of the given voxel size.
int quadrature_steps(double length, double voxel_size, const ExtractionConfig &cfg = {});

template <DensityField F>
TransmittanceProfile transmittance_profile(const F &field, const Ray &ray, int n_steps) {
  if (n_steps < 2) n_steps = 2;
  TransmittanceProfile p;
  p.ts.resize(n_steps + 1);
  p.T.resize(n_steps + 1);
  p.sigma_mid.resize(n_steps);
  p.depth.resize(n_steps + 1);
  const double dt = (ray.t_far - ray.t_near) / n_steps;
  double depth = 0.0;
  p.ts[0] = ray.t_near;
  p.T[0] = 0.0;
  p.depth[0] = 0.0;
  for (int k = 0; k < n_steps; ++k) {
    const double s = field.density(ray.at(ray.t_near + (k + 0.5) * dt));
    p.sigma_mid[k] = s;
    depth += s * dt;
    p.ts[k + 1] = ray.t_near + (k + 1) * dt;
    p.depth[k + 1] = depth;
    p.T[k + 1] = -std::expm1(-depth);
  }
  return p;
}

/// Grid overload: the ray is clipped to the grid box first (infinite bounds allowed).
/// A ray missing the box yields an all-zero two-sample profile.
TransmittanceProfile transmittance_profile(const DensityGrid &grid, const Ray &ray, int n_steps);

/// Ray restricted to the grid's box; nullopt when it misses.
std::optional<Ray> clip_to_grid(const DensityGrid &grid, const Ray &ray);

struct SurfaceHit {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  double opacity = 0.0;  // T(t_f)
};

/// Expected termination: transmittance-derivative-weighted mean of r(t), normalized by T(t_f).
SurfaceHit expected_termination(const TransmittanceProfile &profile, const Ray &ray, double tau_hit);

/// Smallest s with T(s) = (T(t_n) + T(t_f)) / 2, by bisection to tolerance tol.
SurfaceHit median_termination(const TransmittanceProfile &profile, const Ray &ray, double tol,
                              double tau_hit);

template <DensityField F>
Vec3 extract_surface_expected(const F &field, const Ray &ray, int n_steps, double tau_hit = 0.5) {
  return expected_termination(transmittance_profile(field, ray, n_steps), ray, tau_hit).position;
}

template <DensityField F>
Vec3 extract_surface_median(const F &field, const Ray &ray, int n_steps, double tol,
                            double tau_hit = 0.5) {
  return median_termination(transmittance_profile(field, ray, n_steps), ray, tol, tau_hit).position;
}

struct NormalEstimate {
  Vec3 normal = Vec3::UnitZ();
  double magnitude = 0.0;  // |mean of sigma * grad sigma| before normalization
  bool weak = false;       // magnitude below the erratic threshold
};

/// K deterministic quasi-random offsets inside the unit ball (Halton 2,3,5).
const std::vector<Vec3> &ball_pattern(int count);

/// Density-weighted average of density gradients in a ball around x, negated and normalized.
template <DensityField F>
NormalEstimate extract_normal(const F &field, const Vec3 &x, double radius, double h, int samples,
                              double eps) {
  Vec3 acc = Vec3::Zero();
  const auto &pattern = ball_pattern(samples);
  for (const Vec3 &offset : pattern) {
    const Vec3 p = x + radius * offset;
    const double s = field.density(p);
    if (s <= 0.0) continue;
    acc += s * density_gradient(field, p, h);
  }
  acc /= static_cast<double>(pattern.size());
  const double mag = acc.norm();
  if (!(mag > 0.0)) throw Error(ErrorKind::DegenerateNormal, "all sampled density gradients vanish");
  return {-acc / mag, mag, mag < eps};
}

NormalEstimate extract_normal(const DensityGrid &grid, const Vec3 &x, const ExtractionConfig &cfg = {});

}  // namespace nref
