#include "nref/surface.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace nref {

double TransmittanceProfile::at(double t) const {
  if (t <= ts.front()) return 0.0;
  if (t >= ts.back()) return T.back();
  const double dt = step();
  const auto k = std::min<std::size_t>(static_cast<std::size_t>((t - ts.front()) / dt), sigma_mid.size() - 1);
  // T = 1 - exp(-depth); extend depth linearly inside the segment.
  return -std::expm1(-(depth[k] + sigma_mid[k] * (t - ts[k])));
}

int quadrature_steps(double length, double voxel_size, const ExtractionConfig &cfg) {
  const double by_length = cfg.steps_per_unit * length;
  const double by_voxel = cfg.min_steps_per_voxel * length / voxel_size;
  return std::max(2, static_cast<int>(std::ceil(std::max(by_length, by_voxel))));
}

std::optional<Ray> clip_to_grid(const DensityGrid &grid, const Ray &ray) {
  const auto span = clip_ray(ray, grid.bounds());
  if (!span) return std::nullopt;
  Ray r = ray;
  r.t_near = span->first;
  r.t_far = span->second;
  return r;
}

TransmittanceProfile transmittance_profile(const DensityGrid &grid, const Ray &ray, int n_steps) {
  const auto clipped = clip_to_grid(grid, ray);
  if (!clipped) {
    const double tn = ray.t_near;
    const double tf = std::isfinite(ray.t_far) ? ray.t_far : tn + 1.0;
    return {{tn, tf}, {0.0, 0.0}, {0.0}, {0.0, 0.0}};
  }
  return transmittance_profile<DensityGrid>(grid, *clipped, n_steps);
}

SurfaceHit expected_termination(const TransmittanceProfile &profile, const Ray &ray, double tau_hit) {
  const double total = profile.total();
  if (!(total >= tau_hit)) throw Error(ErrorKind::NoSurface, "ray opacity below hit threshold");
  double t_acc = 0.0;
  for (std::size_t k = 0; k + 1 < profile.ts.size(); ++k) {
    const double w = profile.T[k + 1] - profile.T[k];
    t_acc += w * 0.5 * (profile.ts[k] + profile.ts[k + 1]);
  }
  const double t = t_acc / total;
  return {t, ray.at(t), total};
}

SurfaceHit median_termination(const TransmittanceProfile &profile, const Ray &ray, double tol,
                              double tau_hit) {
  const double total = profile.total();
  if (!(total >= tau_hit)) throw Error(ErrorKind::NoSurface, "ray opacity below hit threshold");
  const double target = 0.5 * (profile.T.front() + total);
  // Invariant: T(lo) < target <= T(hi). Converges to the smallest crossing on plateaus.
  double lo = profile.t_near();
  double hi = profile.t_far();
  // Coarse bracket on the sampled profile first; the first sample reaching the target bounds it.
  const auto it = std::lower_bound(profile.T.begin(), profile.T.end(), target);
  const auto k = static_cast<std::size_t>(it - profile.T.begin());
  if (k > 0) {
    lo = profile.ts[k - 1];
    hi = profile.ts[k];
  }
  tol = std::max(tol, 1e-12);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (profile.at(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double s = 0.5 * (lo + hi);
  return {s, ray.at(s), total};
}

const std::vector<Vec3> &ball_pattern(int count) {
  static std::mutex mutex;
  static std::map<int, std::vector<Vec3>> cache;
  std::lock_guard lock(mutex);
  auto &pts = cache[count];
  if (!pts.empty()) return pts;
  const auto halton = [](int index, int base) {
    double f = 1.0, r = 0.0;
    for (int i = index; i > 0; i /= base) {
      f /= base;
      r += f * (i % base);
    }
    return r;
  };
  pts.reserve(count);
  for (int i = 1; i <= count; ++i) {
    const double r = std::cbrt(halton(i, 2));
    const double z = 1.0 - 2.0 * halton(i, 3);
    const double phi = 2.0 * kPi * halton(i, 5);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    pts.emplace_back(r * s * std::cos(phi), r * s * std::sin(phi), r * z);
  }
  return pts;
}

NormalEstimate extract_normal(const DensityGrid &grid, const Vec3 &x, const ExtractionConfig &cfg) {
  const Aabb b = grid.bounds();
  if (!b.contains(x)) throw Error(ErrorKind::OutOfBounds, "normal query outside grid");
  const double voxel = grid.voxel_size();
  return extract_normal(grid, x, cfg.normal_radius_voxels * voxel, 0.5 * voxel, cfg.normal_samples,
                        cfg.normal_eps);
}

}  // namespace nref
