#include "nref/field.hpp"

#include <algorithm>
#include <cstring>

#include "nref/binary_io.hpp"

namespace nref {

DensityGrid::DensityGrid(std::array<int, 3> dims, Vec3 origin, double voxel_size)
    : DensityGrid(dims, origin, voxel_size,
                  std::vector<double>(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0)) {}

DensityGrid::DensityGrid(std::array<int, 3> dims, Vec3 origin, double voxel_size,
                         std::vector<double> sigma)
    : dims_(dims), origin_(std::move(origin)), voxel_size_(voxel_size), sigma_(std::move(sigma)) {
  for (int d : dims_) {
    if (d < 2) throw Error(ErrorKind::Format, "grid dims must be >= 2 per axis");
  }
  if (!(voxel_size_ > 0.0)) throw Error(ErrorKind::Format, "voxel_size must be positive");
  if (sigma_.size() != static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]) {
    throw Error(ErrorKind::Format, "sigma size does not match dims");
  }
  for (const double s : sigma_) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorKind::Format, "density must be finite and >= 0");
  }
}

void DensityGrid::set(int i, int j, int k, double value) {
  if (!(value >= 0.0)) throw Error(ErrorKind::Format, "density must be >= 0");
  sigma_[index(i, j, k)] = value;
}

Aabb DensityGrid::bounds() const {
  const Vec3 span(dims_[0] - 1, dims_[1] - 1, dims_[2] - 1);
  return {origin_, origin_ + voxel_size_ * span};
}

double DensityGrid::max_value() const {
  return sigma_.empty() ? 0.0 : *std::max_element(sigma_.begin(), sigma_.end());
}

double DensityGrid::density(const Vec3 &x) const {
  const Vec3 g = (x - origin_) / voxel_size_;
  std::array<int, 3> i0;
  std::array<double, 3> f;
  for (int a = 0; a < 3; ++a) {
    if (!(g[a] >= 0.0) || g[a] > dims_[a] - 1) return 0.0;
    i0[a] = std::min(static_cast<int>(g[a]), dims_[a] - 2);
    f[a] = g[a] - i0[a];
  }
  const auto v = [&](int di, int dj, int dk) { return at(i0[0] + di, i0[1] + dj, i0[2] + dk); };
  // a + t (b - a) keeps constant fields exactly constant.
  const auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double c00 = lerp(v(0, 0, 0), v(1, 0, 0), f[0]);
  const double c10 = lerp(v(0, 1, 0), v(1, 1, 0), f[0]);
  const double c01 = lerp(v(0, 0, 1), v(1, 0, 1), f[0]);
  const double c11 = lerp(v(0, 1, 1), v(1, 1, 1), f[0]);
  return std::max(0.0, lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2]));
}

Vec3 density_gradient(const DensityGrid &grid, const Vec3 &x) {
  const Aabb b = grid.bounds();
  const double pad = grid.voxel_size();
  if ((x.array() < b.lo.array() - pad).any() || (x.array() > b.hi.array() + pad).any()) {
    throw Error(ErrorKind::OutOfBounds, "gradient query outside grid");
  }
  return density_gradient(grid, x, 0.5 * grid.voxel_size());
}

Ray::Ray(const Vec3 &o, const Vec3 &d, double tn, double tf) : origin(o), t_near(tn), t_far(tf) {
  const double len = d.norm();
  if (!(len > 0.0)) throw Error(ErrorKind::DegenerateGeometry, "ray direction must be nonzero");
  if (!(tn < tf)) throw Error(ErrorKind::DegenerateGeometry, "ray requires t_near < t_far");
  dir = d / len;
}

std::optional<std::pair<double, double>> clip_ray(const Ray &ray, const Aabb &box) {
  double t0 = ray.t_near;
  double t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    const double d = ray.dir[a];
    if (std::abs(d) < 1e-300) {
      if (ray.origin[a] < box.lo[a] || ray.origin[a] > box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - ray.origin[a]) / d;
    double tb = (box.hi[a] - ray.origin[a]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

void Surfel::normalize() {
  const double len = normal.norm();
  normal = len > 0.0 ? Vec3(normal / len) : init_normal;
  for (int c = 0; c < 3; ++c) albedo[c] = std::clamp(albedo[c], 0.0, 1.0);
  roughness = std::clamp(roughness, kRoughnessEps, 1.0 - kRoughnessEps);
  for (double &v : visibility) v = std::clamp(v, 0.0, 1.0);
}

void write_rfv(const std::filesystem::path &path, const DensityGrid &grid) {
  BinaryWriter w(path);
  w.bytes("RFV1", 4);
  w.u32(1);
  w.u32(0);
  w.u32(0);
  for (int d : grid.dims()) w.u32(static_cast<std::uint32_t>(d));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(grid.origin()[a]));
  w.f32(static_cast<float>(grid.voxel_size()));
  for (double s : grid.values()) w.f32(static_cast<float>(s));
  w.finish();
}

DensityGrid read_rfv(const std::filesystem::path &path) {
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "RFV1", 4) != 0) throw Error(ErrorKind::Format, "not an RFV1 file: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != 1) throw Error(ErrorKind::Format, "unsupported RFV version");
  r.u32();
  r.u32();
  std::array<int, 3> dims;
  for (int &d : dims) d = static_cast<int>(r.u32());
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = r.f32();
  const double voxel = r.f32();
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<double> sigma(n);
  for (double &s : sigma) s = r.f32();
  return DensityGrid(dims, origin, voxel, std::move(sigma));
}

void write_sfl(const std::filesystem::path &path, const SurfelCloud &cloud) {
  BinaryWriter w(path);
  w.bytes("SFL1", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(cloud.size()));
  w.u32(kVisBins);
  const auto vec = [&](const Vec3 &v) {
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(v[a]));
  };
  for (const Surfel &s : cloud.surfels) {
    vec(s.position);
    vec(s.albedo);
    w.f32(static_cast<float>(s.roughness));
    vec(s.normal);
    vec(s.init_normal);
    w.f32(s.erratic ? 1.0f : 0.0f);
    for (double v : s.visibility) w.f32(static_cast<float>(v));
    for (double v : s.init_visibility) w.f32(static_cast<float>(v));
  }
  w.finish();
}

SurfelCloud read_sfl(const std::filesystem::path &path) {
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "SFL1", 4) != 0) throw Error(ErrorKind::Format, "not an SFL1 file: " + path.string());
  if (r.u32() != 1) throw Error(ErrorKind::Format, "unsupported SFL version");
  const std::uint32_t count = r.u32();
  if (r.u32() != kVisBins) throw Error(ErrorKind::Format, "SFL bin count must be 64");
  const auto vec = [&] {
    Vec3 v;
    for (int a = 0; a < 3; ++a) v[a] = r.f32();
    return v;
  };
  SurfelCloud cloud;
  cloud.surfels.resize(count);
  for (Surfel &s : cloud.surfels) {
    s.position = vec();
    s.albedo = vec();
    s.roughness = r.f32();
    s.normal = vec();
    s.init_normal = vec();
    s.erratic = r.f32() != 0.0f;
    for (double &v : s.visibility) v = r.f32();
    for (double &v : s.init_visibility) v = r.f32();
    for (double x : {s.position.sum(), s.albedo.sum(), s.roughness, s.normal.sum()}) {
      if (!std::isfinite(x)) throw Error(ErrorKind::Format, "non-finite surfel attribute in " + path.string());
    }
  }
  return cloud;
}

}  // namespace nref
