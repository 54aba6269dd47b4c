#include "nref/scene.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nref {

using nlohmann::json;

Vec3 Texture::eval(const Vec3 &x) const {
  switch (kind) {
    case Kind::Constant: return color_a;
    case Kind::Checker: {
      const long s = static_cast<long>(std::floor(x.x() / scale)) + static_cast<long>(std::floor(x.y() / scale)) +
                     static_cast<long>(std::floor(x.z() / scale));
      return (s & 1) ? color_b : color_a;
    }
    case Kind::Bands: {
      const double t = 0.5 + 0.5 * std::sin(2.0 * kPi * axis.dot(x) / scale);
      return color_a + t * (color_b - color_a);
    }
  }
  return color_a;
}

namespace {

struct PlaneLocal {
  double u, v, dn, h, hu, hv;
  Frame frame;
};

PlaneLocal plane_local(const Primitive &p, const Vec3 &x) {
  const Frame f(p.normal);
  const Vec3 l = x - p.center;
  PlaneLocal pl{l.dot(f.t), l.dot(f.b), l.dot(f.n), 0.0, 0.0, 0.0, f};
  if (p.bump_amplitude != 0.0) {
    const double w = 2.0 * kPi * p.bump_frequency;
    pl.h = p.bump_amplitude * std::sin(w * pl.u) * std::sin(w * pl.v);
    pl.hu = p.bump_amplitude * w * std::cos(w * pl.u) * std::sin(w * pl.v);
    pl.hv = p.bump_amplitude * w * std::sin(w * pl.u) * std::cos(w * pl.v);
  }
  return pl;
}

/// Leaf primitive closest to x (by |sdf|), searching through unions.
const Primitive *nearest_leaf(const Primitive &p, const Vec3 &x, double &best) {
  if (p.shape == Primitive::Shape::Union) {
    const Primitive *out = nullptr;
    for (const auto &c : p.children) {
      const Primitive *cand = nearest_leaf(c, x, best);
      if (cand) out = cand;
    }
    return out;
  }
  const double d = std::abs(p.sdf(x));
  if (d < best) {
    best = d;
    return &p;
  }
  return nullptr;
}

}  // namespace

double Primitive::sdf(const Vec3 &x) const {
  switch (shape) {
    case Shape::Sphere: return (x - center).norm() - radius;
    case Shape::Box: {
      const Vec3 q = (x - center).cwiseAbs() - half_extent;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case Shape::Plane: {
      const PlaneLocal pl = plane_local(*this, x);
      const double slope = 2.0 * kPi * bump_frequency * bump_amplitude;
      const double s = (pl.dn - pl.h) / std::sqrt(1.0 + 2.0 * slope * slope);
      const double eu = std::max(std::abs(pl.u) - half_size, 0.0);
      const double ev = std::max(std::abs(pl.v) - half_size, 0.0);
      if (eu == 0.0 && ev == 0.0) return s;
      return std::copysign(std::sqrt(s * s + eu * eu + ev * ev), s);
    }
    case Shape::Union: {
      double d = std::numeric_limits<double>::infinity();
      for (const auto &c : children) d = std::min(d, c.sdf(x));
      return d;
    }
  }
  return 0.0;
}

Vec3 Primitive::surface_normal(const Vec3 &x) const {
  switch (shape) {
    case Shape::Sphere: {
      const Vec3 d = x - center;
      return d.norm() > 0.0 ? Vec3(d.normalized()) : Vec3::UnitZ();
    }
    case Shape::Plane: {
      const PlaneLocal pl = plane_local(*this, x);
      return (pl.frame.n - pl.hu * pl.frame.t - pl.hv * pl.frame.b).normalized();
    }
    default: {
      const double h = 1e-6;
      Vec3 g;
      for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h;
        g[a] = sdf(x + e) - sdf(x - e);
      }
      return g.norm() > 0.0 ? Vec3(g.normalized()) : Vec3::UnitZ();
    }
  }
}

std::pair<double, int> SceneDesc::nearest(const Vec3 &x) const {
  double best = std::numeric_limits<double>::infinity();
  double signed_best = best;
  int idx = -1;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const double d = primitives[i].sdf(x);
    if (std::abs(d) < best) {
      best = std::abs(d);
      signed_best = d;
      idx = static_cast<int>(i);
    }
  }
  return {signed_best, idx};
}

// ---------------------------------------------------------------------------------------------
// JSON parsing

namespace {

void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
  if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto &item : j.items()) {
    if (!ok.count(item.key())) throw Error(ErrorKind::Config, "unknown key '" + item.key() + "' in " + where);
  }
}

Vec3 vec3(const json &j, const std::string &what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::Config, what + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec3 vec3_or(const json &j, const char *key, const Vec3 &fallback) {
  return j.contains(key) ? vec3(j.at(key), key) : fallback;
}

double num_or(const json &j, const char *key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

Material parse_material(const json &j) {
  check_keys(j, {"albedo", "texture", "roughness", "specular"}, "material");
  Material m;
  if (j.contains("albedo")) m.albedo.color_a = m.albedo.color_b = vec3(j["albedo"], "albedo");
  if (j.contains("texture")) {
    const json &t = j["texture"];
    check_keys(t, {"kind", "color_a", "color_b", "scale", "axis"}, "texture");
    const std::string kind = t.value("kind", "constant");
    if (kind == "checker") {
      m.albedo.kind = Texture::Kind::Checker;
    } else if (kind == "bands") {
      m.albedo.kind = Texture::Kind::Bands;
    } else if (kind != "constant") {
      throw Error(ErrorKind::Config, "unknown texture kind '" + kind + "'");
    }
    m.albedo.color_a = vec3_or(t, "color_a", m.albedo.color_a);
    m.albedo.color_b = vec3_or(t, "color_b", m.albedo.color_a);
    m.albedo.scale = num_or(t, "scale", 1.0);
    m.albedo.axis = vec3_or(t, "axis", Vec3::UnitY()).normalized();
    if (!(m.albedo.scale > 0.0)) throw Error(ErrorKind::Config, "texture scale must be positive");
  }
  m.roughness = num_or(j, "roughness", 0.5);
  if (!(m.roughness >= kRoughnessEps && m.roughness <= 1.0 - kRoughnessEps)) {
    throw Error(ErrorKind::Config, "roughness out of range");
  }
  m.specular = num_or(j, "specular", m.specular);
  if (!(m.specular >= 0.0 && m.specular <= 1.0)) throw Error(ErrorKind::Config, "specular f0 must lie in [0, 1]");
  for (int c = 0; c < 3; ++c) {
    if (m.albedo.color_a[c] < 0 || m.albedo.color_a[c] > 1 || m.albedo.color_b[c] < 0 || m.albedo.color_b[c] > 1) {
      throw Error(ErrorKind::Config, "albedo components must lie in [0, 1]");
    }
  }
  return m;
}

Primitive parse_primitive(const json &j, const Material *inherited) {
  check_keys(j,
             {"shape", "center", "radius", "half_extent", "normal", "half_size", "bump_amplitude", "bump_frequency",
              "children", "material"},
             "primitive");
  Primitive p;
  const std::string shape = j.at("shape").get<std::string>();
  if (j.contains("material")) {
    p.material = parse_material(j["material"]);
  } else if (inherited) {
    p.material = *inherited;
  }
  p.center = vec3_or(j, "center", Vec3::Zero());
  if (shape == "sphere") {
    p.shape = Primitive::Shape::Sphere;
    p.radius = num_or(j, "radius", 0.5);
    if (!(p.radius > 0.0)) throw Error(ErrorKind::Config, "sphere radius must be positive");
  } else if (shape == "box") {
    p.shape = Primitive::Shape::Box;
    p.half_extent = vec3_or(j, "half_extent", Vec3::Constant(0.5));
    if (!(p.half_extent.array() > 0.0).all()) throw Error(ErrorKind::Config, "box half_extent must be positive");
  } else if (shape == "plane") {
    p.shape = Primitive::Shape::Plane;
    p.normal = vec3_or(j, "normal", Vec3::UnitZ());
    if (!(p.normal.norm() > 0.0)) throw Error(ErrorKind::Config, "plane normal must be nonzero");
    p.normal.normalize();
    p.half_size = num_or(j, "half_size", 1.0);
    p.bump_amplitude = num_or(j, "bump_amplitude", 0.0);
    p.bump_frequency = num_or(j, "bump_frequency", 0.0);
  } else if (shape == "union") {
    p.shape = Primitive::Shape::Union;
    for (const auto &c : j.at("children")) p.children.push_back(parse_primitive(c, &p.material));
    if (p.children.empty()) throw Error(ErrorKind::Config, "union needs children");
  } else {
    throw Error(ErrorKind::Config, "unknown shape '" + shape + "'");
  }
  return p;
}

EnvCubeMap parse_env(const json &j, const std::filesystem::path &base) {
  check_keys(j,
             {"type", "resolution", "radiance", "zenith", "horizon", "ground", "sun_direction", "sun_radiance",
              "sun_angle_deg", "path"},
             "env");
  const std::string type = j.value("type", "constant");
  if (type == "file") {
    std::filesystem::path p = j.at("path").get<std::string>();
    if (p.is_relative()) p = base / p;
    return read_env_cross(p);
  }
  const int res = j.value("resolution", 16);
  EnvCubeMap env(res);
  if (type == "constant") {
    const Vec3 c = vec3_or(j, "radiance", Vec3::Ones());
    env = EnvCubeMap(res, c);
    return env;
  }
  if (type != "sky") throw Error(ErrorKind::Config, "unknown env type '" + type + "'");
  const Vec3 zenith = vec3_or(j, "zenith", Vec3(0.6, 0.7, 0.9));
  const Vec3 horizon = vec3_or(j, "horizon", Vec3(1.0, 1.0, 1.0));
  const Vec3 ground = vec3_or(j, "ground", Vec3(0.3, 0.3, 0.3));
  const Vec3 sun_dir = vec3_or(j, "sun_direction", Vec3(0.3, 1.0, 0.2)).normalized();
  const Vec3 sun = vec3_or(j, "sun_radiance", Vec3::Zero());
  const double sun_cos = std::cos(num_or(j, "sun_angle_deg", 10.0) * kPi / 180.0);
  for (int i = 0; i < env.texel_count(0); ++i) {
    const Vec3 d = env.texel_direction(i);
    Vec3 c;
    if (d.y() >= 0.0) {
      c = horizon + (zenith - horizon) * std::sqrt(d.y());
    } else {
      const double t = std::min(1.0, -d.y() * 4.0);
      c = horizon + (ground - horizon) * t;
    }
    const double cs = d.dot(sun_dir);
    if (cs > sun_cos) {
      const double s = (cs - sun_cos) / (1.0 - sun_cos);
      c += sun * std::min(1.0, 2.0 * s);
    }
    env.texel(i) = c.cwiseMax(0.0);
  }
  env.build_mips();
  return env;
}

Camera parse_camera_entry(const json &j) {
  if (j.contains("pose")) {
    Camera c;
    const auto pose = j.at("pose").get<std::vector<double>>();
    if (pose.size() != 16) throw Error(ErrorKind::Config, "camera pose must have 16 entries");
    for (int r = 0; r < 4; ++r) {
      for (int k = 0; k < 4; ++k) c.world_from_camera(r, k) = pose[r * 4 + k];
    }
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    return c;
  }
  check_keys(j, {"eye", "target", "up", "fov_deg", "width", "height"}, "camera");
  return Camera::look_at(vec3(j.at("eye"), "eye"), vec3_or(j, "target", Vec3::Zero()),
                         vec3_or(j, "up", Vec3::UnitY()), num_or(j, "fov_deg", 30.0), j.value("width", 32),
                         j.value("height", 32));
}

std::vector<Camera> parse_cameras(const json &j) {
  std::vector<Camera> out;
  if (j.is_array()) {
    for (const auto &c : j) out.push_back(parse_camera_entry(c));
    return out;
  }
  check_keys(j, {"type", "count", "radius", "fov_deg", "width", "height", "target", "offset", "views"}, "cameras");
  const std::string type = j.value("type", "orbit");
  if (type == "list") {
    for (const auto &c : j.at("views")) out.push_back(parse_camera_entry(c));
    return out;
  }
  if (type != "orbit") throw Error(ErrorKind::Config, "unknown camera set type '" + type + "'");
  const int count = j.value("count", 16);
  const double radius = num_or(j, "radius", 3.0);
  const double fov = num_or(j, "fov_deg", 30.0);
  const int w = j.value("width", 32), h = j.value("height", 32);
  const Vec3 target = vec3_or(j, "target", Vec3::Zero());
  const double offset = num_or(j, "offset", 0.0);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i + 2.0 * kPi * offset;
    const Vec3 dir(r * std::cos(phi), y, r * std::sin(phi));
    out.push_back(Camera::look_at(target + radius * dir, target, Vec3::UnitY(), fov, w, h));
  }
  return out;
}

}  // namespace

SceneDesc parse_scene(const std::string &text, const std::filesystem::path &base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Config, std::string("scene JSON: ") + e.what());
  }
  SceneDesc d;
  try {
    check_keys(j,
               {"bounds", "shell_voxels", "optical_depth", "noise", "primitives", "env", "relight_env", "cameras",
                "heldout", "reference_samples", "seed"},
               "scene");
    if (j.contains("bounds")) {
      check_keys(j["bounds"], {"lo", "hi"}, "bounds");
      d.bounds.lo = vec3(j["bounds"].at("lo"), "bounds.lo");
      d.bounds.hi = vec3(j["bounds"].at("hi"), "bounds.hi");
    }
    d.shell_voxels = num_or(j, "shell_voxels", d.shell_voxels);
    d.optical_depth = num_or(j, "optical_depth", d.optical_depth);
    d.noise = num_or(j, "noise", 0.0);
    for (const auto &p : j.at("primitives")) d.primitives.push_back(parse_primitive(p, nullptr));
    if (j.contains("env")) d.env = parse_env(j["env"], base);
    if (j.contains("relight_env")) d.relight_env = parse_env(j["relight_env"], base);
    if (j.contains("cameras")) d.cameras = parse_cameras(j["cameras"]);
    if (j.contains("heldout")) d.heldout = parse_cameras(j["heldout"]);
    d.reference_samples = j.value("reference_samples", d.reference_samples);
    d.seed = j.value("seed", d.seed);
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Config, std::string("scene JSON: ") + e.what());
  }
  if (d.primitives.empty()) throw Error(ErrorKind::Config, "scene needs at least one primitive");
  if (d.cameras.empty()) throw Error(ErrorKind::Config, "scene needs at least one camera");
  if (d.shell_voxels < 0.5 || !(d.optical_depth > 0.0) || d.noise < 0.0) {
    throw Error(ErrorKind::Config, "shell_voxels must be >= 0.5, optical_depth > 0, noise >= 0");
  }
  if (!(d.bounds.extent().array() > 0.0).all()) throw Error(ErrorKind::Config, "empty scene bounds");
  if (d.reference_samples < 1) throw Error(ErrorKind::Config, "reference_samples must be >= 1");
  return d;
}

SceneDesc load_scene(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open scene: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------------------------

DensityGrid bake_scene(const SceneDesc &desc, int dims) {
  if (dims < 2) throw Error(ErrorKind::Config, "dims must be >= 2");
  const Vec3 ext = desc.bounds.extent();
  const double voxel = ext.maxCoeff() / (dims - 1);
  std::array<int, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = std::max(2, static_cast<int>(std::floor(ext[a] / voxel + 1e-9)) + 1);
  DensityGrid grid(n, desc.bounds.lo, voxel);
  const double s = desc.shell_voxels * voxel;
  const double peak = desc.optical_depth / (s * std::sqrt(2.0 * kPi));
  const double cutoff = 8.0 * s;
  std::vector<double> sigma(grid.size(), 0.0);
  const long nz = n[2];
#pragma omp parallel for schedule(static)
  for (long k = 0; k < nz; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i) {
        const Vec3 x = grid.position(i, j, static_cast<int>(k));
        double d = std::numeric_limits<double>::infinity();
        for (const auto &p : desc.primitives) d = std::min(d, std::abs(p.sdf(x)));
        double v = d < cutoff ? peak * std::exp(-d * d / (2.0 * s * s)) : 0.0;
        const std::size_t idx = grid.index(i, j, static_cast<int>(k));
        if (desc.noise > 0.0) v += desc.noise * Rng::stream(desc.seed, idx, 0x4015e).uniform();
        sigma[idx] = v;
      }
    }
  }
  return DensityGrid(n, desc.bounds.lo, voxel, std::move(sigma));
}

GtPoint ground_truth(const SceneDesc &desc, const Vec3 &x) {
  double best = std::numeric_limits<double>::infinity();
  const Primitive *leaf = nullptr;
  int top = -1;
  for (std::size_t i = 0; i < desc.primitives.size(); ++i) {
    const Primitive *cand = nearest_leaf(desc.primitives[i], x, best);
    if (cand) leaf = cand, top = static_cast<int>(i);
  }
  GtPoint g;
  if (!leaf) return g;
  Vec3 p = x;
  for (int it = 0; it < 4; ++it) p -= leaf->sdf(p) * leaf->surface_normal(p);
  g.position = p;
  g.normal = leaf->surface_normal(p);
  g.albedo = leaf->material.albedo.eval(p);
  g.roughness = leaf->material.roughness;
  g.specular = leaf->material.specular;
  g.primitive = top;
  return g;
}

namespace {

double scene_distance(const SceneDesc &desc, const Vec3 &x) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto &p : desc.primitives) d = std::min(d, std::abs(p.sdf(x)));
  return d;
}

std::optional<double> trace(const SceneDesc &desc, const Ray &ray) {
  Aabb box = desc.bounds;
  const Vec3 pad = Vec3::Constant(1e-3 * desc.bounds.extent().maxCoeff());
  box.lo -= pad;
  box.hi += pad;
  const auto span = clip_ray(ray, box);
  if (!span) return std::nullopt;
  const double eps = 1e-7 * desc.bounds.extent().maxCoeff();
  double t = span->first;
  for (int it = 0; it < 4096 && t <= span->second; ++it) {
    const double d = scene_distance(desc, ray.at(t));
    if (d < eps) return t;
    t += 0.9 * d;
  }
  return std::nullopt;
}

}  // namespace

std::optional<GtPoint> intersect_scene(const SceneDesc &desc, const Ray &ray) {
  const auto t = trace(desc, ray);
  if (!t) return std::nullopt;
  return ground_truth(desc, ray.at(*t));
}

bool occluded(const SceneDesc &desc, const Vec3 &x, const Vec3 &w) {
  return trace(desc, Ray(x, w)).has_value();
}

ReferenceImage render_reference(const SceneDesc &desc, const Camera &camera, const EnvCubeMap &env, int n_samples,
                                std::uint64_t seed) {
  ReferenceImage out{Image(camera.width, camera.height), Image(camera.width, camera.height),
                     Image(camera.width, camera.height), Image(camera.width, camera.height)};
  SamplingConfig sc;
  sc.n_spec = std::max(1, (2 * n_samples + 1) / 3);
  sc.n_diff = std::max(1, n_samples - sc.n_spec);
  const double offset = 1e-4 * desc.bounds.extent().maxCoeff();
  const long count = static_cast<long>(camera.width) * camera.height;
#pragma omp parallel for schedule(dynamic, 8)
  for (long p = 0; p < count; ++p) {
    const int px = static_cast<int>(p % camera.width), py = static_cast<int>(p / camera.width);
    const Ray ray = camera.pixel_ray(px, py);
    const auto hit = intersect_scene(desc, ray);
    if (!hit) continue;
    const Vec3 wo = -ray.dir;
    Vec3 n = hit->normal;
    if (n.dot(wo) < 0.0) n = -n;  // surfaces are two-sided
    out.mask.pixels[p] = Vec3::Ones();
    out.albedo.pixels[p] = hit->albedo;
    out.normal.pixels[p] = n;
    BrdfParams brdf;
    brdf.albedo = hit->albedo;
    brdf.roughness = hit->roughness;
    brdf.specular_f0 = Vec3::Constant(hit->specular);
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(p), 0x0ac1e);
    const auto samples = sample_direction(brdf, n, wo, rng, sc);
    const Vec3 origin = hit->position + offset * n;
    Vec3 acc = Vec3::Zero();
    for (const auto &s : samples) {
      const double c = n.dot(s.wi);
      if (c <= 0.0) continue;
      if (occluded(desc, origin, s.wi)) continue;
      acc += eval_brdf(brdf, n, s.wi, wo).cwiseProduct(env.sample(s.wi, 0.0)) * (c * s.weight);
    }
    out.color.pixels[p] = acc;
  }
  return out;
}

namespace {

std::string numbered(const char *prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.pfm", prefix, i);
  return buf;
}

void write_view_set(const std::filesystem::path &dir, const SceneDesc &desc, const std::vector<Camera> &cams,
                    std::uint64_t salt, const std::filesystem::path *gt_dir) {
  std::filesystem::create_directories(dir);
  write_cameras(dir / "cameras.json", cams);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto ref = render_reference(desc, cams[i], desc.env, desc.reference_samples,
                                      Rng::stream(desc.seed, salt, i)());
    write_pfm(dir / numbered("view", i), ref.color);
    write_pfm(dir / numbered("mask", i), ref.mask, true);
    if (gt_dir) {
      write_pfm(*gt_dir / numbered("albedo", i), ref.albedo);
      write_pfm(*gt_dir / numbered("normal", i), ref.normal);
    }
  }
}

}  // namespace

void write_fixture(const std::filesystem::path &dir, const SceneDesc &desc, const DensityGrid &grid) {
  std::filesystem::create_directories(dir / "gt");
  write_rfv(dir / "grid.rfv", grid);
  write_env_cross(dir / "env.pfm", desc.env);
  if (desc.relight_env) write_env_cross(dir / "env_relight.pfm", *desc.relight_env);
  const std::filesystem::path gt = dir / "gt";
  write_view_set(dir / "views", desc, desc.cameras, 1, &gt);
  if (!desc.heldout.empty()) write_view_set(dir / "heldout", desc, desc.heldout, 2, nullptr);
}

}  // namespace nref
