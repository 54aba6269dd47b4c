#include "nref/envmap.hpp"

#include "nref/image.hpp"

namespace nref {

FaceCoord direction_to_face(const Vec3 &w) {
  const double ax = std::abs(w.x()), ay = std::abs(w.y()), az = std::abs(w.z());
  FaceCoord fc;
  double sc, tc, ma;
  if (ax >= ay && ax >= az) {
    ma = ax;
    if (w.x() > 0) {
      fc.face = 0, sc = -w.z(), tc = -w.y();
    } else {
      fc.face = 1, sc = w.z(), tc = -w.y();
    }
  } else if (ay >= az) {
    ma = ay;
    if (w.y() > 0) {
      fc.face = 2, sc = w.x(), tc = w.z();
    } else {
      fc.face = 3, sc = w.x(), tc = -w.z();
    }
  } else {
    ma = az;
    if (w.z() > 0) {
      fc.face = 4, sc = w.x(), tc = -w.y();
    } else {
      fc.face = 5, sc = -w.x(), tc = -w.y();
    }
  }
  fc.u = std::clamp(sc / ma, -1.0, 1.0);
  fc.v = std::clamp(tc / ma, -1.0, 1.0);
  return fc;
}

Vec3 face_to_direction(int face, double u, double v) {
  Vec3 d;
  switch (face) {
    case 0: d = Vec3(1, -v, -u); break;
    case 1: d = Vec3(-1, -v, u); break;
    case 2: d = Vec3(u, 1, v); break;
    case 3: d = Vec3(u, -1, -v); break;
    case 4: d = Vec3(u, -v, 1); break;
    default: d = Vec3(-u, -v, -1); break;
  }
  return d.normalized();
}

double mip_level(int n_samples, double pdf, int base_resolution, double u, double v, double max_level) {
  const double omega_s = 1.0 / (n_samples * pdf);
  const double dA = 1.0 / std::pow(u * u + v * v + 1.0, 1.5);
  const double omega_p = 4.0 / (double(base_resolution) * base_resolution) * dA;
  const double l = std::max(0.5 * std::log2(omega_s / omega_p), 0.0);
  return std::min(l, max_level);
}

EnvCubeMap::EnvCubeMap(int resolution, const Vec3 &fill) : resolution_(resolution) {
  if (resolution < 1 || (resolution & (resolution - 1)) != 0) {
    throw Error(ErrorKind::Config, "environment resolution must be a power of two");
  }
  for (int w = resolution; w >= 1; w /= 2) mips_.emplace_back(std::size_t(6) * w * w, fill);
}

Vec3 EnvCubeMap::texel_direction(int index) const {
  const int w = resolution_;
  const int face = index / (w * w);
  const int rem = index % (w * w);
  const int y = rem / w, x = rem % w;
  return face_to_direction(face, (x + 0.5) / w * 2.0 - 1.0, (y + 0.5) / w * 2.0 - 1.0);
}

void EnvCubeMap::build_mips() {
  for (int l = 1; l < levels(); ++l) {
    const int w = level_resolution(l);
    const auto &src = mips_[l - 1];
    auto &dst = mips_[l];
    for (int f = 0; f < 6; ++f) {
      for (int y = 0; y < w; ++y) {
        for (int x = 0; x < w; ++x) {
          const auto at = [&](int xx, int yy) { return src[texel_index(f, xx, yy, l - 1)]; };
          dst[texel_index(f, x, y, l)] =
              0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
        }
      }
    }
  }
}

Vec3 EnvCubeMap::bilinear(int level, const FaceCoord &fc, double weight, Footprint *fp) const {
  const int w = level_resolution(level);
  const double fx = std::clamp((fc.u + 1.0) * 0.5 * w - 0.5, 0.0, double(w - 1));
  const double fy = std::clamp((fc.v + 1.0) * 0.5 * w - 0.5, 0.0, double(w - 1));
  const int x0 = std::min(static_cast<int>(fx), std::max(w - 2, 0));
  const int y0 = std::min(static_cast<int>(fy), std::max(w - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, w - 1);
  const double tx = fx - x0, ty = fy - y0;
  const auto &data = mips_[level];
  const int i00 = texel_index(fc.face, x0, y0, level), i10 = texel_index(fc.face, x1, y0, level);
  const int i01 = texel_index(fc.face, x0, y1, level), i11 = texel_index(fc.face, x1, y1, level);
  const double w00 = (1 - tx) * (1 - ty), w10 = tx * (1 - ty), w01 = (1 - tx) * ty, w11 = tx * ty;
  if (fp) {
    fp->add(level, i00, weight * w00);
    fp->add(level, i10, weight * w10);
    fp->add(level, i01, weight * w01);
    fp->add(level, i11, weight * w11);
  }
  return weight * (w00 * data[i00] + w10 * data[i10] + w01 * data[i01] + w11 * data[i11]);
}

Vec3 EnvCubeMap::sample(const Vec3 &w, double level, Footprint *fp) const {
  if (fp) fp->count = 0;
  const FaceCoord fc = direction_to_face(w);
  level = std::clamp(level, 0.0, double(levels() - 1));
  const int l0 = static_cast<int>(level);
  const int l1 = std::min(l0 + 1, levels() - 1);
  const double t = level - l0;
  if (t == 0.0 || l1 == l0) return bilinear(l0, fc, 1.0, fp);
  return bilinear(l0, fc, 1.0 - t, fp) + bilinear(l1, fc, t, fp);
}

std::vector<std::pair<int, double>> EnvCubeMap::level0_weights(const Footprint &fp) const {
  std::vector<std::pair<int, double>> out;
  for (int i = 0; i < fp.count; ++i) {
    const auto &tap = fp.taps[i];
    const int wl = level_resolution(tap.level);
    const int face = tap.texel / (wl * wl);
    const int rem = tap.texel % (wl * wl);
    const int y = rem / wl, x = rem % wl;
    const int s = 1 << tap.level;
    const double w = tap.weight / double(s * s);
    for (int yy = 0; yy < s; ++yy) {
      for (int xx = 0; xx < s; ++xx) out.emplace_back(texel_index(face, x * s + xx, y * s + yy, 0), w);
    }
  }
  return out;
}

std::vector<Vec3> EnvCubeMap::fold_gradients(std::vector<std::vector<Vec3>> g) const {
  for (int l = levels() - 1; l >= 1; --l) {
    const int w = level_resolution(l);
    for (int f = 0; f < 6; ++f) {
      for (int y = 0; y < w; ++y) {
        for (int x = 0; x < w; ++x) {
          const Vec3 q = 0.25 * g[l][texel_index(f, x, y, l)];
          if (q.isZero(0.0)) continue;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) g[l - 1][texel_index(f, 2 * x + dx, 2 * y + dy, l - 1)] += q;
          }
        }
      }
    }
  }
  return std::move(g[0]);
}

void EnvCubeMap::scale(const Vec3 &s) {
  for (auto &lvl : mips_) {
    for (auto &t : lvl) t = t.cwiseProduct(s);
  }
}

double env_smooth_loss(const EnvCubeMap &env) {
  if (env.levels() < 2) return 0.0;
  const int w = env.resolution();
  double acc = 0.0;
  for (int f = 0; f < 6; ++f) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec3 r = env.level(0)[env.texel_index(f, x, y, 0)] - env.level(1)[env.texel_index(f, x / 2, y / 2, 1)];
        acc += r.squaredNorm();
      }
    }
  }
  return acc / (3.0 * env.texel_count(0));
}

std::vector<Vec3> env_smooth_gradient(const EnvCubeMap &env) {
  std::vector<Vec3> g(env.texel_count(0), Vec3::Zero());
  if (env.levels() < 2) return g;
  const int w = env.resolution();
  const double scale = 2.0 / (3.0 * env.texel_count(0));
  // Residuals inside each 2x2 block sum to zero, so the mean term drops out.
  for (int f = 0; f < 6; ++f) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = env.texel_index(f, x, y, 0);
        g[i] = scale * (env.level(0)[i] - env.level(1)[env.texel_index(f, x / 2, y / 2, 1)]);
      }
    }
  }
  return g;
}

namespace {
constexpr int kCross[6][2] = {{2, 1}, {0, 1}, {1, 0}, {1, 2}, {1, 1}, {3, 1}};
constexpr const char *kFaceSuffix[6] = {"_px", "_nx", "_py", "_ny", "_pz", "_nz"};
}  // namespace

void write_env_cross(const std::filesystem::path &path, const EnvCubeMap &env) {
  const int w = env.resolution();
  Image img(4 * w, 3 * w);
  for (int f = 0; f < 6; ++f) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) img.at(kCross[f][0] * w + x, kCross[f][1] * w + y) = env.level(0)[env.texel_index(f, x, y)];
    }
  }
  write_pfm(path, img);
}

EnvCubeMap read_env_cross(const std::filesystem::path &path) {
  const Image img = read_pfm(path);
  const int w = img.width / 4;
  if (img.width != 4 * w || img.height != 3 * w) throw Error(ErrorKind::Format, "cross layout must be 4W x 3W");
  EnvCubeMap env(w);
  for (int f = 0; f < 6; ++f) {
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        Vec3 v = img.at(kCross[f][0] * w + x, kCross[f][1] * w + y);
        if (!(v.array() >= 0.0).all() || !v.allFinite()) throw Error(ErrorKind::Format, "negative or non-finite radiance");
        env.texel(env.texel_index(f, x, y)) = v;
      }
    }
  }
  env.build_mips();
  return env;
}

void write_env_faces(const std::filesystem::path &stem, const EnvCubeMap &env) {
  const int w = env.resolution();
  for (int f = 0; f < 6; ++f) {
    Image img(w, w);
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) img.at(x, y) = env.level(0)[env.texel_index(f, x, y)];
    }
    write_pfm(stem.string() + kFaceSuffix[f] + ".pfm", img);
  }
}

EnvCubeMap read_env_faces(const std::filesystem::path &stem) {
  EnvCubeMap env;
  for (int f = 0; f < 6; ++f) {
    const Image img = read_pfm(stem.string() + kFaceSuffix[f] + ".pfm");
    if (f == 0) env = EnvCubeMap(img.width);
    if (img.width != env.resolution() || img.height != env.resolution()) {
      throw Error(ErrorKind::Format, "cube faces must be square and equal-sized");
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) env.texel(env.texel_index(f, x, y)) = img.at(x, y).cwiseMax(0.0);
    }
  }
  env.build_mips();
  return env;
}

EnvCubeMap rotate_env_y(const EnvCubeMap &env, double radians) {
  EnvCubeMap out(env.resolution());
  const double c = std::cos(radians), s = std::sin(radians);
  for (int i = 0; i < out.texel_count(0); ++i) {
    const Vec3 d = out.texel_direction(i);
    // out(d) = env(R^-1 d)
    const Vec3 src(c * d.x() - s * d.z(), d.y(), s * d.x() + c * d.z());
    out.texel(i) = env.sample(src, 0.0);
  }
  out.build_mips();
  return out;
}

}  // namespace nref
