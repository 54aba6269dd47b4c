#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace nref {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInvPi = 1.0 / std::numbers::pi;

// Roughness is kept inside [kRoughnessEps, 1 - kRoughnessEps].
inline constexpr double kRoughnessEps = 1e-3;

// Visibility hemisphere layout: kVisRings equal-area rings times kVisSectors azimuth sectors.
inline constexpr int kVisRings = 8;
inline constexpr int kVisSectors = 8;
inline constexpr int kVisBins = kVisRings * kVisSectors;

using VisibilityBins = std::array<double, kVisBins>;

enum class ErrorKind {
  NoSurface,
  OutOfBounds,
  DegenerateNormal,
  DegenerateGeometry,
  TooFewPoints,
  StaleTree,
  NonFiniteLoss,
  Format,
  Config,
  Usage,
};

inline const char *error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NoSurface: return "NoSurface";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::DegenerateNormal: return "DegenerateNormal";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::StaleTree: return "StaleTree";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Usage: return "UsageError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Small counter-seeded generator (splitmix64). Satisfies UniformRandomBitGenerator,
/// and is cheap to construct, so every ray/pixel can own an independent stream.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) : state_(seed) {}

  /// Stream derived from a seed and up to three counters.
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix(seed ^ 0x9e3779b97f4a7c15ULL);
    s = mix(s ^ (a + 0x632be59bd9b4e019ULL));
    s = mix(s ^ (b + 0x8cb92ba72f3d8dd7ULL));
    s = mix(s ^ (c + 0xd1b54a32d192ed03ULL));
    return Rng(s);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

/// Orthonormal tangent frame around a unit normal (Duff et al. 2017 branchless form).
struct Frame {
  Vec3 t, b, n;

  explicit Frame(const Vec3 &normal) : n(normal) {
    const double sign = std::copysign(1.0, n.z());
    const double a = -1.0 / (sign + n.z());
    const double bb = n.x() * n.y() * a;
    t = Vec3(1.0 + sign * n.x() * n.x() * a, sign * bb, -sign * n.x());
    b = Vec3(bb, sign + n.y() * n.y() * a, -n.y());
  }

  Vec3 to_local(const Vec3 &w) const { return {w.dot(t), w.dot(b), w.dot(n)}; }
  Vec3 to_world(const Vec3 &l) const { return l.x() * t + l.y() * b + l.z() * n; }
};

/// Equal-area hemisphere bin of direction `w` around normal `n`; -1 below the horizon.
/// Rings are uniform in cos(theta) (equal area), sectors uniform in azimuth.
inline int visibility_bin(const Frame &frame, const Vec3 &w) {
  const Vec3 l = frame.to_local(w);
  if (l.z() <= 0.0) return -1;
  int ring = static_cast<int>((1.0 - l.z()) * kVisRings);
  ring = std::min(ring, kVisRings - 1);
  double phi = std::atan2(l.y(), l.x());
  if (phi < 0.0) phi += 2.0 * kPi;
  int sector = static_cast<int>(phi / (2.0 * kPi) * kVisSectors);
  sector = std::min(sector, kVisSectors - 1);
  return ring * kVisSectors + sector;
}

inline int visibility_bin(const Vec3 &n, const Vec3 &w) { return visibility_bin(Frame(n), w); }

/// World direction at fractional position (fu, fv) in [0,1]^2 inside `bin`.
inline Vec3 visibility_bin_direction(const Frame &frame, int bin, double fu = 0.5, double fv = 0.5) {
  const int ring = bin / kVisSectors;
  const int sector = bin % kVisSectors;
  const double z = 1.0 - (ring + fu) / kVisRings;
  const double phi = (sector + fv) / kVisSectors * 2.0 * kPi;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return frame.to_world(Vec3(r * std::cos(phi), r * std::sin(phi), z));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double luminance(const Vec3 &c) { return 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z(); }

inline double angle_deg(const Vec3 &a, const Vec3 &b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

}  // namespace nref
