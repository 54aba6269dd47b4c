#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "nref/field.hpp"
#include "support.hpp"

using namespace nref;
using nref::test::cube_grid;
using nref::test::grid_from;

TEST(SampleDensity, ConstantGridInterior) {
  const auto g = cube_grid(5, 1.0, [](const Vec3 &) { return 2.0; });
  EXPECT_DOUBLE_EQ(sample_density(g, Vec3(0.13, -0.4, 0.77)), 2.0);
}

TEST(SampleDensity, OutsideIsVacuum) {
  const auto g = cube_grid(5, 1.0, [](const Vec3 &) { return 2.0; });
  EXPECT_EQ(sample_density(g, Vec3(1.01, 0, 0)), 0.0);
  EXPECT_EQ(sample_density(g, Vec3(0, -3, 0)), 0.0);
}

TEST(SampleDensity, AlternatingCornersAtCellCenter) {
  DensityGrid g({2, 2, 2}, Vec3::Zero(), 1.0);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) g.set(i, j, k, (i + j + k) % 2);
  EXPECT_NEAR(sample_density(g, Vec3(0.5, 0.5, 0.5)), 0.5, 1e-15);
}

TEST(SampleDensity, LipschitzWithinVoxel) {
  Rng rng(3);
  const auto g = cube_grid(9, 1.0, [&](const Vec3 &) { return 5.0 * rng.uniform(); });
  double lmax = 0.0;
  for (double v : g.values()) lmax = std::max(lmax, v);
  // trilinear slope along any axis is bounded by (max - min) / voxel
  const double L = std::sqrt(3.0) * lmax / g.voxel_size();
  Rng q(4);
  for (int n = 0; n < 2000; ++n) {
    const Vec3 x = test::random_in_box(q, Vec3::Constant(-0.9), Vec3::Constant(0.9));
    const Vec3 d = test::random_unit(q) * (q.uniform() * g.voxel_size());
    EXPECT_LE(std::abs(g.density(x) - g.density(x + d)), L * d.norm() + 1e-12);
  }
}

TEST(DensityGradient, ConstantGridIsExactlyZero) {
  const auto g = cube_grid(6, 1.0, [](const Vec3 &) { return 3.7; });
  const Vec3 grad = density_gradient(g, Vec3(0.1, 0.2, -0.3));
  EXPECT_EQ(grad, Vec3::Zero());
}

TEST(DensityGradient, LinearRamp) {
  const auto g = cube_grid(9, 1.0, [](const Vec3 &x) { return 3.0 * (x.x() + 1.0); });
  const Vec3 grad = density_gradient(g, Vec3(0.1, 0.2, -0.3));
  EXPECT_NEAR(grad.x(), 3.0, 1e-6);
  EXPECT_NEAR(grad.y(), 0.0, 1e-6);
  EXPECT_NEAR(grad.z(), 0.0, 1e-6);
}

TEST(DensityGradient, ConeFieldPointsInward) {
  const double R = 0.8;
  const auto g = cube_grid(65, 1.0, [&](const Vec3 &x) { return std::max(0.0, R - x.norm()); });
  const Vec3 grad = density_gradient(g, Vec3(0.4, 0.0, 0.0));
  EXPECT_LT(grad.x(), 0.0);
  EXPECT_LT(std::hypot(grad.y(), grad.z()), 1e-4 * grad.norm());
}

TEST(DensityGradient, OutOfBoundsThrows) {
  const auto g = cube_grid(5, 1.0, [](const Vec3 &) { return 1.0; });
  try {
    density_gradient(g, Vec3(2.0, 0, 0));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfBounds);
  }
}

TEST(Ray, DirectionIsNormalized) {
  const Ray r(Vec3::Zero(), Vec3(3, 4, 0));
  EXPECT_NEAR(r.dir.norm(), 1.0, 1e-15);
}

TEST(Surfel, NormalizeRestoresInvariants) {
  Surfel s;
  s.normal = Vec3(0, 3, 4);
  s.roughness = 2.0;
  s.albedo = Vec3(-0.1, 0.5, 1.3);
  s.visibility.fill(1.5);
  s.normalize();
  EXPECT_NEAR(s.normal.norm(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.roughness, 1.0 - kRoughnessEps);
  EXPECT_EQ(s.albedo, Vec3(0.0, 0.5, 1.0));
  for (double v : s.visibility) EXPECT_EQ(v, 1.0);
}

TEST(Rfv, RoundTripIsExactForFloatValues) {
  Rng rng(9);
  const auto g = grid_from({3, 4, 5}, Vec3(0.5, -1.25, 2.0), 0.125,
                           [&](const Vec3 &) { return static_cast<float>(rng.uniform()); });
  const auto path = std::filesystem::temp_directory_path() / "nref_rt.rfv";
  write_rfv(path, g);
  EXPECT_EQ(std::filesystem::file_size(path), 16 + 12 + 16 + 4 * g.size());
  const auto back = read_rfv(path);
  EXPECT_EQ(back.dims(), g.dims());
  EXPECT_EQ(back.origin(), g.origin());
  EXPECT_EQ(back.voxel_size(), g.voxel_size());
  EXPECT_EQ(back.values(), g.values());
}

TEST(Rfv, RejectsBadMagic) {
  const auto path = std::filesystem::temp_directory_path() / "nref_bad.rfv";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE0000000000000000000000000000000000000000000";
  }
  EXPECT_THROW(read_rfv(path), Error);
}

TEST(Sfl, RoundTrip) {
  SurfelCloud c;
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    Surfel s;
    // multiples of 2^-10 survive the f32 round trip exactly
    s.position = (test::random_unit(rng) * 1024.0).array().round() / 1024.0;
    s.albedo = Vec3(0.25, 0.5, 0.75);
    s.roughness = 0.375;
    s.normal = Vec3(0, 0, 1);
    s.init_normal = Vec3(1, 0, 0);
    s.erratic = i % 2;
    for (int b = 0; b < kVisBins; ++b) {
      s.visibility[b] = b / 64.0;
      s.init_visibility[b] = 1.0 - b / 64.0;
    }
    c.surfels.push_back(s);
  }
  const auto path = std::filesystem::temp_directory_path() / "nref_rt.sfl";
  write_sfl(path, c);
  EXPECT_EQ(std::filesystem::file_size(path), 16 + c.size() * 4 * (3 + 3 + 1 + 3 + 3 + 1 + 128));
  const auto back = read_sfl(path);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back.surfels[i].position, c.surfels[i].position);
    EXPECT_EQ(back.surfels[i].albedo, c.surfels[i].albedo);
    EXPECT_EQ(back.surfels[i].erratic, c.surfels[i].erratic);
    EXPECT_EQ(back.surfels[i].visibility, c.surfels[i].visibility);
    EXPECT_EQ(back.surfels[i].init_visibility, c.surfels[i].init_visibility);
    EXPECT_EQ(back.surfels[i].init_normal, c.surfels[i].init_normal);
  }
}
