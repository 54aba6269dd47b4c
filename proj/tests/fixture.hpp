#pragma once

#include <string>

#include "nref/decompose.hpp"
#include "nref/scene.hpp"

namespace nref::test {

inline std::string fixture_path(const std::string &name) { return std::string(NREF_SOURCE_DIR) + "/fixtures/" + name; }

/// Same view direction and field of view at a different pixel count.
inline Camera resized(Camera c, int width, int height) {
  const double sx = static_cast<double>(width) / c.width, sy = static_cast<double>(height) / c.height;
  c.fx *= sx;
  c.cx *= sx;
  c.fy *= sy;
  c.cy *= sy;
  c.width = width;
  c.height = height;
  return c;
}

/// A scene baked to a grid with in-memory reference views (the fixture files without the disk).
struct SceneFixture {
  SceneDesc desc;
  DensityGrid grid;
  Octree tree;
  std::vector<TrainingView> views;

  SceneFixture(SceneDesc d, int dims, int image_size = 0, int samples = 0)
      : desc(std::move(d)), grid(bake_scene(desc, dims)), tree(grid) {
    if (samples > 0) desc.reference_samples = samples;
    for (std::size_t i = 0; i < desc.cameras.size(); ++i) {
      const Camera cam = image_size > 0 ? resized(desc.cameras[i], image_size, image_size) : desc.cameras[i];
      const auto ref = render_reference(desc, cam, desc.env, desc.reference_samples, Rng::stream(desc.seed, 1, i)());
      views.push_back({cam, ref.color, ref.mask});
    }
  }
  SceneFixture(const SceneFixture &) = delete;
  SceneFixture &operator=(const SceneFixture &) = delete;
};

/// Config with a short schedule for unit-scale runs.
inline Config short_config(int stage_a, int warmup, int joint, std::uint64_t seed = 1) {
  Config cfg;
  cfg.schedule.stage_a_epochs = stage_a;
  cfg.schedule.warmup_epochs = warmup;
  cfg.schedule.joint_epochs = joint;
  cfg.seed = seed;
  return cfg;
}

}  // namespace nref::test
