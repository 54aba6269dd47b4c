// nref: bake fixtures, extract surfels, decompose a density grid + views, render results.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nref/decompose.hpp"
#include "nref/scene.hpp"

namespace fs = std::filesystem;
using namespace nref;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string config;
};

Config make_config(const Common &c) {
  Config cfg = c.config.empty() ? Config{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

Vec3 parse_rgb(const std::string &text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() != 3) throw Error(ErrorKind::Usage, "expected r,g,b or a single value: " + text);
  return {v[0], v[1], v[2]};
}

struct RenderArgs {
  std::string surfels, env, camera, grid, out, png;
  double exposure = 1.0;
};

void add_render_args(CLI::App *cmd, RenderArgs &a, const char *env_help) {
  cmd->add_option("--surfels", a.surfels, "SFL1 surfel file")->required();
  cmd->add_option("--env", a.env, env_help)->required();
  cmd->add_option("--camera", a.camera, "camera JSON")->required();
  cmd->add_option("--grid", a.grid, "RFV1 density grid used to locate the surface")->required();
  cmd->add_option("--out", a.out, "output PFM")->required();
  cmd->add_option("--png", a.png, "optional tone-mapped PNG preview");
  cmd->add_option("--exposure", a.exposure, "PNG exposure multiplier");
}

void write_render(const RenderArgs &a, const RenderedImage &img) {
  write_pfm(a.out, img.color);
  if (!a.png.empty()) write_png(a.png, img.color, a.exposure);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Reflectance decomposition of volumetric radiance fields"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "seed overriding config/scene seeds");
  app.add_option("--threads", common.threads, "cap on worker threads (0 = default)");

  auto *bake = app.add_subcommand("bake", "bake a scene description into a fixture directory");
  std::string scene_path, out_dir;
  int dims = 64;
  bake->add_option("--scene", scene_path, "scene JSON")->required();
  bake->add_option("--dims", dims, "grid samples along the longest axis")->check(CLI::Range(2, 1024));
  bake->add_option("--out", out_dir, "output directory")->required();

  auto *extract = app.add_subcommand("extract-surface", "extract initial surfels from a grid and cameras");
  std::string grid_path, cameras_path, out_path;
  extract->add_option("--grid", grid_path, "RFV1 grid")->required();
  extract->add_option("--cameras", cameras_path, "cameras JSON (array)")->required();
  extract->add_option("--out", out_path, "output SFL1 file")->required();
  extract->add_option("--config", common.config, "config JSON");

  auto *decompose = app.add_subcommand("decompose", "optimize surfel reflectance and environment lighting");
  std::string views_dir;
  decompose->add_option("--grid", grid_path, "RFV1 grid")->required();
  decompose->add_option("--views", views_dir, "directory with cameras.json and view_XXX.pfm")->required();
  decompose->add_option("--config", common.config, "config JSON");
  decompose->add_option("--out", out_dir, "output directory")->required();
  bool quiet = false;
  decompose->add_flag("--quiet", quiet, "no per-epoch progress on stderr");

  RenderArgs render_args, relight_args, edit_args;
  auto *render = app.add_subcommand("render", "render surfels under their estimated environment");
  add_render_args(render, render_args, "environment cross PFM");
  render->add_option("--config", common.config, "config JSON");

  auto *relight = app.add_subcommand("relight", "render surfels under a new environment");
  add_render_args(relight, relight_args, "new environment cross PFM");
  relight->add_option("--config", common.config, "config JSON");

  auto *edit = app.add_subcommand("edit-material", "render after overriding surfel materials");
  add_render_args(edit, edit_args, "environment cross PFM");
  edit->add_option("--config", common.config, "config JSON");
  std::string set_albedo, scale_albedo;
  std::optional<double> set_roughness;
  edit->add_option("--albedo", set_albedo, "replace albedo (r,g,b)");
  edit->add_option("--albedo-scale", scale_albedo, "multiply albedo (r,g,b)");
  edit->add_option("--roughness", set_roughness, "replace roughness")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  if (edit->parsed() && set_albedo.empty() && scale_albedo.empty() && !set_roughness) {
    std::cerr << "error: edit-material needs --albedo, --albedo-scale or --roughness\n\n" << edit->help();
    return 1;
  }

#ifdef _OPENMP
  if (common.threads > 0) omp_set_num_threads(common.threads);
#endif

  try {
    if (bake->parsed()) {
      SceneDesc desc = load_scene(scene_path);
      if (common.seed) desc.seed = *common.seed;
      const DensityGrid grid = bake_scene(desc, dims);
      write_fixture(out_dir, desc, grid);
    } else if (extract->parsed()) {
      const Config cfg = make_config(common);
      const DensityGrid grid = read_rfv(grid_path);
      const Octree tree(grid, cfg.octree_max_depth, cfg.octree_leaf_cells);
      std::vector<TrainingView> views;
      for (const Camera &c : read_cameras(cameras_path)) views.push_back({c, Image(c.width, c.height), Image()});
      write_sfl(out_path, initialize_surfels(tree, views, cfg).cloud);
    } else if (decompose->parsed()) {
      const Config cfg = make_config(common);
      const DensityGrid grid = read_rfv(grid_path);
      const Octree tree(grid, cfg.octree_max_depth, cfg.octree_leaf_cells);
      const auto views = load_views(views_dir);
      const auto progress = [&](const EpochMetrics &m) {
        if (quiet) return;
        std::fprintf(stderr, "epoch %4d %-17s total %.5f  R %.5f  C %.5f  P %.5f  PSNR %.2f\n", m.epoch,
                     stage_name(m.stage), m.loss.total, m.loss.render, m.loss.commitment, m.loss.prior, m.psnr);
      };
      const Decomposition result = run_decomposition(tree, views, cfg, progress);
      fs::create_directories(out_dir);
      write_sfl(fs::path(out_dir) / "surfels.sfl", result.cloud);
      write_env_cross(fs::path(out_dir) / "env.pfm", result.env);
      write_metrics_csv(fs::path(out_dir) / "metrics.csv", result.log);
    } else {
      const RenderArgs &a = render->parsed() ? render_args : relight->parsed() ? relight_args : edit_args;
      const Config cfg = make_config(common);
      const RenderConfig rc = render_config(cfg);
      const DensityGrid grid = read_rfv(a.grid);
      const Octree tree(grid, cfg.octree_max_depth, cfg.octree_leaf_cells);
      const SurfelCloud cloud = read_sfl(a.surfels);
      if (cloud.empty()) throw Error(ErrorKind::NoSurface, "surfel file is empty");
      const SurfelIndex index(cloud);
      const Camera camera = read_camera(a.camera);
      const EnvCubeMap env = read_env_cross(a.env);
      if (render->parsed()) {
        write_render(a, render_image(camera, tree, cloud, index, env, rc));
      } else if (relight->parsed()) {
        write_render(a, nref::relight(camera, tree, cloud, index, env, rc));
      } else {
        const std::optional<Vec3> albedo = set_albedo.empty() ? std::nullopt : std::optional(parse_rgb(set_albedo));
        const Vec3 scale = scale_albedo.empty() ? Vec3::Ones() : parse_rgb(scale_albedo);
        write_render(a, edit_material(camera, tree, cloud, index, env, rc, [&](Surfel &sf) {
                       if (albedo) sf.albedo = *albedo;
                       sf.albedo = sf.albedo.cwiseProduct(scale);
                       if (set_roughness) sf.roughness = *set_roughness;
                     }));
      }
    }
  } catch (const Error &e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? 1 : 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
