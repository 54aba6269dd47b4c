#pragma once

#include <vector>

#include "nref/field.hpp"
#include "nref/surface.hpp"

namespace nref {

/// Density-evaluation counters for instrumented marches.
struct MarchStats {
  long evaluations = 0;
  long empty_node_evaluations = 0;
};

/// Max-density octree over the cells of a DensityGrid. Nodes whose covered vertices are all zero
/// are leaves, so rays can skip them without evaluating density. The tree refers to the grid it
/// was built from; the grid must outlive it.
class Octree {
 public:
  struct Node {
    std::array<int, 3> cell_lo{};  // first covered cell
    int size = 0;                  // cells per axis (power of two)
    int depth = 0;
    int first_child = -1;          // index of 8 consecutive children, or -1 for a leaf
    double max_sigma = 0.0;

    bool is_leaf() const { return first_child < 0; }
  };

  Octree() = default;
  Octree(const DensityGrid &grid, int max_depth = 8, int leaf_cells = 4);

  const DensityGrid &grid() const { return *grid_; }
  const std::vector<Node> &nodes() const { return nodes_; }
  const Node &root() const { return nodes_.front(); }
  Aabb node_box(const Node &node) const;

  /// Leaf containing x (root when x is outside the tree).
  const Node &leaf_at(const Vec3 &x) const;

  /// Sorted, merged parametric intervals where the ray crosses non-empty leaves.
  std::vector<std::pair<double, double>> occupied_intervals(const Ray &ray) const;

  /// Dense profile over the grid-clipped ray with the same uniform segments as
  /// transmittance_profile; segments whose midpoint lies in empty space are never evaluated.
  TransmittanceProfile profile(const Ray &clipped, int n_steps, MarchStats *stats = nullptr) const;

 private:
  int build(int slot, std::array<int, 3> lo, int size, int depth);
  double vertex_max(std::array<int, 3> lo, int size) const;
  void collect(int node, const Ray &ray, std::vector<std::pair<double, double>> &out) const;

  const DensityGrid *grid_ = nullptr;
  int max_depth_ = 8;
  int leaf_cells_ = 4;
  std::vector<Node> nodes_;
};

inline Octree build_octree(const DensityGrid &grid, int max_depth = 8) { return Octree(grid, max_depth); }

/// Accumulated opacity at the far end of the grid-clipped ray (0 for rays missing the grid).
double transmittance_fast(const Octree &tree, const Ray &ray, int n_steps, MarchStats *stats = nullptr);
double transmittance_fast(const Octree &tree, const Ray &ray, const ExtractionConfig &cfg = {},
                          MarchStats *stats = nullptr);

/// Median-opacity surface point along a ray via the octree; nullopt when opacity < tau_hit.
std::optional<SurfaceHit> surface_median_fast(const Octree &tree, const Ray &ray,
                                              const ExtractionConfig &cfg = {});

/// Expected-termination point along a ray via the octree; nullopt when opacity < tau_hit.
std::optional<SurfaceHit> surface_expected_fast(const Octree &tree, const Ray &ray,
                                                const ExtractionConfig &cfg = {});

struct VisibilityConfig {
  double offset_voxels = 2.0;  // self-occlusion offset along the light direction
  ExtractionConfig march;
};

/// Fraction of far-field light arriving at x from direction w: exp(-optical depth) along
/// (x + offset * w, w) up to the grid boundary.
double visibility(const Octree &tree, const Vec3 &x, const Vec3 &w, const VisibilityConfig &cfg = {});

/// Per-bin octree visibility over the hemisphere around n, averaging `per_bin` stratified directions.
VisibilityBins visibility_bins(const Octree &tree, const Vec3 &x, const Vec3 &n, int per_bin = 1,
                               const VisibilityConfig &cfg = {});

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exact k-nearest-neighbour index over 3D points (kd-tree).
class SurfelIndex {
 public:
  SurfelIndex() = default;
  explicit SurfelIndex(std::vector<Vec3> points);
  explicit SurfelIndex(const SurfelCloud &cloud);

  std::size_t size() const { return points_.size(); }
  const Vec3 &point(std::size_t i) const { return points_[i]; }

  /// k nearest points sorted by distance (ties by index).
  std::vector<Neighbor> knn(const Vec3 &x, std::size_t k) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Vec3 &x, std::size_t k, std::vector<Neighbor> &heap) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

inline std::vector<Neighbor> knn_surfels(const SurfelIndex &index, const Vec3 &x, std::size_t k) {
  return index.knn(x, k);
}

}  // namespace nref
