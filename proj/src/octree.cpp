#include "nref/octree.hpp"

#include <algorithm>
#include <queue>

namespace nref {

Octree::Octree(const DensityGrid &grid, int max_depth, int leaf_cells)
    : grid_(&grid), max_depth_(std::max(1, max_depth)), leaf_cells_(std::max(1, leaf_cells)) {
  int cells = 1;
  for (int d : grid.dims()) cells = std::max(cells, d - 1);
  int size = 1;
  while (size < cells) size *= 2;
  nodes_.emplace_back();
  build(0, {0, 0, 0}, size, 0);
}

double Octree::vertex_max(std::array<int, 3> lo, int size) const {
  const auto &dims = grid_->dims();
  std::array<int, 3> hi;
  for (int a = 0; a < 3; ++a) {
    if (lo[a] > dims[a] - 2) return 0.0;  // no cells of the grid in this range
    hi[a] = std::min(lo[a] + size, dims[a] - 1);
  }
  double m = 0.0;
  for (int k = lo[2]; k <= hi[2]; ++k) {
    for (int j = lo[1]; j <= hi[1]; ++j) {
      for (int i = lo[0]; i <= hi[0]; ++i) m = std::max(m, grid_->at(i, j, k));
    }
  }
  return m;
}

int Octree::build(int slot, std::array<int, 3> lo, int size, int depth) {
  Node node;
  node.cell_lo = lo;
  node.size = size;
  node.depth = depth;
  node.max_sigma = vertex_max(lo, size);
  const bool leaf = node.max_sigma == 0.0 || size <= leaf_cells_ || depth >= max_depth_;
  if (!leaf) {
    node.first_child = static_cast<int>(nodes_.size());
    nodes_.resize(nodes_.size() + 8);
  }
  nodes_[slot] = node;
  if (!leaf) {
    const int half = size / 2;
    for (int c = 0; c < 8; ++c) {
      const std::array<int, 3> clo = {lo[0] + ((c & 1) ? half : 0), lo[1] + ((c & 2) ? half : 0),
                                      lo[2] + ((c & 4) ? half : 0)};
      build(node.first_child + c, clo, half, depth + 1);
    }
  }
  return slot;
}

Aabb Octree::node_box(const Node &node) const {
  const Vec3 lo(node.cell_lo[0], node.cell_lo[1], node.cell_lo[2]);
  Aabb box{grid_->origin() + grid_->voxel_size() * lo,
           grid_->origin() + grid_->voxel_size() * (lo + Vec3::Constant(node.size))};
  const Aabb b = grid_->bounds();
  box.hi = box.hi.cwiseMin(b.hi);
  box.lo = box.lo.cwiseMin(box.hi);
  return box;
}

const Octree::Node &Octree::leaf_at(const Vec3 &x) const {
  const Node *node = &nodes_.front();
  const Vec3 g = (x - grid_->origin()) / grid_->voxel_size();
  while (!node->is_leaf()) {
    const int half = node->size / 2;
    int c = 0;
    for (int a = 0; a < 3; ++a) {
      if (g[a] >= node->cell_lo[a] + half) c |= (1 << a);
    }
    node = &nodes_[node->first_child + c];
  }
  return *node;
}

void Octree::collect(int index, const Ray &ray, std::vector<std::pair<double, double>> &out) const {
  const Node &node = nodes_[index];
  if (node.max_sigma == 0.0) return;
  const auto span = clip_ray(ray, node_box(node));
  if (!span) return;
  if (node.is_leaf()) {
    out.push_back(*span);
    return;
  }
  for (int c = 0; c < 8; ++c) collect(node.first_child + c, ray, out);
}

std::vector<std::pair<double, double>> Octree::occupied_intervals(const Ray &ray) const {
  std::vector<std::pair<double, double>> spans;
  collect(0, ray, spans);
  std::sort(spans.begin(), spans.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto &s : spans) {
    if (!merged.empty() && s.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, s.second);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

TransmittanceProfile Octree::profile(const Ray &clipped, int n_steps, MarchStats *stats) const {
  n_steps = std::max(2, n_steps);
  TransmittanceProfile p;
  p.ts.resize(n_steps + 1);
  p.T.assign(n_steps + 1, 0.0);
  p.depth.assign(n_steps + 1, 0.0);
  p.sigma_mid.assign(n_steps, 0.0);
  const double tn = clipped.t_near;
  const double dt = (clipped.t_far - tn) / n_steps;
  for (int k = 0; k <= n_steps; ++k) p.ts[k] = tn + k * dt;

  int next = 0;  // segments below this index are settled
  for (const auto &[a, b] : occupied_intervals(clipped)) {
    const int k0 = std::max(next, static_cast<int>(std::floor((a - tn) / dt - 0.5)));
    const int k1 = std::min(n_steps - 1, static_cast<int>(std::ceil((b - tn) / dt - 0.5)));
    for (int k = k0; k <= k1; ++k) {
      const double tm = tn + (k + 0.5) * dt;
      if (tm <= a || tm >= b) continue;  // faces of empty leaves carry zero density
      const Vec3 x = clipped.at(tm);
      p.sigma_mid[k] = grid_->density(x);
      if (stats) {
        ++stats->evaluations;
        if (leaf_at(x).max_sigma == 0.0) ++stats->empty_node_evaluations;
      }
    }
    next = std::max(next, k1 + 1);
  }
  double depth = 0.0;
  for (int k = 0; k < n_steps; ++k) {
    depth += p.sigma_mid[k] * dt;
    p.depth[k + 1] = depth;
    p.T[k + 1] = -std::expm1(-depth);
  }
  return p;
}

double transmittance_fast(const Octree &tree, const Ray &ray, int n_steps, MarchStats *stats) {
  const auto clipped = clip_to_grid(tree.grid(), ray);
  if (!clipped) return 0.0;
  return tree.profile(*clipped, n_steps, stats).total();
}

double transmittance_fast(const Octree &tree, const Ray &ray, const ExtractionConfig &cfg,
                          MarchStats *stats) {
  const auto clipped = clip_to_grid(tree.grid(), ray);
  if (!clipped) return 0.0;
  const int n = quadrature_steps(clipped->t_far - clipped->t_near, tree.grid().voxel_size(), cfg);
  return tree.profile(*clipped, n, stats).total();
}

namespace {

std::optional<std::pair<Ray, TransmittanceProfile>> fast_profile(const Octree &tree, const Ray &ray,
                                                                 const ExtractionConfig &cfg) {
  const auto clipped = clip_to_grid(tree.grid(), ray);
  if (!clipped) return std::nullopt;
  const int n = quadrature_steps(clipped->t_far - clipped->t_near, tree.grid().voxel_size(), cfg);
  auto p = tree.profile(*clipped, n);
  if (!(p.total() >= cfg.tau_hit)) return std::nullopt;
  return std::make_pair(*clipped, std::move(p));
}

}  // namespace

std::optional<SurfaceHit> surface_median_fast(const Octree &tree, const Ray &ray,
                                              const ExtractionConfig &cfg) {
  const auto r = fast_profile(tree, ray, cfg);
  if (!r) return std::nullopt;
  return median_termination(r->second, r->first, cfg.bisection_tol_voxels * tree.grid().voxel_size(),
                            cfg.tau_hit);
}

std::optional<SurfaceHit> surface_expected_fast(const Octree &tree, const Ray &ray,
                                                const ExtractionConfig &cfg) {
  const auto r = fast_profile(tree, ray, cfg);
  if (!r) return std::nullopt;
  return expected_termination(r->second, r->first, cfg.tau_hit);
}

double visibility(const Octree &tree, const Vec3 &x, const Vec3 &w, const VisibilityConfig &cfg) {
  const Ray ray(x + cfg.offset_voxels * tree.grid().voxel_size() * w, w);
  const double T = transmittance_fast(tree, ray, cfg.march);
  return std::clamp(1.0 - T, 0.0, 1.0);
}

VisibilityBins visibility_bins(const Octree &tree, const Vec3 &x, const Vec3 &n, int per_bin,
                               const VisibilityConfig &cfg) {
  VisibilityBins bins{};
  const Frame frame(n);
  const int side = std::max(1, static_cast<int>(std::lround(std::sqrt(per_bin))));
  for (int b = 0; b < kVisBins; ++b) {
    double acc = 0.0;
    for (int i = 0; i < side; ++i) {
      for (int j = 0; j < side; ++j) {
        const Vec3 w = visibility_bin_direction(frame, b, (i + 0.5) / side, (j + 0.5) / side);
        acc += visibility(tree, x, w, cfg);
      }
    }
    bins[b] = acc / (side * side);
  }
  return bins;
}

SurfelIndex::SurfelIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  if (!points_.empty()) build(0, static_cast<int>(points_.size()), 0);
}

SurfelIndex::SurfelIndex(const SurfelCloud &cloud)
    : SurfelIndex([&] {
        std::vector<Vec3> pts;
        pts.reserve(cloud.size());
        for (const auto &s : cloud.surfels) pts.push_back(s.position);
        return pts;
      }()) {}

int SurfelIndex::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 8) return id;
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

namespace {
bool closer(const Neighbor &a, const Neighbor &b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}
}  // namespace

void SurfelIndex::search(int id, const Vec3 &x, std::size_t k, std::vector<Neighbor> &heap) const {
  const Node &node = nodes_[id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const auto idx = static_cast<std::size_t>(order_[i]);
      const Neighbor cand{idx, (points_[idx] - x).norm()};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = x[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, x, k, heap);
  if (heap.size() < k || std::abs(diff) <= heap.front().distance) search(far, x, k, heap);
}

std::vector<Neighbor> SurfelIndex::knn(const Vec3 &x, std::size_t k) const {
  std::vector<Neighbor> heap;
  if (points_.empty() || k == 0) return heap;
  k = std::min(k, points_.size());
  heap.reserve(k + 1);
  search(0, x, k, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

}  // namespace nref
