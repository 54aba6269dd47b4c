#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nref/common.hpp"

namespace nref {

/// A point of the bilateral filter: the surfel it belongs to and its bandwidth-scaled features,
/// so that the kernel is exp(-|v_i - v_j|^2).
struct FeaturePoint {
  std::size_t surfel_index = 0;
  std::vector<double> v;
};

inline double gaussian_kernel(std::span<const double> a, std::span<const double> b) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    d2 += d * d;
  }
  return std::exp(-d2);
}

/// Balanced KD tree over feature vectors (one point per leaf) that draws neighbours roughly in
/// proportion to the Gaussian kernel. Subtree masses are evaluated exactly except where the box
/// bound shows a subtree is negligible next to the mass already found; the reported probability
/// of every draw is exact for the procedure used, so importance weights stay consistent.
class GaussianKdTree {
 public:
  struct Draw {
    std::size_t row = 0;  // point row in the tree
    double kernel = 0.0;  // exact kernel value against the query
    double prob = 0.0;    // probability with which this row was drawn
  };

  /// Scratch buffers reused across queries.
  struct Workspace {
    std::vector<double> mass;
    std::vector<char> pruned;
  };

  GaussianKdTree() = default;
  GaussianKdTree(int dim, std::vector<double> features, std::vector<std::size_t> ids = {}, int epoch = 0);
  explicit GaussianKdTree(const std::vector<FeaturePoint> &points, int epoch = 0);

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  int epoch() const { return epoch_; }
  std::size_t id(std::size_t row) const { return ids_[row]; }
  /// Row holding the given surfel id, or -1.
  long row_of(std::size_t id) const { return id < row_of_.size() ? row_of_[id] : -1; }
  std::span<const double> feature(std::size_t row) const {
    return {features_.data() + row * dim_, static_cast<std::size_t>(dim_)};
  }
  double kernel(std::size_t a, std::size_t b) const { return gaussian_kernel(feature(a), feature(b)); }

  /// m draws for a query vector; the row whose id equals `exclude_id` is never drawn.
  /// Returns fewer draws only if every other point has zero kernel mass.
  void sample(std::span<const double> query, long exclude_id, int m, Rng &rng, std::vector<Draw> &out,
              Workspace &ws) const;

  /// Structural checks: every point in exactly one leaf, boxes contain their points.
  bool check_structure() const;

  double prune_ratio = 1e-6;

 private:
  struct Node {
    int begin = 0, end = 0;  // range in order_
    int left = -1, right = -1;
  };

  int build(int begin, int end);
  double box_dist2(int node, std::span<const double> q) const;
  double visit(int node, std::span<const double> q, long exclude_id, double &found, Workspace &ws) const;

  int dim_ = 0;
  int epoch_ = 0;
  std::vector<double> features_;
  std::vector<std::size_t> ids_;
  std::vector<long> row_of_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  std::vector<double> lo_, hi_;  // per-node boxes, dim_ entries each
};

/// Convenience wrapper matching the usual call shape: draws for the point stored at `row`,
/// excluding itself.
std::vector<GaussianKdTree::Draw> sample_neighbors(const GaussianKdTree &tree, std::size_t row, int m, Rng &rng);

enum class PriorNorm { L1, L2 };

/// Field values per surfel, row-major with `dim` entries per surfel.
struct FieldView {
  std::span<const double> values;
  int dim = 1;
  std::span<const double> row(std::size_t i) const {
    return values.subspan(i * dim, static_cast<std::size_t>(dim));
  }
};

struct PriorOptions {
  int samples = 8;
  PriorNorm norm = PriorNorm::L1;
  int current_epoch = 0;
};

/// Bilateral prior estimate (1/|B|) sum_i [sum_j w_j |f_j - f_i|] / [sum_j w_j] with neighbours j
/// drawn from the tree and w = kernel / probability (so w is nearly constant and the inner term is
/// close to the plain mean over draws). Queries use each batch surfel's own tree features, or
/// `query_features` (|B| x tree.dim()) when given. Gradients (kernel held fixed) are added,
/// multiplied by `grad_scale`, into `grad` (same layout as `field`) when it is non-empty.
/// Throws StaleTree when the tree is more than one epoch old.
double prior_loss(const GaussianKdTree &tree, FieldView field, std::span<const std::size_t> batch,
                  const PriorOptions &opt, Rng &rng, std::span<double> grad = {}, double grad_scale = 1.0,
                  std::span<const double> query_features = {});

inline double smoothness_loss(const GaussianKdTree &tree, FieldView field, std::span<const std::size_t> batch,
                              const PriorOptions &opt, Rng &rng, std::span<double> grad = {},
                              double grad_scale = 1.0) {
  return prior_loss(tree, field, batch, opt, rng, grad, grad_scale);
}

/// Brute-force reference of the same normalized kernel average over all j != i.
double prior_loss_exact(const GaussianKdTree &tree, FieldView field, std::span<const std::size_t> batch,
                        PriorNorm norm = PriorNorm::L1, std::span<const double> query_features = {});

struct KMeansResult {
  std::vector<Vec3> centers;
  std::vector<int> assignment;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; stops when no center moves more than tol.
KMeansResult kmeans(std::span<const Vec3> points, int k, Rng &rng, double tol = 1e-5, int max_iter = 100);

/// Up to `keep_per_cluster` uniformly chosen members of every non-empty cluster, sorted.
std::vector<std::size_t> parsimony_candidates(std::span<const Vec3> albedos, int k, int keep_per_cluster,
                                              Rng &rng);

}  // namespace nref
