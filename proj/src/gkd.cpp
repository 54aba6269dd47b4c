#include "nref/gkd.hpp"

#include <numeric>

namespace nref {

GaussianKdTree::GaussianKdTree(int dim, std::vector<double> features, std::vector<std::size_t> ids, int epoch)
    : dim_(dim), epoch_(epoch), features_(std::move(features)), ids_(std::move(ids)) {
  if (dim < 1) throw Error(ErrorKind::Config, "feature dimension must be positive");
  const std::size_t n = features_.size() / dim;
  if (n * dim != features_.size()) throw Error(ErrorKind::Config, "feature array size is not a multiple of dim");
  if (n < 2) throw Error(ErrorKind::TooFewPoints, "Gaussian KD-tree needs at least 2 points");
  for (double f : features_) {
    if (!std::isfinite(f)) throw Error(ErrorKind::Config, "non-finite feature value");
  }
  if (ids_.empty()) {
    ids_.resize(n);
    std::iota(ids_.begin(), ids_.end(), std::size_t{0});
  }
  if (ids_.size() != n) throw Error(ErrorKind::Config, "id count does not match point count");
  row_of_.assign(*std::max_element(ids_.begin(), ids_.end()) + 1, -1);
  for (std::size_t r = 0; r < n; ++r) row_of_[ids_[r]] = static_cast<long>(r);
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * n);
  build(0, static_cast<int>(n));
}

namespace {
int dim_of(const std::vector<FeaturePoint> &points) {
  return points.empty() ? 1 : static_cast<int>(points.front().v.size());
}

std::vector<double> flatten(const std::vector<FeaturePoint> &points) {
  const int dim = dim_of(points);
  std::vector<double> out;
  out.reserve(points.size() * dim);
  for (const auto &p : points) {
    if (static_cast<int>(p.v.size()) != dim) throw Error(ErrorKind::Config, "inconsistent feature dimensions");
    out.insert(out.end(), p.v.begin(), p.v.end());
  }
  return out;
}

std::vector<std::size_t> point_ids(const std::vector<FeaturePoint> &points) {
  std::vector<std::size_t> ids;
  for (const auto &p : points) ids.push_back(p.surfel_index);
  return ids;
}
}  // namespace

GaussianKdTree::GaussianKdTree(const std::vector<FeaturePoint> &points, int epoch)
    : GaussianKdTree(dim_of(points), flatten(points), point_ids(points), epoch) {}

int GaussianKdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1});
  lo_.resize(nodes_.size() * dim_);
  hi_.resize(nodes_.size() * dim_);
  double *lo = &lo_[std::size_t(id) * dim_];
  double *hi = &hi_[std::size_t(id) * dim_];
  std::fill(lo, lo + dim_, std::numeric_limits<double>::infinity());
  std::fill(hi, hi + dim_, -std::numeric_limits<double>::infinity());
  for (int i = begin; i < end; ++i) {
    const auto f = feature(order_[i]);
    for (int d = 0; d < dim_; ++d) {
      lo[d] = std::min(lo[d], f[d]);
      hi[d] = std::max(hi[d], f[d]);
    }
  }
  if (end - begin == 1) return id;
  int axis = 0;
  for (int d = 1; d < dim_; ++d) {
    if (hi[d] - lo[d] > hi[axis] - lo[axis]) axis = d;
  }
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double fa = features_[std::size_t(a) * dim_ + axis], fb = features_[std::size_t(b) * dim_ + axis];
    return fa < fb || (fa == fb && a < b);
  });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double GaussianKdTree::box_dist2(int node, std::span<const double> q) const {
  const double *lo = &lo_[std::size_t(node) * dim_];
  const double *hi = &hi_[std::size_t(node) * dim_];
  double d2 = 0.0;
  for (int d = 0; d < dim_; ++d) {
    const double e = std::max({lo[d] - q[d], 0.0, q[d] - hi[d]});
    d2 += e * e;
  }
  return d2;
}

double GaussianKdTree::visit(int node, std::span<const double> q, long exclude_id, double &found,
                             Workspace &ws) const {
  const Node &nd = nodes_[node];
  if (nd.left < 0) {
    const int row = order_[nd.begin];
    const double k = static_cast<long>(ids_[row]) == exclude_id ? 0.0 : gaussian_kernel(q, feature(row));
    found += k;
    ws.mass[node] = k;
    ws.pruned[node] = 0;
    return k;
  }
  const double bound = (nd.end - nd.begin) * std::exp(-box_dist2(node, q));
  if (node != 0 && found > 0.0 && bound < prune_ratio * found) {
    ws.mass[node] = bound;
    ws.pruned[node] = 1;
    return bound;
  }
  int first = nd.left, second = nd.right;
  if (box_dist2(second, q) < box_dist2(first, q)) std::swap(first, second);
  const double m = visit(first, q, exclude_id, found, ws) + visit(second, q, exclude_id, found, ws);
  ws.mass[node] = m;
  ws.pruned[node] = 0;
  return m;
}

void GaussianKdTree::sample(std::span<const double> query, long exclude_id, int m, Rng &rng,
                            std::vector<Draw> &out, Workspace &ws) const {
  out.clear();
  if (ws.mass.size() < nodes_.size()) {
    ws.mass.resize(nodes_.size());
    ws.pruned.resize(nodes_.size());
  }
  double found = 0.0;
  const double total = visit(0, query, exclude_id, found, ws);
  if (!(total > 0.0)) return;
  const auto bound_of = [&](int node) {
    const Node &nd = nodes_[node];
    if (nd.left < 0) {
      const int row = order_[nd.begin];
      return static_cast<long>(ids_[row]) == exclude_id ? 0.0 : gaussian_kernel(query, feature(row));
    }
    return (nd.end - nd.begin) * std::exp(-box_dist2(node, query));
  };
  for (int s = 0; s < m; ++s) {
    int node = 0;
    double prob = 1.0;
    bool exact = true;
    while (nodes_[node].left >= 0) {
      if (exact && ws.pruned[node]) exact = false;
      const Node &nd = nodes_[node];
      double ml = exact ? ws.mass[nd.left] : bound_of(nd.left);
      double mr = exact ? ws.mass[nd.right] : bound_of(nd.right);
      if (!(ml + mr > 0.0)) {
        ml = nodes_[nd.left].end - nodes_[nd.left].begin;
        mr = nodes_[nd.right].end - nodes_[nd.right].begin;
      }
      const double u = rng.uniform() * (ml + mr);
      if (u < ml) {
        prob *= ml / (ml + mr);
        node = nd.left;
      } else {
        prob *= mr / (ml + mr);
        node = nd.right;
      }
    }
    const int row = order_[nodes_[node].begin];
    if (static_cast<long>(ids_[row]) == exclude_id) {
      --s;  // only reachable through underflowed bounds; redraw
      continue;
    }
    out.push_back({static_cast<std::size_t>(row), gaussian_kernel(query, feature(row)), prob});
  }
}

bool GaussianKdTree::check_structure() const {
  std::vector<int> seen(size(), 0);
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node &nd = nodes_[n];
    for (int i = nd.begin; i < nd.end; ++i) {
      const auto f = feature(order_[i]);
      for (int d = 0; d < dim_; ++d) {
        if (f[d] < lo_[n * dim_ + d] || f[d] > hi_[n * dim_ + d]) return false;
      }
    }
    if (nd.left < 0) {
      if (nd.end - nd.begin != 1) return false;
      ++seen[order_[nd.begin]];
    } else if (nodes_[nd.left].begin != nd.begin || nodes_[nd.right].end != nd.end ||
               nodes_[nd.left].end != nodes_[nd.right].begin) {
      return false;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
}

std::vector<GaussianKdTree::Draw> sample_neighbors(const GaussianKdTree &tree, std::size_t row, int m, Rng &rng) {
  std::vector<GaussianKdTree::Draw> out;
  GaussianKdTree::Workspace ws;
  tree.sample(tree.feature(row), static_cast<long>(tree.id(row)), m, rng, out, ws);
  return out;
}

namespace {

double residual_norm(std::span<const double> a, std::span<const double> b, PriorNorm norm) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = b[k] - a[k];
    acc += norm == PriorNorm::L1 ? std::abs(d) : d * d;
  }
  return norm == PriorNorm::L1 ? acc : std::sqrt(acc);
}

std::span<const double> query_of(const GaussianKdTree &tree, std::span<const double> query_features,
                                 std::size_t b, std::size_t id) {
  if (!query_features.empty()) {
    return query_features.subspan(b * tree.dim(), static_cast<std::size_t>(tree.dim()));
  }
  const long row = tree.row_of(id);
  if (row < 0) throw Error(ErrorKind::Config, "batch surfel is not part of the prior tree");
  return tree.feature(static_cast<std::size_t>(row));
}

}  // namespace

double prior_loss(const GaussianKdTree &tree, FieldView field, std::span<const std::size_t> batch,
                  const PriorOptions &opt, Rng &rng, std::span<double> grad, double grad_scale,
                  std::span<const double> query_features) {
  if (opt.current_epoch - tree.epoch() > 1) {
    throw Error(ErrorKind::StaleTree, "tree built at epoch " + std::to_string(tree.epoch()) +
                                          ", current epoch " + std::to_string(opt.current_epoch));
  }
  if (batch.empty()) return 0.0;
  const std::uint64_t base = rng();
  const long nb = static_cast<long>(batch.size());
  std::vector<std::vector<GaussianKdTree::Draw>> draws(batch.size());
#pragma omp parallel
  {
    GaussianKdTree::Workspace ws;
#pragma omp for schedule(static)
    for (long b = 0; b < nb; ++b) {
      Rng local = Rng::stream(base, static_cast<std::uint64_t>(b));
      const std::size_t id = batch[b];
      tree.sample(query_of(tree, query_features, b, id), static_cast<long>(id), opt.samples, local, draws[b], ws);
    }
  }
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto &ds = draws[b];
    if (ds.empty()) continue;
    const std::size_t i = batch[b];
    const auto fi = field.row(i);
    double wsum = 0.0, acc = 0.0;
    for (const auto &d : ds) {
      const double w = d.kernel / d.prob;
      wsum += w;
      acc += w * residual_norm(fi, field.row(tree.id(d.row)), opt.norm);
    }
    if (!(wsum > 0.0)) continue;
    loss += inv_b * acc / wsum;
    if (grad.empty()) continue;
    for (const auto &d : ds) {
      const std::size_t j = tree.id(d.row);
      const auto fj = field.row(j);
      const double c = grad_scale * inv_b * (d.kernel / d.prob) / wsum;
      const double len = opt.norm == PriorNorm::L2 ? residual_norm(fi, fj, PriorNorm::L2) : 1.0;
      for (int k = 0; k < field.dim; ++k) {
        const double diff = fj[k] - fi[k];
        double g;
        if (opt.norm == PriorNorm::L1) {
          g = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        } else {
          g = len > 0.0 ? diff / len : 0.0;
        }
        grad[j * field.dim + k] += c * g;
        grad[i * field.dim + k] -= c * g;
      }
    }
  }
  return loss;
}

double prior_loss_exact(const GaussianKdTree &tree, FieldView field, std::span<const std::size_t> batch,
                        PriorNorm norm, std::span<const double> query_features) {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t i = batch[b];
    const auto q = query_of(tree, query_features, b, i);
    double ksum = 0.0, acc = 0.0;
    for (std::size_t r = 0; r < tree.size(); ++r) {
      if (tree.id(r) == i) continue;
      const double k = gaussian_kernel(q, tree.feature(r));
      ksum += k;
      acc += k * residual_norm(field.row(i), field.row(tree.id(r)), norm);
    }
    if (ksum > 0.0) loss += acc / ksum;
  }
  return loss / static_cast<double>(batch.size());
}

KMeansResult kmeans(std::span<const Vec3> points, int k, Rng &rng, double tol, int max_iter) {
  if (k < 1 || points.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::Config, "k-means needs 1 <= K <= number of points");
  }
  KMeansResult res;
  const std::size_t n = points.size();
  // k-means++ seeding
  res.centers.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(res.centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3 &c : res.centers) best = std::min(best, (points[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      res.centers.push_back(points[rng.below(n)]);
      continue;
    }
    double u = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
    res.centers.push_back(points[pick]);
  }
  res.assignment.assign(n, 0);
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points[i] - res.centers[c]).squaredNorm();
        if (d < bd) bd = d, best = c;
      }
      res.assignment[i] = best;
    }
    std::vector<Vec3> sum(k, Vec3::Zero());
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[res.assignment[i]] += points[i];
      ++count[res.assignment[i]];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      const Vec3 next = sum[c] / count[c];
      shift = std::max(shift, (next - res.centers[c]).norm());
      res.centers[c] = next;
    }
    if (shift <= tol) break;
  }
  res.iterations = std::min(res.iterations, max_iter);
  return res;
}

std::vector<std::size_t> parsimony_candidates(std::span<const Vec3> albedos, int k, int keep_per_cluster,
                                              Rng &rng) {
  const KMeansResult km = kmeans(albedos, k, rng);
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < albedos.size(); ++i) members[km.assignment[i]].push_back(i);
  std::vector<std::size_t> out;
  for (auto &m : members) {
    const std::size_t keep = std::min<std::size_t>(keep_per_cluster, m.size());
    for (std::size_t s = 0; s < keep; ++s) {
      std::swap(m[s], m[s + rng.below(m.size() - s)]);
      out.push_back(m[s]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nref
