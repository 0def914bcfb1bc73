#ifndef PCHECK_CLUSTER_HPP
#define PCHECK_CLUSTER_HPP

// Seeded k-means++ over unit vectors with silhouette-based choice of k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pcheck/error.hpp"
#include "pcheck/parallel.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// 1 - cos(a, b); a zero vector is at distance 1 from everything.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("vector dimensions differ");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

inline Vec l2_normalized(Vec v) {
  const double n = norm(v);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return v;
}

struct UserClustering {
  std::size_t k = 0;
  std::map<std::string, std::size_t> assignments;
  std::vector<Vec> centroids;
  double silhouette = 0.0;
  std::uint64_t seed = 0;
  // All embeddings coincide; everything sits in cluster 0.
  bool degenerate = false;
  // Mean silhouette per tried k.
  std::map<std::size_t, double> silhouette_by_k;

  std::vector<std::string> members(std::size_t cluster) const {
    std::vector<std::string> out;
    for (const auto& [id, c] : assignments) {
      if (c == cluster) out.push_back(id);
    }
    return out;
  }
  std::size_t dimension() const { return centroids.empty() ? 0 : centroids.front().size(); }
};

struct KMeansResult {
  std::vector<std::size_t> labels;
  std::vector<Vec> centroids;
  double inertia = 0.0;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline std::size_t nearest(const std::vector<Vec>& centroids, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

/// Index drawn with probability proportional to `weights`; uniform when they
/// are all zero.
inline std::size_t weighted_pick(const std::vector<double>& weights, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    return std::min(weights.size() - 1, static_cast<std::size_t>(u * static_cast<double>(weights.size())));
  }
  double target = u * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return i;
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

/// Relabels clusters in order of their first member.
inline void canonicalize(KMeansResult& r) {
  const std::size_t k = r.centroids.size();
  std::vector<std::size_t> remap(k, k);
  std::size_t next = 0;
  for (std::size_t l : r.labels) {
    if (remap[l] == k) remap[l] = next++;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (remap[c] == k) remap[c] = next++;
  }
  std::vector<Vec> centroids(k);
  for (std::size_t c = 0; c < k; ++c) centroids[remap[c]] = std::move(r.centroids[c]);
  r.centroids = std::move(centroids);
  for (auto& l : r.labels) l = remap[l];
}

inline KMeansResult lloyd(const std::vector<Vec>& points, std::size_t k, std::mt19937_64& rng,
                          int max_iter) {
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  const auto uniform = [&rng] { return unit_double(rng()); };

  // k-means++ seeding.
  std::vector<Vec> centroids;
  centroids.push_back(points[std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)))]);
  std::vector<double> d2(n);
  while (centroids.size() < k) {
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = squared_distance(points[i], centroids[nearest(centroids, points[i])]);
    }
    centroids.push_back(points[weighted_pick(d2, uniform())]);
  }

  std::vector<std::size_t> labels(n, 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(centroids, points[i]);
      if (c != labels[i]) {
        labels[i] = c;
        changed = true;
      }
    }
    std::vector<Vec> sums(k, Vec(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[labels[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move it onto the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (counts[labels[i]] <= 1) continue;
          const double d = squared_distance(points[i], centroids[labels[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        --counts[labels[far]];
        labels[far] = c;
        counts[c] = 1;
        centroids[c] = points[far];
        changed = true;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) {
        centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
    if (!changed) break;
  }
  KMeansResult r{std::move(labels), std::move(centroids), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    r.inertia += squared_distance(points[i], r.centroids[r.labels[i]]);
  }
  return r;
}

}  // namespace detail

/// Best of `n_init` seeded k-means++ runs (lowest inertia, earliest on ties),
/// with clusters relabeled by first member.
inline KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed,
                           int n_init = 10, int max_iter = 300) {
  if (points.empty()) throw ValidationError("kmeans needs at least one point");
  if (k == 0 || k > points.size()) {
    throw ValidationError("kmeans: k=" + std::to_string(k) + " invalid for " +
                          std::to_string(points.size()) + " points");
  }
  std::mt19937_64 rng(derive_seed(seed, "kmeans", k));
  std::optional<KMeansResult> best;
  for (int run = 0; run < std::max(1, n_init); ++run) {
    KMeansResult r = detail::lloyd(points, k, rng, max_iter);
    if (!best || r.inertia < best->inertia) best = std::move(r);
  }
  detail::canonicalize(*best);
  return std::move(*best);
}

/// Mean silhouette under cosine distance. Points in singleton clusters
/// contribute 0; fewer than two non-empty clusters gives 0.
inline double mean_silhouette(const std::vector<Vec>& points, const std::vector<std::size_t>& labels,
                              std::size_t k) {
  const std::size_t n = points.size();
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t l : labels) ++sizes[l];
  if (std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }) < 2) {
    return 0.0;
  }
  double total = 0.0;
  std::vector<double> sum_to(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] <= 1) continue;
    std::fill(sum_to.begin(), sum_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum_to[labels[j]] += cosine_distance(points[i], points[j]);
    }
    const double a = sum_to[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c == labels[i] || sizes[c] == 0) continue;
      b = std::min(b, sum_to[c] / static_cast<double>(sizes[c]));
    }
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

struct ClusterOptions {
  std::size_t k_min = 2;
  std::size_t k_max = 12;
  std::uint64_t seed = 0;
  int n_init = 10;
  std::size_t concurrency = 1;
};

/// Clusters named vectors (L2-normalized first). k is chosen from
/// [k_min, min(k_max, n)] by the highest mean silhouette, smaller k on ties.
inline UserClustering cluster_vectors(const std::vector<std::string>& ids, std::vector<Vec> vectors,
                                      const ClusterOptions& opts = {}) {
  if (ids.size() != vectors.size()) throw ValidationError("ids and vectors differ in count");
  if (opts.k_min < 1 || opts.k_min > opts.k_max) {
    throw ValidationError("k range must satisfy 1 <= k_min <= k_max");
  }
  const std::size_t n = ids.size();
  if (n < opts.k_min) {
    throw ValidationError("cannot cluster " + std::to_string(n) + " users with k_min=" +
                          std::to_string(opts.k_min));
  }
  for (auto& v : vectors) {
    if (v.size() != vectors.front().size() || v.empty()) {
      throw ValidationError("embeddings must share a non-zero dimension");
    }
    v = l2_normalized(std::move(v));
  }

  UserClustering out;
  out.seed = opts.seed;
  bool identical = true;
  for (std::size_t i = 1; i < n && identical; ++i) identical = vectors[i] == vectors[0];
  if (identical) {
    out.k = opts.k_min;
    out.degenerate = true;
    out.centroids.assign(out.k, vectors.front());
    for (const auto& id : ids) out.assignments[id] = 0;
    return out;
  }

  const std::size_t k_hi = std::min(opts.k_max, n);
  const std::size_t tries = k_hi >= opts.k_min ? k_hi - opts.k_min + 1 : 0;
  std::vector<KMeansResult> results(tries);
  std::vector<double> scores(tries);
  parallel_for(tries, opts.concurrency, [&](std::size_t t) {
    const std::size_t k = opts.k_min + t;
    results[t] = kmeans(vectors, k, opts.seed, opts.n_init);
    scores[t] = mean_silhouette(vectors, results[t].labels, k);
  });
  std::size_t best = 0;
  for (std::size_t t = 0; t < tries; ++t) {
    out.silhouette_by_k[opts.k_min + t] = scores[t];
    if (scores[t] > scores[best]) best = t;
  }
  out.k = opts.k_min + best;
  out.silhouette = scores[best];
  out.centroids = std::move(results[best].centroids);
  for (std::size_t i = 0; i < n; ++i) out.assignments[ids[i]] = results[best].labels[i];
  return out;
}

}  // namespace pcheck

#endif  // PCHECK_CLUSTER_HPP
