#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kq/clustering.hpp"

namespace kq::detail {

inline double sq_dist(const float* x, const double* c, std::size_t dim) {
  double s = 0.0;
  for (std::size_t e = 0; e < dim; ++e) {
    const double d = static_cast<double>(x[e]) - c[e];
    s += d * d;
  }
  return s;
}

// Nearest centroid by squared distance; ties go to the lowest index.
inline std::uint32_t nearest(const float* x, const double* centroids, std::size_t k, std::size_t dim,
                             double* best_d2) {
  std::uint32_t best = 0;
  double bd = sq_dist(x, centroids, dim);
  for (std::size_t j = 1; j < k; ++j) {
    const double d = sq_dist(x, centroids + j * dim, dim);
    if (d < bd) {
      bd = d;
      best = static_cast<std::uint32_t>(j);
    }
  }
  *best_d2 = bd;
  return best;
}

struct UpdateResult {
  double max_shift = 0.0;
  std::uint64_t distance_evals = 0;
};

// Replaces `centroids` by the weighted means of their assigned points, summed
// in point order. A centroid with zero assigned weight is moved onto the
// point with the largest weighted squared distance to its current centroid
// (lowest point index on ties, each point used at most once). `shifts`
// receives each centroid's displacement.
UpdateResult update_centroids(const PointSet& ps, std::span<const std::uint32_t> assignment,
                              std::vector<double>& centroids, std::vector<double>& shifts);

// Validates inputs shared by lloyd() and yinyang(); returns k.
std::size_t check_kmeans_inputs(const PointSet& ps, std::span<const double> init, const KMeansOptions& opts);

int thread_count(int workers);

} // namespace kq::detail
