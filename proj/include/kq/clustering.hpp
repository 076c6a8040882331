#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace kq {

// Weighted points for k-means. Coordinates are point-major: point i occupies
// coords[i*dim, (i+1)*dim).
struct PointSet {
  std::size_t dim = 0;
  std::vector<float> coords;
  std::vector<double> weights;

  static PointSet unweighted(std::size_t dim, std::vector<float> coords);

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / dim; }
  std::span<const float> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }

  // Throws InputError: ragged coords, weight count mismatch, negative or
  // non-finite weights, or no positive weight.
  void validate() const;
};

struct KMeansOptions {
  int max_iter = 100;
  // Convergence when the largest centroid displacement drops below this.
  double tol = 1e-6;
  // OpenMP threads used by the parallel kernels; 0 keeps the runtime default.
  int workers = 0;
};

struct Clustering {
  std::size_t dim = 0;
  std::vector<double> centroids; // k * dim
  std::vector<std::uint32_t> assignment;
  double inertia = 0.0;
  int iterations = 0;
  bool converged = false;
  // Point-to-centroid distance computations, including initial assignment.
  std::uint64_t distance_evals = 0;
  // Inertia after each assignment step (initial assignment first). Only the
  // serial reference records it.
  std::vector<double> inertia_trace;

  std::size_t k() const { return dim == 0 ? 0 : centroids.size() / dim; }
  std::span<const double> centroid(std::size_t j) const { return {centroids.data() + j * dim, dim}; }
};

// Number of distinct points carrying positive weight.
std::size_t distinct_point_count(const PointSet& ps);

// k-means++ seeding by weighted D^2 sampling. Deterministic in `seed`.
std::vector<double> kmeans_pp_init(const PointSet& ps, std::size_t k, std::uint64_t seed);

// Serial reference Lloyd iteration. Ties go to the lowest centroid index.
Clustering lloyd(const PointSet& ps, std::span<const double> init, const KMeansOptions& opts = {});

// Yinyang k-means: same contract and same result as lloyd(), with group and
// per-point bounds skipping most distance computations. The assignment step
// runs in parallel over points and is independent of the worker count.
Clustering yinyang(const PointSet& ps, std::span<const double> init, const KMeansOptions& opts = {});

double squared_distance(std::span<const float> x, std::span<const double> c);

// Weighted inertia of a fixed assignment, summed in point order.
double weighted_inertia(const PointSet& ps, std::span<const double> centroids,
                        std::span<const std::uint32_t> assignment);

// Runs kmeans_pp_init + yinyang `restarts` times with derived seeds and
// keeps the lowest inertia (earliest restart on ties).
Clustering best_of_restarts(const PointSet& ps, std::size_t k, std::uint64_t seed, int restarts,
                            const KMeansOptions& opts = {});

} // namespace kq
