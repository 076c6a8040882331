#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <omp.h>

#include "clustering_detail.hpp"
#include "kq/error.hpp"
#include "kq/random.hpp"

namespace kq {

PointSet PointSet::unweighted(std::size_t dim, std::vector<float> coords) {
  PointSet ps{dim, std::move(coords), {}};
  ps.weights.assign(ps.size(), 1.0);
  return ps;
}

void PointSet::validate() const {
  if (dim == 0) throw InputError("point set has zero dimension");
  if (coords.size() % dim != 0) throw InputError("point coordinates are not a multiple of the dimension");
  if (weights.size() != size()) throw InputError("weight count does not match point count");
  if (size() == 0) throw InputError("empty point set");
  bool any_positive = false;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InputError("weights must be finite and non-negative");
    any_positive |= w > 0.0;
  }
  if (!any_positive) throw InputError("point set has no positive weight");
  for (float v : coords)
    if (!std::isfinite(v)) throw InputError("non-finite point coordinate");
}

double squared_distance(std::span<const float> x, std::span<const double> c) {
  return detail::sq_dist(x.data(), c.data(), x.size());
}

std::size_t distinct_point_count(const PointSet& ps) {
  std::vector<std::size_t> idx;
  idx.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.weights[i] > 0.0) idx.push_back(i);
  const std::size_t dim = ps.dim;
  auto less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(ps.coords.begin() + a * dim, ps.coords.begin() + (a + 1) * dim,
                                        ps.coords.begin() + b * dim, ps.coords.begin() + (b + 1) * dim);
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (i == 0 || less(idx[i - 1], idx[i])) ++distinct;
  return distinct;
}

std::vector<double> kmeans_pp_init(const PointSet& ps, std::size_t k, std::uint64_t seed) {
  ps.validate();
  if (k == 0) throw InputError("k must be at least 1");
  const std::size_t distinct = distinct_point_count(ps);
  if (k > distinct)
    throw InputError("k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) + " distinct points");

  const std::size_t n = ps.size(), dim = ps.dim;
  std::mt19937_64 eng(seed);
  std::vector<double> centroids;
  centroids.reserve(k * dim);

  auto sample = [&](const std::vector<double>& mass) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    const double target = uniform01(eng) * total;
    double cum = 0.0;
    std::size_t last_positive = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (mass[i] <= 0.0) continue;
      last_positive = i;
      cum += mass[i];
      if (cum > target) return i;
    }
    return last_positive;
  };
  auto push_point = [&](std::size_t i) {
    for (std::size_t e = 0; e < dim; ++e) centroids.push_back(ps.coords[i * dim + e]);
  };

  std::vector<double> mass(ps.weights);
  push_point(sample(mass));
  const auto ni = static_cast<std::ptrdiff_t>(n);
  for (std::size_t c = 1; c < k; ++c) {
    const double* last = centroids.data() + (c - 1) * dim;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ni; ++i) {
      const double w = ps.weights[i];
      if (w <= 0.0) continue;
      const double d = w * detail::sq_dist(ps.coords.data() + i * dim, last, dim);
      if (c == 1 || d < mass[i]) mass[i] = d;
    }
    push_point(sample(mass));
  }
  return centroids;
}

double weighted_inertia(const PointSet& ps, std::span<const double> centroids,
                        std::span<const std::uint32_t> assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    s += ps.weights[i] *
         detail::sq_dist(ps.coords.data() + i * ps.dim, centroids.data() + std::size_t{assignment[i]} * ps.dim,
                         ps.dim);
  return s;
}

Clustering best_of_restarts(const PointSet& ps, std::size_t k, std::uint64_t seed, int restarts,
                            const KMeansOptions& opts) {
  if (restarts < 1) throw InputError("restarts must be at least 1");
  Clustering best;
  for (int r = 0; r < restarts; ++r) {
    auto init = kmeans_pp_init(ps, k, derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto c = yinyang(ps, init, opts);
    if (r == 0 || c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

namespace detail {

int thread_count(int workers) { return workers > 0 ? workers : omp_get_max_threads(); }

std::size_t check_kmeans_inputs(const PointSet& ps, std::span<const double> init, const KMeansOptions& opts) {
  ps.validate();
  if (opts.max_iter < 1) throw InputError("max_iter must be at least 1");
  if (!(opts.tol >= 0.0)) throw InputError("tol must be non-negative");
  if (init.empty() || init.size() % ps.dim != 0) throw InputError("initial centroids do not match the dimension");
  return init.size() / ps.dim;
}

UpdateResult update_centroids(const PointSet& ps, std::span<const std::uint32_t> assignment,
                              std::vector<double>& centroids, std::vector<double>& shifts) {
  const std::size_t n = ps.size(), dim = ps.dim, k = centroids.size() / dim;
  std::vector<double> sums(k * dim, 0.0), mass(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = ps.weights[i];
    if (w == 0.0) continue;
    const std::size_t a = assignment[i];
    mass[a] += w;
    const float* x = ps.coords.data() + i * dim;
    double* s = sums.data() + a * dim;
    for (std::size_t e = 0; e < dim; ++e) s[e] += w * static_cast<double>(x[e]);
  }

  UpdateResult result;
  std::vector<double> next(centroids);
  std::vector<double> reseed_cost;
  for (std::size_t j = 0; j < k; ++j) {
    if (mass[j] > 0.0) {
      for (std::size_t e = 0; e < dim; ++e) next[j * dim + e] = sums[j * dim + e] / mass[j];
      continue;
    }
    if (reseed_cost.empty()) {
      reseed_cost.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        reseed_cost[i] = ps.weights[i] * sq_dist(ps.coords.data() + i * dim,
                                                 centroids.data() + std::size_t{assignment[i]} * dim, dim);
      result.distance_evals += n;
    }
    const auto far = std::max_element(reseed_cost.begin(), reseed_cost.end()) - reseed_cost.begin();
    if (reseed_cost[far] <= 0.0) continue; // every point already sits on a centroid
    for (std::size_t e = 0; e < dim; ++e) next[j * dim + e] = ps.coords[far * dim + e];
    reseed_cost[far] = 0.0;
  }

  shifts.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t e = 0; e < dim; ++e) {
      const double d = next[j * dim + e] - centroids[j * dim + e];
      s += d * d;
    }
    shifts[j] = std::sqrt(s);
    result.max_shift = std::max(result.max_shift, shifts[j]);
  }
  centroids.swap(next);
  return result;
}

} // namespace detail
} // namespace kq
