// Yinyang k-means (Ding et al.), OpenMP-parallel over points.
//
// Centroids are partitioned once into groups. Each point keeps an upper bound
// on the distance to its centroid and, per group, a lower bound on the
// distance to every other centroid of that group. After the centroids move,
// bounds are loosened by the drifts; whole groups (and single centroids
// inside an examined group) are skipped when their lower bound exceeds the
// best distance found so far. Candidates that survive are compared with the
// exact squared distances and index tie-break used by lloyd(), so the
// assignments match the reference exactly.

#include <algorithm>
#include <cmath>
#include <limits>

#include "clustering_detail.hpp"
#include "kq/random.hpp"

namespace kq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Groups {
  std::vector<std::vector<std::uint32_t>> members;
  std::vector<std::uint32_t> of; // group of each centroid
};

Groups make_groups(const std::vector<double>& centroids, std::size_t dim) {
  const std::size_t k = centroids.size() / dim;
  Groups g;
  g.of.assign(k, 0);
  std::size_t t = std::max<std::size_t>(1, k / 10);
  if (t > 1) {
    std::vector<float> coords(centroids.begin(), centroids.end());
    auto ps = PointSet::unweighted(dim, std::move(coords));
    t = std::min(t, distinct_point_count(ps));
    if (t > 1) {
      auto init = kmeans_pp_init(ps, t, mix64(k));
      auto grouped = lloyd(ps, init, KMeansOptions{5, 0.0, 1});
      g.of = grouped.assignment;
    }
  }
  // Drop empty groups and renumber.
  std::vector<std::uint32_t> remap(t, UINT32_MAX);
  for (std::size_t j = 0; j < k; ++j) {
    auto& r = remap[g.of[j]];
    if (r == UINT32_MAX) {
      r = static_cast<std::uint32_t>(g.members.size());
      g.members.emplace_back();
    }
    g.of[j] = r;
    g.members[r].push_back(static_cast<std::uint32_t>(j));
  }
  return g;
}

double coordinate_scale(const PointSet& ps, std::span<const double> init) {
  double m = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    double s = 0.0;
    for (float v : ps.point(i)) s += static_cast<double>(v) * v;
    m = std::max(m, s);
  }
  double c = 0.0;
  for (std::size_t j = 0; j < init.size() / ps.dim; ++j) {
    double s = 0.0;
    for (std::size_t e = 0; e < ps.dim; ++e) s += init[j * ps.dim + e] * init[j * ps.dim + e];
    c = std::max(c, s);
  }
  return std::sqrt(m) + std::sqrt(c) + 1e-300;
}

} // namespace

Clustering yinyang(const PointSet& ps, std::span<const double> init, const KMeansOptions& opts) {
  const std::size_t k = detail::check_kmeans_inputs(ps, init, opts);
  const std::size_t n = ps.size(), dim = ps.dim;
  const auto ni = static_cast<std::ptrdiff_t>(n);
  const int threads = detail::thread_count(opts.workers);

  Clustering out;
  out.dim = dim;
  out.centroids.assign(init.begin(), init.end());
  out.assignment.resize(n);

  const Groups groups = make_groups(out.centroids, dim);
  const std::size_t t = groups.members.size();
  // Bounds are only trusted beyond this margin, which dominates rounding in
  // the drift arithmetic.
  const double slack = 1e-9 * coordinate_scale(ps, init);
  auto beyond = [slack](double lower, double upper) { return lower > upper + slack; };

  std::vector<double> ub(n), lb(n * t);
  std::uint64_t evals = 0;

#pragma omp parallel num_threads(threads) reduction(+ : evals)
  {
    std::vector<double> d(k);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < ni; ++i) {
      const float* x = ps.coords.data() + i * dim;
      std::uint32_t best = 0;
      for (std::size_t j = 0; j < k; ++j) {
        d[j] = detail::sq_dist(x, out.centroids.data() + j * dim, dim);
        if (d[j] < d[best]) best = static_cast<std::uint32_t>(j);
      }
      evals += k;
      out.assignment[i] = best;
      ub[i] = std::sqrt(d[best]);
      double* l = lb.data() + i * t;
      std::fill(l, l + t, kInf);
      for (std::size_t j = 0; j < k; ++j)
        if (j != best) l[groups.of[j]] = std::min(l[groups.of[j]], std::sqrt(d[j]));
    }
  }

  std::vector<double> drift, group_drift(t);
  for (int it = 1; it <= opts.max_iter; ++it) {
    const auto upd = detail::update_centroids(ps, out.assignment, out.centroids, drift);
    evals += upd.distance_evals;
    for (std::size_t g = 0; g < t; ++g) {
      double m = 0.0;
      for (auto j : groups.members[g]) m = std::max(m, drift[j]);
      group_drift[g] = m;
    }

    const double* cen = out.centroids.data();
#pragma omp parallel num_threads(threads) reduction(+ : evals)
    {
      std::vector<double> old_lb(t), cand(k);
      std::vector<char> examined(t);
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < ni; ++i) {
        const float* x = ps.coords.data() + i * dim;
        double* l = lb.data() + i * t;
        const std::uint32_t a = out.assignment[i];

        double upper = ub[i] + drift[a];
        double global = kInf;
        for (std::size_t g = 0; g < t; ++g) {
          old_lb[g] = l[g];
          l[g] -= group_drift[g];
          global = std::min(global, l[g]);
        }
        if (beyond(global, upper)) {
          ub[i] = upper;
          continue;
        }
        const double d2a = detail::sq_dist(x, cen + std::size_t{a} * dim, dim);
        ++evals;
        upper = std::sqrt(d2a);
        if (beyond(global, upper)) {
          ub[i] = upper;
          continue;
        }

        std::uint32_t best = a;
        double best_d2 = d2a, best_d = upper;
        cand[a] = upper;
        for (std::size_t g = 0; g < t; ++g) {
          examined[g] = 0;
          if (beyond(l[g], best_d)) continue;
          examined[g] = 1;
          for (auto j : groups.members[g]) {
            if (j == a) continue;
            const double bound = old_lb[g] - drift[j];
            if (beyond(bound, best_d)) {
              cand[j] = bound;
              continue;
            }
            const double d2 = detail::sq_dist(x, cen + std::size_t{j} * dim, dim);
            ++evals;
            cand[j] = std::sqrt(d2);
            if (d2 < best_d2 || (d2 == best_d2 && j < best)) {
              best = j;
              best_d2 = d2;
              best_d = cand[j];
            }
          }
        }

        for (std::size_t g = 0; g < t; ++g) {
          if (!examined[g]) continue;
          double m = kInf;
          for (auto j : groups.members[g])
            if (j != best) m = std::min(m, cand[j]);
          l[g] = m;
        }
        const auto ga = groups.of[a];
        if (best != a && !examined[ga]) l[ga] = std::min(l[ga], upper);
        out.assignment[i] = best;
        ub[i] = best_d;
      }
    }

    out.iterations = it;
    if (upd.max_shift < opts.tol) {
      out.converged = true;
      break;
    }
  }
  out.distance_evals = evals;
  out.inertia = weighted_inertia(ps, out.centroids, out.assignment);
  return out;
}

} // namespace kq
