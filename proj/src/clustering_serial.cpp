// Serial reference k-means. Kept deliberately plain: it is the oracle the
// parallel Yinyang kernel is tested against.

#include "clustering_detail.hpp"

namespace kq {

namespace {

double assign_all(const PointSet& ps, const std::vector<double>& centroids, std::vector<std::uint32_t>& assignment) {
  const std::size_t dim = ps.dim, k = centroids.size() / dim;
  double inertia = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    double d2;
    assignment[i] = detail::nearest(ps.coords.data() + i * dim, centroids.data(), k, dim, &d2);
    inertia += ps.weights[i] * d2;
  }
  return inertia;
}

} // namespace

Clustering lloyd(const PointSet& ps, std::span<const double> init, const KMeansOptions& opts) {
  const std::size_t k = detail::check_kmeans_inputs(ps, init, opts);
  const std::size_t n = ps.size();

  Clustering out;
  out.dim = ps.dim;
  out.centroids.assign(init.begin(), init.end());
  out.assignment.resize(n);
  out.inertia_trace.push_back(assign_all(ps, out.centroids, out.assignment));
  out.distance_evals = n * k;

  std::vector<double> shifts;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const auto upd = detail::update_centroids(ps, out.assignment, out.centroids, shifts);
    out.distance_evals += upd.distance_evals;
    out.inertia_trace.push_back(assign_all(ps, out.centroids, out.assignment));
    out.distance_evals += n * k;
    out.iterations = it;
    if (upd.max_shift < opts.tol) {
      out.converged = true;
      break;
    }
  }
  out.inertia = weighted_inertia(ps, out.centroids, out.assignment);
  return out;
}

} // namespace kq
