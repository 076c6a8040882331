// Serial Lloyd vs OpenMP Yinyang on Gaussian 9-D points.
//   bench_clustering [n] [k] [max_iter]

#include <chrono>
#include <cstdio>
#include <random>
#include <string>

#include <omp.h>

#include "kq/clustering.hpp"

using namespace kq;

namespace {

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 20000;
  const std::size_t k = argc > 2 ? std::stoul(argv[2]) : 1024;
  const int iters = argc > 3 ? std::stoi(argv[3]) : 30;

  std::mt19937_64 eng(1);
  std::normal_distribution<float> nd;
  std::vector<float> coords(n * 9);
  for (auto& v : coords) v = nd(eng);
  const auto ps = PointSet::unweighted(9, std::move(coords));
  const auto init = kmeans_pp_init(ps, k, 1);
  KMeansOptions opts;
  opts.max_iter = iters;

  std::printf("n=%zu k=%zu max_iter=%d hardware threads=%d\n", n, k, iters, omp_get_num_procs());
  Clustering ref;
  const double t_ref = seconds([&] { ref = lloyd(ps, init, opts); });
  std::printf("%-16s %8s %10s %16s %8s\n", "variant", "workers", "seconds", "distance evals", "same");
  std::printf("%-16s %8d %10.3f %16llu %8s\n", "lloyd (serial)", 1, t_ref,
              static_cast<unsigned long long>(ref.distance_evals), "-");

  for (int w : {1, 2, 4, 8}) {
    opts.workers = w;
    Clustering c;
    const double t = seconds([&] { c = yinyang(ps, init, opts); });
    const bool same = c.assignment == ref.assignment && c.centroids == ref.centroids;
    std::printf("%-16s %8d %10.3f %16llu %8s\n", "yinyang", w, t, static_cast<unsigned long long>(c.distance_evals),
                same ? "yes" : "NO");
  }
  return 0;
}
