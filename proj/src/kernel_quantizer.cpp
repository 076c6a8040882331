#include "kq/kernel_quantizer.hpp"

#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "kq/error.hpp"
#include "kq/random.hpp"

namespace kq {

KernelCodebook KernelCodebook::from_parts(std::size_t dim, std::vector<float> entries,
                                          std::vector<std::uint32_t> assignment) {
  KernelCodebook cb{dim, std::move(entries), std::move(assignment), {}};
  if (dim == 0 || cb.entries.size() % dim != 0) throw InputError("codebook entries do not match the entry size");
  cb.recount();
  return cb;
}

void KernelCodebook::recount() {
  appearance.assign(k(), 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= appearance.size())
      throw InputError("kernel " + std::to_string(i) + " refers to entry " + std::to_string(assignment[i]) +
                       " of " + std::to_string(appearance.size()));
    ++appearance[assignment[i]];
  }
}

void KernelCodebook::validate() const {
  if (dim == 0 || entries.size() % dim != 0) throw InputError("codebook entries do not match the entry size");
  if (k() == 0) throw InputError("empty codebook");
  KernelCodebook copy{dim, {}, assignment, {}};
  copy.entries.resize(entries.size());
  copy.recount();
  if (copy.appearance != appearance) throw InputError("codebook appearance counts do not match the assignment");
  for (float v : entries)
    if (!std::isfinite(v)) throw InputError("non-finite codebook value");
}

void SearchConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("alpha must be in (0, 1]");
  if (!(r >= 0.0) || !std::isfinite(r)) throw InputError("r must be finite and non-negative");
  if (max_iter < 1) throw InputError("max_iter must be at least 1");
  if (target_override && !std::isfinite(*target_override)) throw InputError("target accuracy must be finite");
}

double target_accuracy(double a_ori, double a_base, double r) { return a_base - (a_ori - a_base) * r; }

SearchState search_codebook_size(std::size_t n_init, double a_target, int max_iter,
                                 const std::function<double(std::size_t)>& probe) {
  SearchState s;
  s.n_init = s.n_curr = s.b_upper = s.selected = n_init;
  s.b_lower = 0;
  s.a_target = a_target;
  for (int i = 0; i < max_iter; ++i) {
    if (s.b_upper - s.b_lower <= 1) break;
    const std::size_t mid = std::max(kMinCodebookSize, (s.b_upper + s.b_lower) / 2);
    if (mid >= s.b_upper) break;
    s.n_curr = mid;
    const double acc = probe(mid);
    const bool passed = acc > a_target;
    s.probes.push_back({mid, acc, passed});
    spdlog::debug("probe size={} accuracy={:.6f} target={:.6f} {}", mid, acc, a_target, passed ? "pass" : "fail");
    if (passed) {
      s.b_upper = mid;
      s.selected = mid; // the upper bound only shrinks, so this is the smallest pass
    } else {
      s.b_lower = mid;
    }
  }
  return s;
}

KernelCodebook quantize_layer(const KernelMatrix& km, std::size_t k, std::uint64_t seed, const KMeansOptions& kmeans,
                              double* inertia) {
  if (km.count() == 0 || km.dim() == 0) throw InputError("cannot quantize an empty layer");
  if (k == 0) throw InputError("codebook size must be at least 1");
  auto ps = PointSet::unweighted(km.dim(), km.values);
  const std::size_t k_eff = std::min(k, distinct_point_count(ps));
  auto init = kmeans_pp_init(ps, k_eff, seed);
  auto c = yinyang(ps, init, kmeans);
  if (inertia) *inertia = c.inertia;
  std::vector<float> entries(c.centroids.begin(), c.centroids.end());
  return KernelCodebook::from_parts(km.dim(), std::move(entries), std::move(c.assignment));
}

std::uint64_t probe_seed(std::uint64_t base, std::size_t layer_index, std::size_t size) {
  return derive_seed(base, layer_index, size);
}

namespace {

double checked_eval(const Evaluator& eval, const ModelArchive& m, std::size_t& calls) {
  ++calls;
  const double a = eval(m);
  if (!std::isfinite(a) || a < 0.0 || a > 1.0)
    throw Error("evaluator returned " + std::to_string(a) + ", expected a value in [0, 1]");
  return a;
}

} // namespace

LayerSearch binary_search_codebook(const KernelMatrix& km, const SearchConfig& cfg, const Evaluator& eval,
                                   const ModelArchive& model_ctx, std::size_t layer_index,
                                   const QuantizeOptions& opts) {
  cfg.validate();
  const std::size_t n = km.count();
  if (n == 0) throw InputError("cannot quantize an empty layer");
  if (layer_index >= model_ctx.layers.size()) throw InputError("layer index out of range");
  const auto& original = model_ctx.layers[layer_index];
  if (conv_shape(original) != km.shape)
    throw InputError("kernel matrix does not match layer '" + original.name + "'");

  ModelArchive work = model_ctx;
  std::size_t calls = 0;
  std::map<std::size_t, KernelCodebook> codebooks;
  auto quantize_at = [&](std::size_t size) {
    auto cb = quantize_layer(km, size, probe_seed(opts.seed, layer_index, size), opts.kmeans);
    work.layers[layer_index] = from_assignments(cb, km.shape, original.name);
    codebooks.insert_or_assign(size, std::move(cb));
    return checked_eval(eval, work, calls);
  };

  const double a_ori = checked_eval(eval, work, calls);
  const auto scaled = static_cast<std::size_t>(std::floor(cfg.alpha * static_cast<double>(n)));
  const std::size_t n_init = std::min(n, std::max(kMinCodebookSize, scaled));
  const double a_base = quantize_at(n_init);
  const double a_target = cfg.target_override.value_or(target_accuracy(a_ori, a_base, cfg.r));

  SearchState state = search_codebook_size(n_init, a_target, cfg.max_iter, quantize_at);
  state.a_ori = a_ori;
  state.a_base = a_base;
  state.evaluator_calls = calls;
  spdlog::info("layer '{}': n={} N_init={} A_ori={:.6f} A_base={:.6f} A_target={:.6f} -> k={} ({} probes)",
               original.name, n, n_init, a_ori, a_base, a_target, state.selected, state.probes.size());
  return {std::move(codebooks.at(state.selected)), std::move(state)};
}

ModelQuantization quantize_model(const ModelArchive& archive, const SearchConfig& cfg, const Evaluator& eval,
                                 const ModelQuantizeOptions& opts) {
  archive.validate();
  cfg.validate();
  auto eligible = [&](const WeightTensor& t) { return t.is_conv() && t.omega() == opts.kernel_side; };
  if (std::none_of(archive.layers.begin(), archive.layers.end(), eligible))
    throw InputError("model has no conv layer with " + std::to_string(opts.kernel_side) + "x" +
                     std::to_string(opts.kernel_side) + " kernels");

  ModelQuantization result;
  result.recovered = archive;
  for (std::size_t idx = 0; idx < archive.layers.size(); ++idx) {
    const auto& original = archive.layers[idx];
    if (!eligible(original)) continue;
    const auto km = to_kernel_matrix(original);
    KernelLayerResult layer{idx, {}, {}};
    if (opts.fixed_k) {
      layer.codebook = quantize_layer(km, *opts.fixed_k, probe_seed(opts.quantize.seed, idx, *opts.fixed_k),
                                      opts.quantize.kmeans);
      layer.state.n_init = layer.state.selected = layer.state.n_curr = layer.state.b_upper = layer.codebook.k();
    } else {
      auto found = binary_search_codebook(km, cfg, eval, result.recovered, idx, opts.quantize);
      layer.codebook = std::move(found.codebook);
      layer.state = std::move(found.state);
    }
    result.recovered.layers[idx] = from_assignments(layer.codebook, km.shape, original.name);
    if (opts.on_layer_done) opts.on_layer_done({idx, &result.recovered.layers[idx], &result.recovered});
    result.layers.push_back(std::move(layer));
  }
  return result;
}

} // namespace kq
