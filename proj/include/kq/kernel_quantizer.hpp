#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kq/clustering.hpp"
#include "kq/kernel_matrix.hpp"
#include "kq/tensor_store.hpp"

namespace kq {

// k representative kernels plus the per-kernel index into them.
struct KernelCodebook {
  std::size_t dim = 0;
  std::vector<float> entries;               // k * dim
  std::vector<std::uint32_t> assignment;    // one per kernel
  std::vector<std::uint64_t> appearance;    // z_i, kernels mapped to entry i

  static KernelCodebook from_parts(std::size_t dim, std::vector<float> entries,
                                   std::vector<std::uint32_t> assignment);

  std::size_t k() const { return dim == 0 ? 0 : entries.size() / dim; }
  std::size_t kernel_count() const { return assignment.size(); }
  std::span<const float> entry(std::size_t i) const { return {entries.data() + i * dim, dim}; }

  // Recomputes appearance from assignment; throws on out-of-range indexes.
  void recount();
  void validate() const;

  bool operator==(const KernelCodebook&) const = default;
};

struct SearchConfig {
  double alpha = 0.5;  // initial entry ratio, N_init = floor(alpha * n)
  double r = 0.75;     // threshold ratio for the target accuracy
  int max_iter = 8;
  // Replaces the computed target accuracy when set.
  std::optional<double> target_override;

  void validate() const;
};

// Accuracy of a full model, in [0, 1].
using Evaluator = std::function<double(const ModelArchive&)>;

struct Probe {
  std::size_t size = 0;
  double accuracy = 0.0;
  bool passed = false;
};

struct SearchState {
  std::size_t n_init = 0;
  std::size_t n_curr = 0;
  std::size_t b_upper = 0;
  std::size_t b_lower = 0;
  double a_ori = 0.0;
  double a_base = 0.0;
  double a_target = 0.0;
  std::vector<Probe> probes;
  std::size_t selected = 0;
  std::size_t evaluator_calls = 0;
};

// a_base - (a_ori - a_base) * r
double target_accuracy(double a_ori, double a_base, double r);

// Smallest codebook size considered by the search; a single entry would make
// the index width zero.
inline constexpr std::size_t kMinCodebookSize = 2;

// Bisection over codebook sizes in (b_lower, n_init]. A probe passes when its
// accuracy is strictly above a_target; the upper bound only ever moves to a
// passing size. Stops after max_iter probes or when the bounds are adjacent.
// `selected` is the smallest passing probe, or n_init when none passed.
SearchState search_codebook_size(std::size_t n_init, double a_target, int max_iter,
                                 const std::function<double(std::size_t)>& probe);

struct QuantizeOptions {
  std::uint64_t seed = 0;
  KMeansOptions kmeans;
};

// Kernel-level k-means. k is clamped to the number of distinct kernels.
// `inertia`, when given, receives the final clustering objective.
KernelCodebook quantize_layer(const KernelMatrix& km, std::size_t k, std::uint64_t seed,
                              const KMeansOptions& kmeans = {}, double* inertia = nullptr);

// Seed used for a probe of size `size` on layer `layer_index`.
std::uint64_t probe_seed(std::uint64_t base, std::size_t layer_index, std::size_t size);

struct LayerSearch {
  KernelCodebook codebook;
  SearchState state;
};

// Adaptive codebook sizing for layer `layer_index` of `model_ctx`. Every
// probe re-quantizes the original weights of that layer.
LayerSearch binary_search_codebook(const KernelMatrix& km, const SearchConfig& cfg, const Evaluator& eval,
                                   const ModelArchive& model_ctx, std::size_t layer_index,
                                   const QuantizeOptions& opts = {});

struct LayerEvent {
  std::size_t layer_index = 0;
  const WeightTensor* recovered = nullptr;
  const ModelArchive* model = nullptr;
};

struct ModelQuantizeOptions {
  QuantizeOptions quantize;
  // Layers eligible for kernel quantization: conv with this kernel side.
  std::uint32_t kernel_side = 3;
  // Skip the search and use this codebook size for every layer.
  std::optional<std::size_t> fixed_k;
  // Called after each layer is quantized; stands in for the per-layer
  // retraining epoch.
  std::function<void(const LayerEvent&)> on_layer_done;
};

struct KernelLayerResult {
  std::size_t layer_index = 0;
  KernelCodebook codebook;
  SearchState state;
};

struct ModelQuantization {
  std::vector<KernelLayerResult> layers;
  ModelArchive recovered;
};

ModelQuantization quantize_model(const ModelArchive& archive, const SearchConfig& cfg, const Evaluator& eval,
                                 const ModelQuantizeOptions& opts = {});

// Evaluator wrappers -------------------------------------------------------

// 1 - mean over layers of |W - W'|^2 / |W|^2 against a reference model.
class ProxyEvaluator {
public:
  explicit ProxyEvaluator(ModelArchive reference);
  double operator()(const ModelArchive& model) const;

private:
  ModelArchive reference_;
};

// Writes the model to a temporary KQT file, runs `command <path>` through the
// shell and parses one decimal accuracy in [0, 1] from its standard output.
class CommandEvaluator {
public:
  explicit CommandEvaluator(std::string command);
  double operator()(const ModelArchive& model) const;

private:
  std::string command_;
};

// Parses an evaluator reply; throws Error unless it is a single finite value
// in [0, 1] (surrounding whitespace allowed).
double parse_accuracy(std::string_view text);

} // namespace kq
