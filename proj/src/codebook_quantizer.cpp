#include "kq/codebook_quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kq/error.hpp"
#include "kq/kernel_matrix.hpp"
#include "kq/random.hpp"

namespace kq {

const char* to_string(Stage stage) {
  switch (stage) {
  case Stage::K:
    return "K";
  case Stage::K_plus_C:
    return "K+C";
  case Stage::scalar_only:
    return "scalar";
  case Stage::passthrough:
    return "passthrough";
  }
  return "unknown";
}

unsigned clamp_bits(int bits) { return static_cast<unsigned>(std::clamp(bits, 1, 16)); }

void ScalarCodebook::validate() const {
  if (bits < 1 || bits > 16) throw InputError("scalar codebook bits must be in [1, 16]");
  if (values.empty()) throw InputError("empty scalar codebook");
  if (values.size() > (std::size_t{1} << bits))
    throw InputError("scalar codebook has more than 2^" + std::to_string(bits) + " values");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw InputError("non-finite scalar codebook value");
    if (i > 0 && values[i] < values[i - 1]) throw InputError("scalar codebook values are not ascending");
  }
  for (std::size_t i = 0; i < indexes.size(); ++i)
    if (indexes[i] >= values.size())
      throw InputError("scalar index " + std::to_string(i) + " is out of range");
}

std::size_t QuantizedLayer::param_count() const {
  std::size_t p = 1;
  for (auto d : shape) p *= d;
  return p;
}

void QuantizedLayer::validate() const {
  const std::string where = "layer '" + name + "': ";
  WeightTensor probe{name, kind, shape, std::vector<float>(param_count(), 0.0f)};
  probe.validate();
  auto need_kernels = [&] {
    if (!kernels) throw InputError(where + "missing kernel codebook");
    const auto cs = conv_shape(probe);
    if (kernels->dim != cs.kernel_dim()) throw InputError(where + "codebook entry size does not match kernel size");
    if (kernels->assignment.size() != cs.kernel_count())
      throw InputError(where + "assignment count does not match kernel count");
    kernels->validate();
  };
  switch (stage) {
  case Stage::K:
    need_kernels();
    if (scalar) throw InputError(where + "stage K carries no scalar codebook");
    break;
  case Stage::K_plus_C: {
    need_kernels();
    if (!scalar) throw InputError(where + "stage K+C requires a scalar codebook");
    scalar->validate();
    if (scalar->indexes.size() != kernels->entries.size())
      throw InputError(where + "scalar index count does not match codebook parameter count");
    for (std::size_t p = 0; p < scalar->indexes.size(); ++p)
      if (scalar->values[scalar->indexes[p]] != kernels->entries[p])
        throw InputError(where + "codebook entries are not reconstructible from the scalar codebook");
    break;
  }
  case Stage::scalar_only:
    if (!scalar) throw InputError(where + "missing scalar codebook");
    if (kernels) throw InputError(where + "scalar layers carry no kernel codebook");
    scalar->validate();
    if (scalar->indexes.size() != param_count()) throw InputError(where + "scalar index count does not match shape");
    break;
  case Stage::passthrough:
    if (kernels || scalar) throw InputError(where + "passthrough layers carry no codebooks");
    if (raw.size() != param_count()) throw InputError(where + "raw data does not match shape");
    for (float v : raw)
      if (!std::isfinite(v)) throw InputError(where + "non-finite value");
    break;
  default:
    throw InputError(where + "unknown stage");
  }
}

namespace {

// 1-D k-means with up to 2^bits centers; centers come back ascending.
ScalarCodebook scalar_kmeans(std::vector<float> values, std::vector<double> weights, unsigned bits,
                             std::uint64_t seed, const KMeansOptions& kmeans) {
  PointSet ps{1, std::move(values), std::move(weights)};
  ps.validate();
  const std::size_t clusters = std::min(std::size_t{1} << bits, distinct_point_count(ps));
  auto init = kmeans_pp_init(ps, clusters, seed);
  auto c = yinyang(ps, init, kmeans);

  std::vector<std::uint32_t> order(clusters);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return c.centroids[a] < c.centroids[b]; });
  std::vector<std::uint32_t> rank(clusters);
  ScalarCodebook sc;
  sc.bits = bits;
  for (std::size_t r = 0; r < clusters; ++r) {
    rank[order[r]] = static_cast<std::uint32_t>(r);
    sc.values.push_back(static_cast<float>(c.centroids[order[r]]));
  }
  sc.indexes.resize(c.assignment.size());
  for (std::size_t i = 0; i < c.assignment.size(); ++i) sc.indexes[i] = rank[c.assignment[i]];
  return sc;
}

} // namespace

std::pair<KernelCodebook, ScalarCodebook> quantize_codebook(const KernelCodebook& cb,
                                                            const CodebookQuantOptions& opts) {
  cb.validate();
  const unsigned bits = clamp_bits(static_cast<int>(opts.bits));
  std::vector<double> weights(cb.entries.size(), 1.0);
  if (opts.weight_by_appearance)
    for (std::size_t p = 0; p < weights.size(); ++p) weights[p] = static_cast<double>(cb.appearance[p / cb.dim]);
  auto sc = scalar_kmeans(cb.entries, std::move(weights), bits, opts.seed, opts.kmeans);

  KernelCodebook out = cb;
  for (std::size_t p = 0; p < out.entries.size(); ++p) out.entries[p] = sc.values[sc.indexes[p]];
  return {std::move(out), std::move(sc)};
}

QuantizedLayer quantize_scalar_layer(const WeightTensor& t, unsigned bits, std::uint64_t seed,
                                     const KMeansOptions& kmeans) {
  t.validate();
  QuantizedLayer ql{t.name, t.kind, t.shape, Stage::scalar_only, std::nullopt, std::nullopt, {}};
  ql.scalar = scalar_kmeans(t.data, std::vector<double>(t.data.size(), 1.0), clamp_bits(static_cast<int>(bits)), seed,
                            kmeans);
  return ql;
}

QuantizedLayer make_kernel_layer(const WeightTensor& original, KernelCodebook codebook) {
  QuantizedLayer ql{original.name, original.kind, original.shape, Stage::K, std::move(codebook), std::nullopt, {}};
  ql.validate();
  return ql;
}

QuantizedLayer make_passthrough_layer(const WeightTensor& t) {
  t.validate();
  return {t.name, t.kind, t.shape, Stage::passthrough, std::nullopt, std::nullopt, t.data};
}

void quantize_codebooks(std::vector<QuantizedLayer>& layers, const CodebookQuantOptions& opts,
                        const std::function<void(std::size_t)>& every_two_layers) {
  std::size_t done = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& ql = layers[l];
    if (ql.stage != Stage::K) continue;
    auto layer_opts = opts;
    layer_opts.seed = derive_seed(opts.seed, l, 0xC0DEB00Cu);
    auto [cb, sc] = quantize_codebook(*ql.kernels, layer_opts);
    ql.kernels = std::move(cb);
    ql.scalar = std::move(sc);
    ql.stage = Stage::K_plus_C;
    if (++done % 2 == 0 && every_two_layers) every_two_layers(done);
  }
  if (done % 2 == 1 && every_two_layers) every_two_layers(done);
}

WeightTensor recover_layer(const QuantizedLayer& ql) {
  ql.validate();
  WeightTensor t{ql.name, ql.kind, ql.shape, {}};
  switch (ql.stage) {
  case Stage::K:
    return from_assignments(*ql.kernels, conv_shape(t), ql.name);
  case Stage::K_plus_C: {
    KernelCodebook cb = *ql.kernels;
    for (std::size_t p = 0; p < cb.entries.size(); ++p) cb.entries[p] = ql.scalar->values[ql.scalar->indexes[p]];
    return from_assignments(cb, conv_shape(t), ql.name);
  }
  case Stage::scalar_only:
    t.data.resize(ql.param_count());
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = ql.scalar->values[ql.scalar->indexes[i]];
    return t;
  case Stage::passthrough:
    t.data = ql.raw;
    return t;
  }
  throw InputError("layer '" + ql.name + "': unknown stage");
}

} // namespace kq
