#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "kq/clustering.hpp"
#include "kq/kernel_quantizer.hpp"
#include "kq/tensor_store.hpp"

namespace kq {

// Scalar centers (ascending) plus one index per quantized parameter.
struct ScalarCodebook {
  unsigned bits = 6;
  std::vector<float> values;
  std::vector<std::uint32_t> indexes;

  void validate() const;
  bool operator==(const ScalarCodebook&) const = default;
};

enum class Stage : std::uint8_t { K = 0, K_plus_C = 1, scalar_only = 2, passthrough = 3 };

const char* to_string(Stage stage);

struct QuantizedLayer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::vector<std::uint32_t> shape;
  Stage stage = Stage::K;
  // K and K_plus_C; for K_plus_C the entries hold the dequantized values.
  std::optional<KernelCodebook> kernels;
  // K_plus_C (over codebook parameters) and scalar_only (over all weights).
  std::optional<ScalarCodebook> scalar;
  // passthrough only.
  std::vector<float> raw;

  std::size_t param_count() const;
  void validate() const;

  bool operator==(const QuantizedLayer&) const = default;
};

inline constexpr unsigned kDefaultCodebookBits = 6;

// bits outside [1, 16] are clamped.
unsigned clamp_bits(int bits);

struct CodebookQuantOptions {
  unsigned bits = kDefaultCodebookBits;
  // Weight each parameter by its entry's appearance count.
  bool weight_by_appearance = true;
  std::uint64_t seed = 0;
  KMeansOptions kmeans;
};

// 1-D weighted k-means over all k*dim codebook parameters with 2^bits
// clusters; each parameter is replaced by its center.
std::pair<KernelCodebook, ScalarCodebook> quantize_codebook(const KernelCodebook& cb,
                                                            const CodebookQuantOptions& opts = {});

// Unweighted 1-D k-means over every parameter of the tensor.
QuantizedLayer quantize_scalar_layer(const WeightTensor& t, unsigned bits = kDefaultCodebookBits,
                                     std::uint64_t seed = 0, const KMeansOptions& kmeans = {});

QuantizedLayer make_kernel_layer(const WeightTensor& original, KernelCodebook codebook);
QuantizedLayer make_passthrough_layer(const WeightTensor& t);

// Applies codebook quantization to every stage-K layer in order, invoking
// `every_two_layers` after each second layer (and after a trailing odd one).
void quantize_codebooks(std::vector<QuantizedLayer>& layers, const CodebookQuantOptions& opts,
                        const std::function<void(std::size_t layers_done)>& every_two_layers = {});

WeightTensor recover_layer(const QuantizedLayer& ql);

} // namespace kq
