#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kq/codebook_quantizer.hpp"
#include "kq/kernel_quantizer.hpp"
#include "kq/tensor_store.hpp"

namespace kq {

inline constexpr unsigned kFullPrecisionBits = 32;

// ceil(log2(k)) for k >= 1.
unsigned index_bits(std::uint64_t k);

// Storage of a kernel-quantized layer: k*w^2*b_c + n*ceil(log2 k) bits.
struct LayerCost {
  std::uint64_t n = 0;
  std::uint64_t omega = 0;
  std::uint64_t k = 0;
  std::uint64_t b_c = 0;
  std::uint64_t bits_total = 0;
  double beta = 0.0;          // bits per parameter
  double size_fraction = 0.0; // beta / 32

  std::uint64_t param_count() const { return n * omega * omega; }
};

LayerCost layer_cost(std::uint64_t n, std::uint64_t omega, std::uint64_t k, std::uint64_t b_c);

// bits / params rounded half-up to `decimals` places from exact integers.
std::string format_ratio(std::uint64_t numerator, std::uint64_t denominator, int decimals = 2);
std::string format_beta(const LayerCost& cost);
// Size fraction as a percentage, 2 decimals ("33.33").
std::string format_size_fraction_percent(const LayerCost& cost);

// Compression ratio of per-parameter quantization with a u-entry codebook of
// b_1-bit values over n_params parameters.
double conventional_cost(std::uint64_t n_params, std::uint64_t u, std::uint64_t b_1);

// Compression ratio of kernel quantization.
double kq_ratio(std::uint64_t n, std::uint64_t omega, std::uint64_t k, std::uint64_t b_c);

// Limit of the kernel-quantization ratio as k -> 2, n -> inf: w^2 * 32.
double kq_limit(std::uint64_t omega);

// u^(w*w); throws on overflow of 64 bits.
std::uint64_t theoretical_codebook(std::uint64_t u, std::uint64_t omega);

// l2 distance between two tensors of equal shape.
double reconstruction_error(const WeightTensor& original, const WeightTensor& recovered);
double reconstruction_error(std::span<const float> a, std::span<const float> b);

struct IndexHistogram {
  std::vector<std::uint64_t> counts;
  double entropy_bits = 0.0;

  std::uint64_t total() const;
};

IndexHistogram index_histogram(const KernelCodebook& cb);
IndexHistogram index_histogram(std::span<const std::uint32_t> indexes, std::size_t alphabet);
IndexHistogram histogram_from_counts(std::vector<std::uint64_t> counts);

// Shannon entropy of the empirical distribution, in bits.
double shannon_entropy(std::span<const std::uint64_t> counts);

// Expected code length of a Huffman code built over the histogram, in bits
// per index. A single-symbol alphabet costs 1 bit.
double huffman_estimate(const IndexHistogram& h);

struct ReportRow {
  std::string layer;
  Stage stage = Stage::K;
  std::uint64_t n = 0;      // kernels (kernel layers) or parameters
  std::uint64_t k = 0;      // codebook entries
  std::uint64_t params = 0; // full-precision parameter count
  std::uint64_t bits_K = 0;
  std::uint64_t bits_KC = 0;
  double beta_K = 0.0;
  double beta_KC = 0.0;
  double size_fraction_K = 0.0;
  double size_fraction_KC = 0.0;
  double entropy_bits = 0.0;
  double huffman_bits = 0.0;
  bool kernel_layer = false;
};

struct ModelReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ReportRow> rows;
  // Parameter-weighted averages over all rows and over kernel layers only.
  double beta_K_all = 0.0;
  double beta_KC_all = 0.0;
  double beta_K_kernel = 0.0;
  double beta_KC_kernel = 0.0;
};

// Kernel layers get Table-style K and K+C columns: K uses 32-bit codebook
// values, K+C uses `codebook_bits` (or the layer's own bits when it is
// already stage K+C). Scalar layers charge u*32 + m*bits in both columns.
ModelReport model_report(const std::vector<QuantizedLayer>& layers,
                         unsigned codebook_bits = kDefaultCodebookBits);

inline constexpr const char* kReportCsvHeader =
    "layer,n,k,beta_K,beta_KC,size_fraction_K,size_fraction_KC,entropy_bits,huffman_bits";

// Metadata goes first as "# key=value" lines, then the header and one row per
// layer. LF line endings.
std::string report_to_csv(const ModelReport& report);
std::string report_to_table(const ModelReport& report);

struct CsvRow {
  std::string layer;
  std::uint64_t n = 0;
  std::uint64_t k = 0;
  std::string beta_K, beta_KC, size_fraction_K, size_fraction_KC, entropy_bits, huffman_bits;
  bool operator==(const CsvRow&) const = default;
};

std::vector<CsvRow> parse_report_csv(const std::string& text);
std::vector<CsvRow> report_csv_rows(const ModelReport& report);

} // namespace kq
