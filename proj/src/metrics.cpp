#include "kq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <queue>
#include <sstream>

#include "kq/error.hpp"

namespace kq {

unsigned index_bits(std::uint64_t k) {
  if (k == 0) throw InputError("codebook size must be at least 1");
  unsigned b = 0;
  while ((std::uint64_t{1} << b) < k) ++b;
  return b;
}

namespace {

// Bits for k entries of `dim` values at b_c bits plus n indexes; k may be 1.
std::uint64_t kernel_storage_bits(std::uint64_t n, std::uint64_t dim, std::uint64_t k, std::uint64_t b_c) {
  return k * dim * b_c + n * index_bits(k);
}

} // namespace

LayerCost layer_cost(std::uint64_t n, std::uint64_t omega, std::uint64_t k, std::uint64_t b_c) {
  if (k < 2) throw InputError("codebook size must be at least 2");
  if (n < 1 || omega < 1 || b_c < 1) throw InputError("n, omega and b_c must be positive");
  LayerCost c{n, omega, k, b_c, kernel_storage_bits(n, omega * omega, k, b_c), 0.0, 0.0};
  c.beta = static_cast<double>(c.bits_total) / static_cast<double>(c.param_count());
  c.size_fraction = c.beta / kFullPrecisionBits;
  return c;
}

std::string format_ratio(std::uint64_t numerator, std::uint64_t denominator, int decimals) {
  if (denominator == 0) throw InputError("zero denominator");
  unsigned __int128 scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  // round half up: floor((2*num*scale + den) / (2*den))
  const unsigned __int128 scaled =
      (2 * static_cast<unsigned __int128>(numerator) * scale + denominator) / (2 * static_cast<unsigned __int128>(denominator));
  const auto whole = static_cast<std::uint64_t>(scaled / scale);
  auto frac = static_cast<std::uint64_t>(scaled % scale);
  std::string s = std::to_string(whole);
  if (decimals > 0) {
    std::string f = std::to_string(frac);
    s += "." + std::string(static_cast<std::size_t>(decimals) - f.size(), '0') + f;
  }
  return s;
}

std::string format_beta(const LayerCost& cost) { return format_ratio(cost.bits_total, cost.param_count(), 2); }

std::string format_size_fraction_percent(const LayerCost& cost) {
  return format_ratio(cost.bits_total * 100, cost.param_count() * kFullPrecisionBits, 2);
}

double conventional_cost(std::uint64_t n_params, std::uint64_t u, std::uint64_t b_1) {
  if (u < 2) throw InputError("codebook size must be at least 2");
  if (n_params == 0) throw InputError("parameter count must be positive");
  const double full = static_cast<double>(n_params) * kFullPrecisionBits;
  return full / (static_cast<double>(u * b_1) + static_cast<double>(n_params) * index_bits(u));
}

double kq_ratio(std::uint64_t n, std::uint64_t omega, std::uint64_t k, std::uint64_t b_c) {
  const auto c = layer_cost(n, omega, k, b_c);
  return static_cast<double>(c.param_count()) * kFullPrecisionBits / static_cast<double>(c.bits_total);
}

double kq_limit(std::uint64_t omega) {
  if (omega < 1) throw InputError("kernel side must be positive");
  return static_cast<double>(omega * omega * kFullPrecisionBits);
}

std::uint64_t theoretical_codebook(std::uint64_t u, std::uint64_t omega) {
  if (omega < 1) throw InputError("kernel side must be positive");
  std::uint64_t result = 1;
  for (std::uint64_t i = 0; i < omega * omega; ++i) {
    if (u != 0 && result > UINT64_MAX / u) throw InputError("theoretical codebook size overflows 64 bits");
    result *= u;
  }
  return result;
}

double reconstruction_error(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InputError("tensors differ in size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double reconstruction_error(const WeightTensor& original, const WeightTensor& recovered) {
  if (original.shape != recovered.shape) throw InputError("tensors differ in shape");
  return reconstruction_error(std::span<const float>(original.data), std::span<const float>(recovered.data));
}

std::uint64_t IndexHistogram::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

double shannon_entropy(std::span<const std::uint64_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

IndexHistogram histogram_from_counts(std::vector<std::uint64_t> counts) {
  IndexHistogram h{std::move(counts), 0.0};
  h.entropy_bits = shannon_entropy(h.counts);
  return h;
}

IndexHistogram index_histogram(const KernelCodebook& cb) { return histogram_from_counts(cb.appearance); }

IndexHistogram index_histogram(std::span<const std::uint32_t> indexes, std::size_t alphabet) {
  std::vector<std::uint64_t> counts(alphabet, 0);
  for (auto i : indexes) {
    if (i >= alphabet) throw InputError("index " + std::to_string(i) + " outside alphabet of " + std::to_string(alphabet));
    ++counts[i];
  }
  return histogram_from_counts(std::move(counts));
}

double huffman_estimate(const IndexHistogram& h) {
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> heap;
  std::uint64_t total = 0;
  for (auto c : h.counts)
    if (c > 0) {
      heap.push(c);
      total += c;
    }
  if (heap.empty()) throw InputError("empty histogram");
  if (heap.size() == 1) return 1.0;
  // Expected code length = sum of merged node weights / total.
  unsigned __int128 internal = 0;
  while (heap.size() > 1) {
    const auto a = heap.top();
    heap.pop();
    const auto b = heap.top();
    heap.pop();
    internal += a + b;
    heap.push(a + b);
  }
  return static_cast<double>(internal) / static_cast<double>(total);
}

// Report -------------------------------------------------------------------

namespace {

ReportRow kernel_row(const QuantizedLayer& ql, unsigned codebook_bits) {
  const auto& cb = *ql.kernels;
  ReportRow row;
  row.layer = ql.name;
  row.stage = ql.stage;
  row.kernel_layer = true;
  row.n = cb.kernel_count();
  row.k = cb.k();
  row.params = ql.param_count();
  const unsigned kc_bits = ql.stage == Stage::K_plus_C ? ql.scalar->bits : codebook_bits;
  row.bits_K = kernel_storage_bits(row.n, cb.dim, row.k, kFullPrecisionBits);
  row.bits_KC = kernel_storage_bits(row.n, cb.dim, row.k, kc_bits);
  const auto h = index_histogram(cb);
  row.entropy_bits = h.entropy_bits;
  row.huffman_bits = huffman_estimate(h);
  return row;
}

ReportRow scalar_row(const QuantizedLayer& ql) {
  ReportRow row;
  row.layer = ql.name;
  row.stage = ql.stage;
  row.params = ql.param_count();
  row.n = row.params;
  if (ql.stage == Stage::scalar_only) {
    const auto& sc = *ql.scalar;
    row.k = sc.values.size();
    row.bits_K = row.bits_KC = row.k * kFullPrecisionBits + row.params * sc.bits;
    const auto h = index_histogram(sc.indexes, sc.values.size());
    row.entropy_bits = h.entropy_bits;
    row.huffman_bits = huffman_estimate(h);
  } else {
    row.k = 0;
    row.bits_K = row.bits_KC = row.params * kFullPrecisionBits;
    row.entropy_bits = row.huffman_bits = kFullPrecisionBits;
  }
  return row;
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

} // namespace

ModelReport model_report(const std::vector<QuantizedLayer>& layers, unsigned codebook_bits) {
  if (layers.empty()) throw InputError("cannot report on an empty model");
  ModelReport report;
  std::uint64_t bits_K = 0, bits_KC = 0, params = 0, kbits_K = 0, kbits_KC = 0, kparams = 0;
  for (const auto& ql : layers) {
    ql.validate();
    auto row = ql.kernels ? kernel_row(ql, codebook_bits) : scalar_row(ql);
    row.beta_K = static_cast<double>(row.bits_K) / static_cast<double>(row.params);
    row.beta_KC = static_cast<double>(row.bits_KC) / static_cast<double>(row.params);
    row.size_fraction_K = row.beta_K / kFullPrecisionBits;
    row.size_fraction_KC = row.beta_KC / kFullPrecisionBits;
    bits_K += row.bits_K;
    bits_KC += row.bits_KC;
    params += row.params;
    if (row.kernel_layer) {
      kbits_K += row.bits_K;
      kbits_KC += row.bits_KC;
      kparams += row.params;
    }
    report.rows.push_back(std::move(row));
  }
  report.beta_K_all = static_cast<double>(bits_K) / static_cast<double>(params);
  report.beta_KC_all = static_cast<double>(bits_KC) / static_cast<double>(params);
  if (kparams > 0) {
    report.beta_K_kernel = static_cast<double>(kbits_K) / static_cast<double>(kparams);
    report.beta_KC_kernel = static_cast<double>(kbits_KC) / static_cast<double>(kparams);
  }
  return report;
}

std::vector<CsvRow> report_csv_rows(const ModelReport& report) {
  std::vector<CsvRow> out;
  for (const auto& r : report.rows) {
    out.push_back({r.layer, r.n, r.k, format_ratio(r.bits_K, r.params), format_ratio(r.bits_KC, r.params),
                   format_ratio(r.bits_K * 100, r.params * kFullPrecisionBits),
                   format_ratio(r.bits_KC * 100, r.params * kFullPrecisionBits), fixed(r.entropy_bits, 4),
                   fixed(r.huffman_bits, 4)});
  }
  return out;
}

std::string report_to_csv(const ModelReport& report) {
  std::ostringstream os;
  for (const auto& [key, value] : report.metadata) os << "# " << key << "=" << value << "\n";
  os << kReportCsvHeader << "\n";
  for (const auto& r : report_csv_rows(report))
    os << r.layer << "," << r.n << "," << r.k << "," << r.beta_K << "," << r.beta_KC << "," << r.size_fraction_K << ","
       << r.size_fraction_KC << "," << r.entropy_bits << "," << r.huffman_bits << "\n";
  return os.str();
}

std::vector<CsvRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kReportCsvHeader) throw FormatError("report CSV: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw FormatError("report CSV: expected 9 fields in '" + line + "'");
    try {
      rows.push_back({f[0], std::stoull(f[1]), std::stoull(f[2]), f[3], f[4], f[5], f[6], f[7], f[8]});
    } catch (const std::logic_error&) {
      throw FormatError("report CSV: bad count in '" + line + "'");
    }
  }
  if (!header) throw FormatError("report CSV: missing header");
  return rows;
}

std::string report_to_table(const ModelReport& report) {
  std::ostringstream os;
  for (const auto& [key, value] : report.metadata) os << key << ": " << value << "\n";
  os << std::left << std::setw(16) << "layer" << std::right << std::setw(8) << "stage" << std::setw(10) << "n"
     << std::setw(8) << "k" << std::setw(9) << "beta K" << std::setw(9) << "beta K+C" << std::setw(9) << "size K"
     << std::setw(10) << "size K+C" << std::setw(9) << "H(idx)" << std::setw(9) << "huffman" << "\n";
  const auto csv = report_csv_rows(report);
  for (std::size_t i = 0; i < csv.size(); ++i) {
    const auto& r = csv[i];
    os << std::left << std::setw(16) << r.layer << std::right << std::setw(8) << to_string(report.rows[i].stage)
       << std::setw(10) << r.n << std::setw(8) << r.k << std::setw(9) << r.beta_K << std::setw(9) << r.beta_KC
       << std::setw(8) << r.size_fraction_K << "%" << std::setw(9) << r.size_fraction_KC << "%" << std::setw(9)
       << r.entropy_bits << std::setw(9) << r.huffman_bits << "\n";
  }
  os << "average bits per parameter (all layers): K " << fixed(report.beta_K_all, 2) << ", K+C "
     << fixed(report.beta_KC_all, 2) << "\n";
  os << "average bits per parameter (kernel layers): K " << fixed(report.beta_K_kernel, 2) << ", K+C "
     << fixed(report.beta_KC_kernel, 2) << "\n";
  return os.str();
}

} // namespace kq
