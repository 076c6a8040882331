#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <algorithm>

#include "kq/codebook_quantizer.hpp"
#include "kq/tensor_store.hpp"

namespace kq::test {

inline std::vector<float> gaussian(std::size_t count, std::uint64_t seed, float sigma = 1.0f) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<float> nd(0.0f, sigma);
  std::vector<float> out(count);
  for (auto& v : out) v = nd(eng);
  return out;
}

inline WeightTensor random_conv(const std::string& name, std::uint32_t omega, std::uint32_t p, std::uint32_t q,
                                std::uint64_t seed) {
  return WeightTensor::conv(name, omega, p, q, gaussian(std::size_t{omega} * omega * p * q, seed, 0.1f));
}

// Sorted table of `size` values for a scalar codebook.
inline std::vector<float> sorted_table(std::size_t size, std::uint64_t seed) {
  auto v = gaussian(size, seed);
  std::sort(v.begin(), v.end());
  return v;
}

template <class Engine>
std::uint32_t below(Engine& eng, std::size_t bound) {
  return static_cast<std::uint32_t>(eng() % bound);
}

// A structurally valid layer in any of the four stages, built directly
// rather than through clustering.
template <class Engine>
QuantizedLayer random_quantized_layer(Engine& eng, const std::string& name) {
  const auto stage = static_cast<Stage>(eng() % 4);
  QuantizedLayer ql;
  ql.name = name;
  ql.stage = stage;
  if (stage == Stage::K || stage == Stage::K_plus_C) {
    const std::uint32_t omega = 1 + below(eng, 4), p = 1 + below(eng, 24), q = 1 + below(eng, 24);
    const std::size_t n = std::size_t{p} * q, dim = std::size_t{omega} * omega;
    const std::size_t k = 1 + below(eng, std::min<std::size_t>(n, 300));
    ql.kind = LayerKind::conv;
    ql.shape = {omega, omega, p, q};
    std::vector<std::uint32_t> assign(n);
    for (auto& a : assign) a = below(eng, k);
    if (stage == Stage::K) {
      ql.kernels = KernelCodebook::from_parts(dim, gaussian(k * dim, eng()), std::move(assign));
    } else {
      ScalarCodebook sc;
      sc.bits = 1 + below(eng, 8);
      sc.values = sorted_table(1 + below(eng, std::size_t{1} << sc.bits), eng());
      sc.indexes.resize(k * dim);
      for (auto& i : sc.indexes) i = below(eng, sc.values.size());
      std::vector<float> entries(k * dim);
      for (std::size_t j = 0; j < entries.size(); ++j) entries[j] = sc.values[sc.indexes[j]];
      ql.kernels = KernelCodebook::from_parts(dim, std::move(entries), std::move(assign));
      ql.scalar = std::move(sc);
    }
  } else {
    const std::uint32_t rows = 1 + below(eng, 40), cols = 1 + below(eng, 40);
    ql.kind = LayerKind::fully_connected;
    ql.shape = {rows, cols};
    if (stage == Stage::scalar_only) {
      ScalarCodebook sc;
      sc.bits = 1 + below(eng, 16);
      sc.values = sorted_table(1 + below(eng, std::min<std::size_t>(std::size_t{1} << sc.bits, 100)), eng());
      sc.indexes.resize(std::size_t{rows} * cols);
      for (auto& i : sc.indexes) i = below(eng, sc.values.size());
      ql.scalar = std::move(sc);
    } else {
      ql.raw = gaussian(std::size_t{rows} * cols, eng());
    }
  }
  return ql;
}

// Per-test scratch directory, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("kq_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

} // namespace kq::test
