#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kq {

enum class LayerKind : std::uint8_t { conv = 0, fully_connected = 1 };

const char* to_string(LayerKind kind);

// Full-precision weights of one layer.
//
// Conv layers have shape {w, w, p, q} (kernel side, kernel side, input
// channels, output channels); FC layers have shape {rows, cols}. `data` is
// row-major in that order, so for conv layers the q index varies fastest and
// kernel i = in * q + out.
struct WeightTensor {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  static WeightTensor conv(std::string name, std::uint32_t omega, std::uint32_t p, std::uint32_t q,
                           std::vector<float> data);
  static WeightTensor fully_connected(std::string name, std::uint32_t rows, std::uint32_t cols,
                                      std::vector<float> data);

  bool is_conv() const { return kind == LayerKind::conv; }
  std::size_t element_count() const;

  // Conv-only accessors.
  std::size_t omega() const;
  std::size_t in_channels() const;
  std::size_t out_channels() const;
  std::size_t kernel_count() const { return in_channels() * out_channels(); }

  // Throws InputError when an invariant is broken (shape/data mismatch,
  // zero dimensions, non-square conv kernels, non-finite values).
  void validate() const;

  bool operator==(const WeightTensor&) const = default;
};

struct ModelArchive {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::vector<WeightTensor> layers;

  // Index of the layer called `name`, or layers.size() when absent.
  std::size_t find(const std::string& name) const;
  const WeightTensor& at(const std::string& name) const;

  void validate() const;

  bool operator==(const ModelArchive&) const = default;
};

// KQT container:
//   "KQT1" | u32 version | u32 layer count |
//   per layer: u16 name length, UTF-8 name, u8 kind, u8 rank, u32 dims[rank],
//              float32 payload (product of dims values)
// All integers and floats little-endian.
std::vector<std::uint8_t> encode_archive(const ModelArchive& archive);
ModelArchive decode_archive(std::span<const std::uint8_t> bytes);

void save_archive(const ModelArchive& archive, const std::filesystem::path& path);
ModelArchive load_archive(const std::filesystem::path& path);

// Whole-file helpers shared with the codec.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace kq
