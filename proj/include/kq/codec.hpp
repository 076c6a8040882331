#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kq/codebook_quantizer.hpp"

namespace kq {

// Fixed-width little-endian bit packing: value i occupies bits
// [i*width, (i+1)*width) of the stream, LSB first within each byte. The
// final byte is zero-padded.
std::vector<std::uint8_t> pack_bits(std::span<const std::uint32_t> values, unsigned width);
// Throws FormatError when the stream is short or padding bits are set.
std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t count, unsigned width);

struct CompressedModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<QuantizedLayer> layers;

  bool operator==(const CompressedModel&) const = default;
};

std::vector<std::uint8_t> pack_model(const CompressedModel& model);
CompressedModel unpack_model(std::span<const std::uint8_t> bytes);

void save_model(const CompressedModel& model, const std::filesystem::path& path);
CompressedModel load_model(const std::filesystem::path& path);

struct LayerBits {
  std::string layer;
  std::uint64_t payload_bits = 0;  // accounted storage
  std::uint64_t overhead_bits = 0; // scalar table of K+C layers
};

struct MeasuredBits {
  std::vector<LayerBits> layers;
  std::uint64_t payload_bits = 0;
  std::uint64_t overhead_bits = 0;
  std::uint64_t file_bytes = 0;
};

MeasuredBits measured_bits(const CompressedModel& model);

} // namespace kq
