#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kq/tensor_store.hpp"

namespace kq {

struct KernelCodebook;

struct ConvShape {
  std::uint32_t omega = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t out_channels = 0;

  std::size_t kernel_count() const { return std::size_t{in_channels} * out_channels; }
  std::size_t kernel_dim() const { return std::size_t{omega} * omega; }
  bool operator==(const ConvShape&) const = default;
};

// A conv layer viewed as n kernels of w*w values each. Kernels are stored
// contiguously (kernel-major), i.e. the transpose of the w^2 x n matrix view.
struct KernelMatrix {
  ConvShape shape;
  std::vector<float> values;

  std::size_t count() const { return shape.kernel_count(); }
  std::size_t dim() const { return shape.kernel_dim(); }
  std::span<const float> kernel(std::size_t i) const { return {values.data() + i * dim(), dim()}; }
};

ConvShape conv_shape(const WeightTensor& t);

KernelMatrix to_kernel_matrix(const WeightTensor& t);

// Expands codebook entries through the per-kernel assignment.
WeightTensor from_assignments(const KernelCodebook& codebook, const ConvShape& shape, std::string name = {});

} // namespace kq
