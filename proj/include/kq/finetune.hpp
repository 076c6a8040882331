#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kq/kernel_quantizer.hpp"
#include "kq/tensor_store.hpp"

namespace kq {

// Loss gradients w.r.t. each kernel, evaluated at the quantized weights.
struct GradientBatch {
  std::string layer_name;
  std::size_t dim = 0;
  std::vector<float> per_kernel_grads; // n * dim, kernel-major
  double learning_rate = 0.001;

  std::size_t kernel_count() const { return dim == 0 ? 0 : per_kernel_grads.size() / dim; }
};

// Per-entry elementwise mean of the gradients mapped to it (k * dim).
// Entries with no kernels get zeros.
std::vector<double> elementwise_grad_average(std::span<const std::uint32_t> assignment,
                                             std::span<const float> grads, std::size_t dim, std::size_t k);

// c_i <- c_i - lr * mean gradient of S_i. Entries with no kernels are left
// untouched; assignment and appearance are copied through.
KernelCodebook apply_codebook_update(const KernelCodebook& cb, const GradientBatch& gb);

// Reads a gradient tensor laid out like the conv weights of `layer_name`.
GradientBatch gradient_batch_from_archive(const ModelArchive& archive, const std::string& layer_name,
                                          double learning_rate);

} // namespace kq
