#include "kq/finetune.hpp"

#include <cmath>

#include "kq/error.hpp"
#include "kq/kernel_matrix.hpp"

namespace kq {

std::vector<double> elementwise_grad_average(std::span<const std::uint32_t> assignment,
                                             std::span<const float> grads, std::size_t dim, std::size_t k) {
  if (dim == 0) throw InputError("gradient dimension must be positive");
  if (grads.size() != assignment.size() * dim)
    throw InputError("gradient count " + std::to_string(grads.size() / dim) + " does not match assignment count " +
                     std::to_string(assignment.size()));
  std::vector<double> sums(k * dim, 0.0);
  std::vector<std::uint64_t> z(k, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::size_t a = assignment[i];
    if (a >= k) throw InputError("kernel " + std::to_string(i) + " refers to entry " + std::to_string(a));
    ++z[a];
    for (std::size_t e = 0; e < dim; ++e) {
      const float g = grads[i * dim + e];
      if (!std::isfinite(g)) throw InputError("non-finite gradient for kernel " + std::to_string(i));
      sums[a * dim + e] += g;
    }
  }
  for (std::size_t j = 0; j < k; ++j)
    if (z[j] > 0)
      for (std::size_t e = 0; e < dim; ++e) sums[j * dim + e] /= static_cast<double>(z[j]);
  return sums;
}

KernelCodebook apply_codebook_update(const KernelCodebook& cb, const GradientBatch& gb) {
  cb.validate();
  if (gb.dim != cb.dim) throw InputError("gradient entry size does not match the codebook");
  if (!std::isfinite(gb.learning_rate)) throw InputError("learning rate must be finite");
  const auto avg = elementwise_grad_average(cb.assignment, gb.per_kernel_grads, cb.dim, cb.k());
  KernelCodebook out = cb;
  for (std::size_t j = 0; j < cb.k(); ++j) {
    if (cb.appearance[j] == 0) continue;
    for (std::size_t e = 0; e < cb.dim; ++e) {
      const std::size_t p = j * cb.dim + e;
      out.entries[p] = static_cast<float>(static_cast<double>(cb.entries[p]) - gb.learning_rate * avg[p]);
    }
  }
  return out;
}

GradientBatch gradient_batch_from_archive(const ModelArchive& archive, const std::string& layer_name,
                                          double learning_rate) {
  const auto km = to_kernel_matrix(archive.at(layer_name));
  return {layer_name, km.dim(), km.values, learning_rate};
}

} // namespace kq
