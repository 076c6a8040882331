#include "kq/kernel_matrix.hpp"

#include "kq/error.hpp"
#include "kq/kernel_quantizer.hpp"

namespace kq {

ConvShape conv_shape(const WeightTensor& t) {
  if (!t.is_conv()) throw InputError("layer '" + t.name + "' is not a conv layer");
  if (t.shape.size() != 4 || t.shape[0] != t.shape[1])
    throw InputError("layer '" + t.name + "' must have square w x w kernels");
  return {t.shape[0], t.shape[2], t.shape[3]};
}

KernelMatrix to_kernel_matrix(const WeightTensor& t) {
  KernelMatrix km{conv_shape(t), {}};
  const std::size_t n = km.count(), dim = km.dim();
  if (t.data.size() != n * dim) throw InputError("layer '" + t.name + "': data length does not match shape");
  // data is (w*w, n) row-major; transpose into kernel-major storage.
  km.values.resize(n * dim);
  for (std::size_t e = 0; e < dim; ++e) {
    const float* row = t.data.data() + e * n;
    for (std::size_t i = 0; i < n; ++i) km.values[i * dim + e] = row[i];
  }
  return km;
}

WeightTensor from_assignments(const KernelCodebook& codebook, const ConvShape& shape, std::string name) {
  const std::size_t n = shape.kernel_count(), dim = shape.kernel_dim();
  if (codebook.dim != dim)
    throw InputError("codebook entry size " + std::to_string(codebook.dim) + " does not match kernel size " +
                     std::to_string(dim));
  if (codebook.assignment.size() != n)
    throw InputError("assignment count " + std::to_string(codebook.assignment.size()) +
                     " does not match kernel count " + std::to_string(n));
  const std::size_t k = codebook.k();
  WeightTensor t{std::move(name), LayerKind::conv, {shape.omega, shape.omega, shape.in_channels, shape.out_channels},
                 std::vector<float>(n * dim)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = codebook.assignment[i];
    if (a >= k)
      throw InputError("kernel " + std::to_string(i) + " refers to entry " + std::to_string(a) + " of " +
                       std::to_string(k));
    const float* src = codebook.entries.data() + std::size_t{a} * dim;
    for (std::size_t e = 0; e < dim; ++e) t.data[e * n + i] = src[e];
  }
  return t;
}

} // namespace kq
