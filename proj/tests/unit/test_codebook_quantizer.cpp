#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "kq/codebook_quantizer.hpp"
#include "kq/error.hpp"
#include "kq/kernel_matrix.hpp"
#include "kq/metrics.hpp"
#include "support.hpp"

using namespace kq;

namespace {

KernelCodebook random_codebook(std::size_t k, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<std::uint32_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = static_cast<std::uint32_t>(i < k ? i : eng() % k);
  return KernelCodebook::from_parts(9, test::gaussian(k * 9, seed + 1, 0.1f), assign);
}

QuantizedLayer kernel_layer(std::uint32_t p, std::uint32_t q, std::size_t k, std::uint64_t seed) {
  const auto t = test::random_conv("L" + std::to_string(seed), 3, p, q, seed);
  const auto km = to_kernel_matrix(t);
  return make_kernel_layer(t, quantize_layer(km, k, seed));
}

double entry_error(const KernelCodebook& before, const KernelCodebook& after, std::size_t entry) {
  double s = 0.0;
  for (std::size_t e = 0; e < before.dim; ++e) {
    const double d = before.entry(entry)[e] - after.entry(entry)[e];
    s += d * d;
  }
  return s;
}

} // namespace

TEST_CASE("few distinct parameters survive unchanged") {
  std::vector<float> entries(20 * 9);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = static_cast<float>(i % 50) * 0.25f;
  std::vector<std::uint32_t> assign(40);
  for (std::size_t i = 0; i < 40; ++i) assign[i] = static_cast<std::uint32_t>(i % 20);
  const auto cb = KernelCodebook::from_parts(9, entries, assign);
  const auto [q, sc] = quantize_codebook(cb);
  CHECK(q.entries == cb.entries);
  CHECK(sc.values.size() == 50);
  CHECK(std::is_sorted(sc.values.begin(), sc.values.end()));
}

TEST_CASE("a single-center pull sits at the appearance-weighted mean") {
  // Entries 1.0 (z=1000) and 2.0 (z=1) merge; 100.0 (z=5) keeps its own center.
  std::vector<std::uint32_t> assign(1006);
  for (std::size_t i = 0; i < assign.size(); ++i) assign[i] = i < 1000 ? 0 : (i == 1000 ? 1 : 2);
  const auto cb = KernelCodebook::from_parts(1, {1.0f, 2.0f, 100.0f}, assign);
  for (int bits : {1, 0, -3}) {
    CodebookQuantOptions o;
    o.bits = clamp_bits(bits);
    const auto [q, sc] = quantize_codebook(cb, o);
    const float merged = static_cast<float>(1002.0 / 1001.0);
    CHECK(sc.values.size() == 2);
    CHECK(q.entries[0] == merged);
    CHECK(q.entries[1] == merged);
    CHECK(q.entries[2] == 100.0f);
    CHECK(merged - 1.0f < 2.0f - merged);
  }
  CodebookQuantOptions unweighted;
  unweighted.bits = 1;
  unweighted.weight_by_appearance = false;
  CHECK(quantize_codebook(cb, unweighted).first.entries[0] == 1.5f);
}

TEST_CASE("bits are clamped to [1, 16]") {
  CHECK(clamp_bits(0) == 1);
  CHECK(clamp_bits(6) == 6);
  CHECK(clamp_bits(40) == 16);
}

TEST_CASE("conv1-sized codebook: 10.67 to 2.54 bits per parameter") {
  // conv1 of VGG: 3 x 64 kernels, 60 entries
  CHECK(format_beta(layer_cost(192, 3, 60, 32)) == "10.67");
  CHECK(format_beta(layer_cost(192, 3, 60, 6)) == "2.54");
  const auto cb = random_codebook(60, 192, 4);
  const auto [q, sc] = quantize_codebook(cb);
  std::set<float> distinct(q.entries.begin(), q.entries.end());
  CHECK(distinct.size() <= 64);
  CHECK(sc.indexes.size() == 540);
  CHECK(q.assignment == cb.assignment);
  CHECK(q.appearance == cb.appearance);
}

TEST_CASE("quantization never adds distinct values") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cb = random_codebook(3 + seed * 5, 200, seed);
    for (unsigned bits : {1u, 3u, 6u, 8u}) {
      CodebookQuantOptions o;
      o.bits = bits;
      o.seed = seed;
      const auto q = quantize_codebook(cb, o).first;
      const std::set<float> before(cb.entries.begin(), cb.entries.end()), after(q.entries.begin(), q.entries.end());
      CHECK(after.size() <= before.size());
      CHECK(after.size() <= (std::size_t{1} << bits));
    }
  }
}

TEST_CASE("weighted objective does not increase over iterations") {
  const auto cb = random_codebook(40, 500, 8);
  std::vector<double> w(cb.entries.size());
  for (std::size_t p = 0; p < w.size(); ++p) w[p] = static_cast<double>(cb.appearance[p / 9]);
  const PointSet ps{1, cb.entries, w};
  const auto c = lloyd(ps, kmeans_pp_init(ps, 16, 1));
  for (std::size_t i = 1; i < c.inertia_trace.size(); ++i) CHECK(c.inertia_trace[i] <= c.inertia_trace[i - 1]);
}

TEST_CASE("a dominant entry is quantized more finely when weighted") {
  const std::size_t k = 30;
  std::vector<std::uint32_t> assign;
  for (std::size_t i = 0; i < 1000; ++i) assign.push_back(0);
  for (std::size_t j = 1; j < k; ++j) assign.push_back(static_cast<std::uint32_t>(j));
  const auto cb = KernelCodebook::from_parts(9, test::gaussian(k * 9, 17), assign);
  CodebookQuantOptions weighted, plain;
  weighted.bits = plain.bits = 2;
  plain.weight_by_appearance = false;
  const double ew = entry_error(cb, quantize_codebook(cb, weighted).first, 0);
  const double eu = entry_error(cb, quantize_codebook(cb, plain).first, 0);
  CHECK(ew < eu);
}

TEST_CASE("scalar layer quantization") {
  SUBCASE("64 distinct values are lossless") {
    std::vector<float> v(64 * 5);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i * 37) % 64) - 31.5f;
    const auto t = WeightTensor::fully_connected("fc", 16, 20, v);
    const auto ql = quantize_scalar_layer(t, 6);
    CHECK(ql.stage == Stage::scalar_only);
    CHECK(recover_layer(ql) == t);
  }
  SUBCASE("constant layer") {
    const auto t = WeightTensor::fully_connected("fc", 10, 10, std::vector<float>(100, 0.3f));
    const auto ql = quantize_scalar_layer(t);
    CHECK(ql.scalar->values.size() == 1);
    CHECK(recover_layer(ql) == t);
  }
  SUBCASE("standard normal at 6 bits") {
    const auto t = WeightTensor::fully_connected("fc", 100, 100, test::gaussian(10000, 5));
    const auto rec = recover_layer(quantize_scalar_layer(t, 6, 5));
    const double rel = reconstruction_error(t, rec) / reconstruction_error(t.data, std::vector<float>(10000, 0.0f));
    MESSAGE("relative l2 error " << rel << ", energy ratio " << rel * rel);
    CHECK(rel * rel < 0.01);
    CHECK(rel < 0.05);
  }
  SUBCASE("non-3x3 conv") {
    const auto t = test::random_conv("c1", 1, 8, 8, 2);
    const auto rec = recover_layer(quantize_scalar_layer(t, 4));
    CHECK(rec.shape == t.shape);
    CHECK(rec.kind == LayerKind::conv);
  }
}

TEST_CASE("recovery") {
  const auto ql = kernel_layer(6, 6, 10, 3);
  CHECK(recover_layer(ql) == from_assignments(*ql.kernels, conv_shape(recover_layer(ql)), ql.name));

  std::vector<QuantizedLayer> layers = {ql};
  quantize_codebooks(layers, {});
  const auto& kc = layers[0];
  CHECK(kc.stage == Stage::K_plus_C);
  CHECK_NOTHROW(kc.validate());
  const auto rec = recover_layer(kc);
  CHECK(rec.shape == ql.shape);
  for (float v : rec.data) CHECK(std::isfinite(v));

  auto broken = kc;
  broken.scalar->indexes[0] = 200;
  CHECK_THROWS_AS((void)recover_layer(broken), InputError);
  auto mismatch = kc;
  mismatch.kernels->entries[0] += 1.0f;
  CHECK_THROWS_AS(mismatch.validate(), InputError);

  const auto t = test::random_conv("p", 5, 2, 2, 1);
  CHECK(recover_layer(make_passthrough_layer(t)) == t);
}

TEST_CASE("lossless kernel layer recovers exactly") {
  const auto t = test::random_conv("c", 3, 4, 4, 6);
  const auto km = to_kernel_matrix(t);
  CHECK(recover_layer(make_kernel_layer(t, quantize_layer(km, km.count(), 1))) == t);
}

TEST_CASE("retraining hook fires every two codebooks") {
  std::vector<QuantizedLayer> layers;
  for (std::uint64_t i = 0; i < 5; ++i) layers.push_back(kernel_layer(3, 4, 5, i));
  layers.insert(layers.begin() + 2,
                quantize_scalar_layer(WeightTensor::fully_connected("fc", 4, 4, test::gaussian(16, 1))));
  std::vector<std::size_t> calls;
  quantize_codebooks(layers, {}, [&](std::size_t done) { calls.push_back(done); });
  CHECK(calls == std::vector<std::size_t>{2, 4, 5});
  CHECK(layers[2].stage == Stage::scalar_only);
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (i != 2) CHECK(layers[i].stage == Stage::K_plus_C);
}
