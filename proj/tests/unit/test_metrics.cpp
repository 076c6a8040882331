#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>

#include "kq/error.hpp"
#include "kq/metrics.hpp"
#include "support.hpp"

using namespace kq;

namespace {

// Expected code length from an explicit tree with per-leaf depths.
double huffman_by_depths(const std::vector<std::uint64_t>& counts) {
  struct Node {
    std::uint64_t w;
    std::vector<std::size_t> leaves;
  };
  std::vector<Node> pool;
  std::vector<unsigned> depth(counts.size(), 0);
  double total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) pool.push_back({counts[i], {i}}), total += static_cast<double>(counts[i]);
  if (pool.size() == 1) return 1.0;
  while (pool.size() > 1) {
    std::sort(pool.begin(), pool.end(), [](const Node& a, const Node& b) { return a.w > b.w; });
    Node a = pool.back();
    pool.pop_back();
    Node b = pool.back();
    pool.pop_back();
    for (auto l : a.leaves) ++depth[l];
    for (auto l : b.leaves) ++depth[l];
    a.leaves.insert(a.leaves.end(), b.leaves.begin(), b.leaves.end());
    pool.push_back({a.w + b.w, a.leaves});
  }
  double len = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) len += static_cast<double>(counts[i]) * depth[i];
  return len / total;
}

} // namespace

TEST_CASE("layer cost") {
  const auto conv1 = layer_cost(192, 3, 60, 32);
  CHECK(conv1.bits_total == 18432);
  CHECK(format_beta(conv1) == "10.67");
  CHECK(format_beta(layer_cost(192, 3, 60, 6)) == "2.54");
  CHECK(format_beta(layer_cost(262144, 3, 512, 6)) == "1.01");
  CHECK(format_beta(layer_cost(262144, 3, 512, 32)) == "1.06");
  CHECK(format_size_fraction_percent(conv1) == "33.33");
  CHECK(conv1.size_fraction == doctest::Approx(conv1.beta / 32));
  CHECK(layer_cost(288, 3, 2, 32).bits_total == 864);
  CHECK_THROWS_AS((void)layer_cost(10, 3, 1, 32), InputError);
}

TEST_CASE("beta never drops when the index width grows") {
  for (std::uint64_t k = 2; k < 5000; ++k)
    if (index_bits(k + 1) > index_bits(k)) CHECK(layer_cost(8192, 3, k + 1, 6).beta >= layer_cost(8192, 3, k, 6).beta);
}

TEST_CASE("index bits") {
  CHECK(index_bits(1) == 0);
  CHECK(index_bits(2) == 1);
  CHECK(index_bits(3) == 2);
  CHECK(index_bits(512) == 9);
  CHECK(index_bits(513) == 10);
}

TEST_CASE("half-up rendering from exact integers") {
  CHECK(format_ratio(1, 8, 2) == "0.13");
  CHECK(format_ratio(1, 200, 2) == "0.01");
  CHECK(format_ratio(1, 201, 2) == "0.00");
  CHECK(format_ratio(7, 1, 2) == "7.00");
  CHECK(format_ratio(2, 3, 4) == "0.6667");
  CHECK(format_ratio(5, 2, 0) == "3");
}

TEST_CASE("conventional ratio") {
  CHECK(conventional_cost(10'000'000, 2, 32) == doctest::Approx(32.0).epsilon(1e-4));
  CHECK(std::abs(conventional_cost(10'000'000, 2, 32) - 32.0) < 1e-3);
  CHECK(conventional_cost(100'000'000, 4, 32) == doctest::Approx(16.0).epsilon(1e-5));
  CHECK(conventional_cost(9'000'000, 2, 32) == doctest::Approx(31.9998).epsilon(1e-6));
  CHECK_THROWS_AS((void)conventional_cost(100, 1, 32), InputError);
}

TEST_CASE("kernel quantization limits") {
  CHECK(kq_limit(3) == 288.0);
  CHECK(kq_limit(1) == 32.0);
  CHECK(kq_limit(5) == 800.0);
  CHECK(kq_ratio(100'000'000, 3, 2, 32) == doctest::Approx(288.0).epsilon(1e-5));
  CHECK(kq_ratio(192, 3, 60, 32) == doctest::Approx(32.0 / (18432.0 / 1728.0)));
}

TEST_CASE("theoretical codebook size") {
  CHECK(theoretical_codebook(2, 3) == 512);
  CHECK(theoretical_codebook(1, 3) == 1);
  CHECK(theoretical_codebook(3, 2) == 81);
  CHECK_THROWS_AS((void)theoretical_codebook(256, 3), InputError);
}

TEST_CASE("reconstruction error") {
  const auto t = test::random_conv("c", 3, 4, 4, 1);
  CHECK(reconstruction_error(t, t) == 0.0);
  auto zero = t;
  std::fill(zero.data.begin(), zero.data.end(), 0.0f);
  double norm = 0.0;
  for (float v : t.data) norm += double(v) * v;
  CHECK(reconstruction_error(t, zero) == doctest::Approx(std::sqrt(norm)).epsilon(1e-14));
  CHECK_THROWS_AS((void)reconstruction_error(t, test::random_conv("d", 3, 4, 2, 1)), InputError);

  // k-means-quantized layer: the error is the square root of the inertia
  const auto km = to_kernel_matrix(t);
  const auto ps = PointSet::unweighted(9, km.values);
  const auto c = lloyd(ps, kmeans_pp_init(ps, 5, 2));
  std::vector<float> rec(km.values.size());
  for (std::size_t i = 0; i < km.count(); ++i)
    for (std::size_t e = 0; e < 9; ++e) rec[i * 9 + e] = static_cast<float>(c.centroids[c.assignment[i] * 9 + e]);
  CHECK(reconstruction_error(km.values, rec) == doctest::Approx(std::sqrt(c.inertia)).epsilon(1e-6));
}

TEST_CASE("index histograms") {
  std::vector<std::uint32_t> uniform;
  for (std::uint32_t i = 0; i < 64; ++i) uniform.push_back(i % 16);
  CHECK(index_histogram(uniform, 16).entropy_bits == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(index_histogram(std::vector<std::uint32_t>(30, 3), 8).entropy_bits == 0.0);

  std::vector<std::uint64_t> skewed;
  for (std::uint64_t c = 512; c >= 1; c /= 2) skewed.push_back(c);
  const auto h = histogram_from_counts(skewed);
  double direct = 0.0, total = 1023.0;
  for (auto c : skewed) direct -= (c / total) * std::log2(c / total);
  CHECK(h.entropy_bits == doctest::Approx(direct).epsilon(1e-12));
  CHECK(h.total() == 1023);
  CHECK(h.entropy_bits <= std::log2(10.0));

  const auto cb = KernelCodebook::from_parts(1, {0.f, 1.f, 2.f}, {0, 0, 1, 2});
  CHECK(index_histogram(cb).counts == std::vector<std::uint64_t>{2, 1, 1});
  CHECK(index_histogram(cb).entropy_bits == doctest::Approx(1.5));
  CHECK_THROWS_AS((void)index_histogram(std::vector<std::uint32_t>{5}, 4), InputError);
}

TEST_CASE("huffman estimate") {
  for (unsigned b = 1; b <= 10; ++b)
    CHECK(huffman_estimate(histogram_from_counts(std::vector<std::uint64_t>(std::size_t{1} << b, 7))) == b);
  CHECK(huffman_estimate(histogram_from_counts({42})) == 1.0);
  CHECK(huffman_estimate(histogram_from_counts({0, 42, 0})) == 1.0);
  CHECK_THROWS_AS((void)huffman_estimate(histogram_from_counts({0, 0})), InputError);

  const auto dyadic = histogram_from_counts({8, 4, 2, 1, 1});
  CHECK(huffman_estimate(dyadic) == doctest::Approx(dyadic.entropy_bits).epsilon(1e-14));

  std::mt19937_64 eng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint64_t> counts(2 + eng() % 60);
    for (auto& c : counts) c = eng() % 1000;
    counts[0] += 1;
    const auto h = histogram_from_counts(counts);
    const double est = huffman_estimate(h);
    CHECK(est == doctest::Approx(huffman_by_depths(counts)).epsilon(1e-12));
    CHECK(est >= h.entropy_bits - 1e-12);
    CHECK(est < h.entropy_bits + 1.0);
  }
}

namespace {

QuantizedLayer fixed_kernel_layer(const std::string& name, std::uint32_t p, std::uint32_t q, std::size_t k) {
  const std::size_t n = std::size_t{p} * q;
  std::vector<std::uint32_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = static_cast<std::uint32_t>(i % k);
  auto cb = KernelCodebook::from_parts(9, test::gaussian(k * 9, 1), assign);
  return {name, LayerKind::conv, {3, 3, p, q}, Stage::K, std::move(cb), std::nullopt, {}};
}

} // namespace

TEST_CASE("model report") {
  SUBCASE("conv9-like row") {
    const auto r = model_report({fixed_kernel_layer("conv9", 512, 512, 512)});
    const auto rows = report_csv_rows(r);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].n == 262144);
    CHECK(rows[0].k == 512);
    CHECK(rows[0].beta_K == "1.06");
    CHECK(rows[0].beta_KC == "1.01");
    CHECK(rows[0].size_fraction_K == "3.32");
    CHECK(rows[0].size_fraction_KC == "3.16");
    CHECK(rows[0].entropy_bits == "9.0000");
    CHECK(rows[0].huffman_bits == "9.0000");
  }
  SUBCASE("empty model") { CHECK_THROWS_AS((void)model_report({}), InputError); }
  SUBCASE("two identical layers average to the layer value") {
    const auto one = model_report({fixed_kernel_layer("a", 64, 128, 1008)});
    const auto two = model_report({fixed_kernel_layer("a", 64, 128, 1008), fixed_kernel_layer("b", 64, 128, 1008)});
    CHECK(two.beta_K_all == one.rows[0].beta_K);
    CHECK(two.beta_KC_all == one.rows[0].beta_KC);
    CHECK(two.beta_KC_kernel == one.rows[0].beta_KC);
  }
  SUBCASE("scalar and passthrough layers count in the all-layer average only") {
    const auto fc = quantize_scalar_layer(WeightTensor::fully_connected("fc", 10, 10, test::gaussian(100, 2)), 6);
    const auto pass = make_passthrough_layer(test::random_conv("first", 7, 3, 4, 3));
    const auto r = model_report({pass, fixed_kernel_layer("a", 8, 8, 16), fc});
    CHECK(r.rows[0].beta_K == 32.0);
    CHECK(r.rows[2].bits_K == fc.scalar->values.size() * 32 + 100 * 6);
    CHECK(r.beta_K_kernel == r.rows[1].beta_K);
    CHECK(r.beta_K_all > r.beta_K_kernel);
  }
  SUBCASE("CSV round trip") {
    auto r = model_report({fixed_kernel_layer("conv1", 3, 64, 60), fixed_kernel_layer("conv3", 64, 128, 1008)});
    r.metadata = {{"alpha", "0.5"}, {"r", "0.75"}};
    const auto csv = report_to_csv(r);
    CHECK(csv.rfind("# alpha=0.5\n# r=0.75\n", 0) == 0);
    CHECK(csv.find('\r') == std::string::npos);
    CHECK(csv.find(std::string(kReportCsvHeader) + "\n") != std::string::npos);
    CHECK(parse_report_csv(csv) == report_csv_rows(r));
    CHECK(report_csv_rows(r)[0].beta_K == "10.67");
    CHECK(report_csv_rows(r)[0].beta_KC == "2.54");
    CHECK(report_to_table(r).find("10.67") != std::string::npos);
    CHECK_THROWS_AS((void)parse_report_csv("nope\n"), FormatError);
  }
}
