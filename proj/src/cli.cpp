#include "kq/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kq/codec.hpp"
#include "kq/error.hpp"
#include "kq/kernel_matrix.hpp"
#include "kq/metrics.hpp"
#include "kq/random.hpp"

namespace kq::cli {

namespace {

template <class F>
int guarded(const char* command, F&& body) {
  try {
    body();
    return kOk;
  } catch (const InputError& e) {
    std::cerr << "kq " << command << ": " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "kq " << command << ": internal error: " << e.what() << "\n";
    return kInternal;
  }
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw InputError(std::string("missing ") + what + " path");
  if (!std::filesystem::is_regular_file(p)) throw InputError(std::string(what) + " file not found: " + p.string());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << text;
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

unsigned metadata_bits(const CompressedModel& model) {
  for (const auto& [key, value] : model.metadata)
    if (key == "bits") {
      try {
        return clamp_bits(std::stoi(value));
      } catch (const std::logic_error&) {
        break;
      }
    }
  return kDefaultCodebookBits;
}

} // namespace

int cmd_quantize(const RunConfig& cfg) {
  return guarded("quantize", [&] {
    require_file(cfg.input, "input");
    if (cfg.output.empty()) throw InputError("missing output path");
    if (cfg.stage != Stage::K && cfg.stage != Stage::K_plus_C) throw InputError("stage must be K or K+C");
    if (cfg.other != "scalar" && cfg.other != "passthrough")
      throw InputError("--other must be 'scalar' or 'passthrough'");
    if (cfg.bits < 1 || cfg.bits > 16) throw InputError("--bits must be in [1, 16]");
    if (cfg.fixed_k && *cfg.fixed_k == 0) throw InputError("--k must be positive");
    SearchConfig search{cfg.alpha, cfg.r, cfg.max_iter, std::nullopt};
    search.validate();

    const auto archive = load_archive(cfg.input);
    Evaluator eval;
    if (cfg.eval == "proxy")
      eval = ProxyEvaluator(archive);
    else
      eval = CommandEvaluator(cfg.eval);

    KMeansOptions kmeans;
    kmeans.workers = cfg.workers;
    kmeans.max_iter = cfg.kmeans_iter;
    ModelQuantizeOptions mo;
    mo.quantize = {cfg.seed, kmeans};
    mo.fixed_k = cfg.fixed_k;
    mo.on_layer_done = [&](const LayerEvent& ev) {
      spdlog::debug("layer '{}' quantized; retraining hook (no-op)", archive.layers[ev.layer_index].name);
    };
    const auto mq = quantize_model(archive, search, eval, mo);

    CompressedModel model;
    std::size_t next = 0;
    for (std::size_t idx = 0; idx < archive.layers.size(); ++idx) {
      const auto& t = archive.layers[idx];
      if (next < mq.layers.size() && mq.layers[next].layer_index == idx) {
        model.layers.push_back(make_kernel_layer(t, mq.layers[next].codebook));
        ++next;
      } else if (cfg.other == "scalar") {
        model.layers.push_back(
            quantize_scalar_layer(t, static_cast<unsigned>(cfg.bits), derive_seed(cfg.seed, idx, 0x5CA1Au), kmeans));
      } else {
        model.layers.push_back(make_passthrough_layer(t));
      }
    }
    if (cfg.stage == Stage::K_plus_C) {
      CodebookQuantOptions co;
      co.bits = static_cast<unsigned>(cfg.bits);
      co.seed = cfg.seed;
      co.kmeans = kmeans;
      quantize_codebooks(model.layers, co, [](std::size_t done) {
        spdlog::debug("{} codebooks quantized; retraining hook (no-op)", done);
      });
    }

    model.metadata = {{"stage", to_string(cfg.stage)},
                      {"alpha", num(cfg.alpha)},
                      {"r", num(cfg.r)},
                      {"max_iter", std::to_string(cfg.max_iter)},
                      {"bits", std::to_string(cfg.bits)},
                      {"eval", cfg.eval},
                      {"seed", std::to_string(cfg.seed)},
                      {"other", cfg.other}};
    if (cfg.fixed_k) model.metadata.emplace_back("k", std::to_string(*cfg.fixed_k));
    save_model(model, cfg.output);

    auto report = model_report(model.layers, static_cast<unsigned>(cfg.bits));
    report.metadata = model.metadata;
    if (!cfg.report.empty()) write_text(cfg.report, report_to_csv(report));
    const auto bits = measured_bits(model);
    spdlog::info("wrote {} ({} layers, {} payload bits, {} bytes)", cfg.output.string(), model.layers.size(),
                 bits.payload_bits, bits.file_bytes);
  });
}

int cmd_recover(const std::filesystem::path& input, const std::filesystem::path& output) {
  return guarded("recover", [&] {
    require_file(input, "input");
    if (output.empty()) throw InputError("missing output path");
    const auto model = load_model(input);
    ModelArchive archive;
    for (const auto& ql : model.layers) archive.layers.push_back(recover_layer(ql));
    save_archive(archive, output);
  });
}

int cmd_report(const std::filesystem::path& input, const std::filesystem::path& csv, bool print_table) {
  return guarded("report", [&] {
    require_file(input, "input");
    const auto model = load_model(input);
    auto report = model_report(model.layers, metadata_bits(model));
    report.metadata = model.metadata;
    if (print_table) std::cout << report_to_table(report);
    if (!csv.empty()) write_text(csv, report_to_csv(report));
  });
}

int cmd_sweep(const SweepConfig& cfg) {
  return guarded("sweep", [&] {
    require_file(cfg.input, "input");
    if (cfg.layer.empty()) throw InputError("missing --layer");
    if (cfg.ks.empty() && cfg.bit_list.empty()) throw InputError("give --ks and/or --bit-list");
    const auto archive = load_archive(cfg.input);
    const auto& layer = archive.at(cfg.layer);
    KMeansOptions kmeans;
    kmeans.workers = cfg.workers;
    kmeans.max_iter = cfg.kmeans_iter;

    std::ostringstream os;
    os << "method,size,beta,l2_error\n";
    os.precision(9);
    const auto params = static_cast<double>(layer.element_count());
    if (!cfg.ks.empty()) {
      const auto km = to_kernel_matrix(layer);
      const auto ps = PointSet::unweighted(km.dim(), km.values);
      const std::size_t distinct = distinct_point_count(ps);
      for (auto k : cfg.ks) {
        if (k == 0) throw InputError("codebook sizes must be positive");
        const std::size_t k_eff = std::min(k, distinct);
        const auto c = best_of_restarts(ps, k_eff, derive_seed(cfg.seed, k), cfg.restarts, kmeans);
        auto cb = KernelCodebook::from_parts(km.dim(), std::vector<float>(c.centroids.begin(), c.centroids.end()),
                                             c.assignment);
        const auto rec = from_assignments(cb, km.shape, layer.name);
        const double bits = static_cast<double>(k * km.dim() * kFullPrecisionBits + km.count() * index_bits(k));
        os << "kq," << k << "," << bits / params << "," << reconstruction_error(layer, rec) << "\n";
      }
    }
    if (!cfg.bit_list.empty()) {
      const auto ps = PointSet::unweighted(1, layer.data);
      const std::size_t distinct = distinct_point_count(ps);
      for (auto b : cfg.bit_list) {
        if (b < 1 || b > 16) throw InputError("bit lengths must be in [1, 16]");
        const std::size_t u = std::size_t{1} << b;
        const auto c = best_of_restarts(ps, std::min(u, distinct), derive_seed(cfg.seed, 0xB17u, b), cfg.restarts,
                                        kmeans);
        std::vector<float> rec(layer.data.size());
        for (std::size_t i = 0; i < rec.size(); ++i) rec[i] = static_cast<float>(c.centroids[c.assignment[i]]);
        os << "conventional," << u << "," << (static_cast<double>(u * kFullPrecisionBits) + params * b) / params << ","
           << reconstruction_error(std::span<const float>(layer.data), std::span<const float>(rec)) << "\n";
      }
    }
    if (cfg.output.empty())
      std::cout << os.str();
    else
      write_text(cfg.output, os.str());
  });
}

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("kq");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("KQ_LOG");
  const std::string l = level ? level : "error";
  if (l == "debug")
    spdlog::set_level(spdlog::level::debug);
  else if (l == "info")
    spdlog::set_level(spdlog::level::info);
  else
    spdlog::set_level(spdlog::level::err);
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::logic_error&) {
      throw InputError(std::string("bad value '") + item + "' in " + flag);
    }
  }
  return out;
}

} // namespace

int run(int argc, char** argv) {
  if (!spdlog::get("kq")) setup_logging();

  CLI::App app{"Kernel-level quantization toolkit for convolutional weight tensors"};
  app.require_subcommand(1);

  RunConfig q;
  std::string stage = "K+C";
  std::size_t fixed_k = 0;
  auto* quantize = app.add_subcommand("quantize", "Quantize a KQT model into a KQZ file");
  quantize->add_option("--input", q.input, "Input KQT model")->required();
  quantize->add_option("--output", q.output, "Output KQZ file")->required();
  quantize->add_option("--stage", stage, "K or K+C")->check(CLI::IsMember({"K", "K+C"}));
  quantize->add_option("--alpha", q.alpha, "Initial entry ratio");
  quantize->add_option("--r", q.r, "Threshold ratio");
  quantize->add_option("--max-iter", q.max_iter, "Binary search iterations");
  quantize->add_option("--bits", q.bits, "Scalar quantization bits");
  quantize->add_option("--eval", q.eval, "\"proxy\" or an evaluator command");
  quantize->add_option("--seed", q.seed, "Random seed");
  quantize->add_option("--workers", q.workers, "Clustering threads (0 = default)");
  quantize->add_option("--report", q.report, "Write the CSV report here");
  quantize->add_option("--k", fixed_k, "Fixed codebook size (skips the search)");
  quantize->add_option("--other", q.other, "FC / non-3x3 layers: scalar or passthrough")
      ->check(CLI::IsMember({"scalar", "passthrough"}));
  quantize->add_option("--kmeans-iter", q.kmeans_iter, "k-means iteration cap");

  std::filesystem::path rin, rout;
  auto* recover = app.add_subcommand("recover", "Recover full-precision weights from a KQZ file");
  recover->add_option("--input", rin, "Input KQZ file")->required();
  recover->add_option("--output", rout, "Output KQT model")->required();

  std::filesystem::path pin, csv;
  auto* report = app.add_subcommand("report", "Print the layerwise compression report of a KQZ file");
  report->add_option("--input", pin, "Input KQZ file")->required();
  report->add_option("--csv", csv, "Also write the report as CSV");

  SweepConfig s;
  std::string ks, bit_list;
  auto* sweep = app.add_subcommand("sweep", "Reconstruction error vs codebook size for one layer");
  sweep->add_option("--input", s.input, "Input KQT model")->required();
  sweep->add_option("--layer", s.layer, "Layer name")->required();
  sweep->add_option("--ks", ks, "Comma-separated kernel codebook sizes");
  sweep->add_option("--bit-list", bit_list, "Comma-separated bit lengths for per-parameter quantization");
  sweep->add_option("--restarts", s.restarts, "k-means restarts per point (best kept)");
  sweep->add_option("--seed", s.seed, "Random seed");
  sweep->add_option("--workers", s.workers, "Clustering threads (0 = default)");
  sweep->add_option("--output", s.output, "CSV output (default stdout)");
  sweep->add_option("--kmeans-iter", s.kmeans_iter, "k-means iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*quantize) {
    q.stage = stage == "K" ? Stage::K : Stage::K_plus_C;
    if (quantize->count("--k") > 0) q.fixed_k = fixed_k;
    return cmd_quantize(q);
  }
  if (*recover) return cmd_recover(rin, rout);
  if (*report) return cmd_report(pin, csv);
  try {
    s.ks = parse_list<std::size_t>(ks, "--ks");
    s.bit_list = parse_list<unsigned>(bit_list, "--bit-list");
  } catch (const InputError& e) {
    std::cerr << "kq sweep: " << e.what() << "\n";
    return kUsage;
  }
  return cmd_sweep(s);
}

} // namespace kq::cli
