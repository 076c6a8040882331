#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kq/codebook_quantizer.hpp"

namespace kq::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2 };

struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path output;
  std::filesystem::path report;
  Stage stage = Stage::K_plus_C;
  double alpha = 0.5;
  double r = 0.75;
  int max_iter = 8;
  int bits = static_cast<int>(kDefaultCodebookBits);
  std::string eval = "proxy";
  std::uint64_t seed = 0;
  int workers = 0;
  // Codebook size for every kernel layer; skips the search when set.
  std::optional<std::size_t> fixed_k;
  // Treatment of FC and non-3x3 conv layers: "scalar" or "passthrough".
  std::string other = "scalar";
  int kmeans_iter = 100;
};

struct SweepConfig {
  std::filesystem::path input;
  std::filesystem::path output; // empty: stdout
  std::string layer;
  std::vector<std::size_t> ks;
  std::vector<unsigned> bit_list;
  int restarts = 3;
  std::uint64_t seed = 0;
  int workers = 0;
  int kmeans_iter = 100;
};

// Each returns an exit code and reports failures on stderr.
int cmd_quantize(const RunConfig& cfg);
int cmd_recover(const std::filesystem::path& input, const std::filesystem::path& output);
int cmd_report(const std::filesystem::path& input, const std::filesystem::path& csv, bool print_table = true);
int cmd_sweep(const SweepConfig& cfg);

int run(int argc, char** argv);

} // namespace kq::cli
