#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <sys/wait.h>
#include <unistd.h>

#include "kq/error.hpp"
#include "kq/kernel_quantizer.hpp"

namespace kq {

ProxyEvaluator::ProxyEvaluator(ModelArchive reference) : reference_(std::move(reference)) {}

double ProxyEvaluator::operator()(const ModelArchive& model) const {
  if (model.layers.size() != reference_.layers.size())
    throw InputError("proxy evaluator: model has a different layer count than the reference");
  if (model.layers.empty()) return 1.0;
  double loss = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& ref = reference_.layers[l].data;
    const auto& cur = model.layers[l].data;
    if (ref.size() != cur.size())
      throw InputError("proxy evaluator: layer '" + model.layers[l].name + "' changed size");
    double err = 0.0, energy = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double d = static_cast<double>(ref[i]) - cur[i];
      err += d * d;
      energy += static_cast<double>(ref[i]) * ref[i];
    }
    const double ratio = energy > 0.0 ? err / energy : (err > 0.0 ? 1.0 : 0.0);
    loss += std::min(1.0, ratio);
  }
  return 1.0 - loss / static_cast<double>(model.layers.size());
}

double parse_accuracy(std::string_view text) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size())
    throw Error("evaluator output is not a single decimal number: '" + std::string(text.substr(0, 64)) + "'");
  if (!std::isfinite(value) || value < 0.0 || value > 1.0)
    throw Error("evaluator accuracy " + std::string(text) + " is outside [0, 1]");
  return value;
}

CommandEvaluator::CommandEvaluator(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw InputError("empty evaluator command");
}

double CommandEvaluator::operator()(const ModelArchive& model) const {
  static std::atomic<unsigned> counter{0};
  const auto path = std::filesystem::temp_directory_path() /
                    ("kq-eval-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".kqt");
  save_archive(model, path);
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  } cleanup{path};

  const std::string cmd = command_ + " '" + path.string() + "'";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw Error("cannot run evaluator command: " + command_);
  std::string out;
  std::array<char, 256> buf{};
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), got);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error("evaluator command failed: " + command_);
  return parse_accuracy(out);
}

} // namespace kq
