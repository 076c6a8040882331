#include "kq/tensor_store.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "kq/byte_io.hpp"
#include "kq/error.hpp"

namespace kq {

namespace {

constexpr char kMagic[4] = {'K', 'Q', 'T', '1'};

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

} // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
  case LayerKind::conv:
    return "conv";
  case LayerKind::fully_connected:
    return "fully_connected";
  }
  return "unknown";
}

WeightTensor WeightTensor::conv(std::string name, std::uint32_t omega, std::uint32_t p, std::uint32_t q,
                                std::vector<float> data) {
  WeightTensor t{std::move(name), LayerKind::conv, {omega, omega, p, q}, std::move(data)};
  t.validate();
  return t;
}

WeightTensor WeightTensor::fully_connected(std::string name, std::uint32_t rows, std::uint32_t cols,
                                           std::vector<float> data) {
  WeightTensor t{std::move(name), LayerKind::fully_connected, {rows, cols}, std::move(data)};
  t.validate();
  return t;
}

std::size_t WeightTensor::element_count() const { return product(shape); }

std::size_t WeightTensor::omega() const {
  if (!is_conv()) throw InputError("layer '" + name + "' is not a conv layer");
  return shape.at(0);
}
std::size_t WeightTensor::in_channels() const {
  if (!is_conv()) throw InputError("layer '" + name + "' is not a conv layer");
  return shape.at(2);
}
std::size_t WeightTensor::out_channels() const {
  if (!is_conv()) throw InputError("layer '" + name + "' is not a conv layer");
  return shape.at(3);
}

void WeightTensor::validate() const {
  const std::string where = "layer '" + name + "': ";
  if (kind == LayerKind::conv && shape.size() != 4) throw InputError(where + "conv tensors must have rank 4");
  if (kind == LayerKind::fully_connected && shape.size() != 2)
    throw InputError(where + "fully connected tensors must have rank 2");
  if (kind != LayerKind::conv && kind != LayerKind::fully_connected) throw InputError(where + "unknown layer kind");
  for (auto d : shape)
    if (d == 0) throw InputError(where + "zero-sized dimension");
  if (kind == LayerKind::conv && shape[0] != shape[1])
    throw InputError(where + "non-square kernels are not supported");
  if (data.size() != product(shape)) throw InputError(where + "data length does not match shape");
  for (float v : data)
    if (!std::isfinite(v)) throw InputError(where + "non-finite value");
}

std::size_t ModelArchive::find(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return i;
  return layers.size();
}

const WeightTensor& ModelArchive::at(const std::string& name) const {
  auto i = find(name);
  if (i == layers.size()) throw InputError("no layer named '" + name + "'");
  return layers[i];
}

void ModelArchive::validate() const {
  std::set<std::string> names;
  for (const auto& t : layers) {
    t.validate();
    if (!names.insert(t.name).second) throw InputError("duplicate layer name '" + t.name + "'");
  }
}

std::vector<std::uint8_t> encode_archive(const ModelArchive& archive) {
  archive.validate();
  detail::ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u32(archive.version);
  w.u32(static_cast<std::uint32_t>(archive.layers.size()));
  for (const auto& t : archive.layers) {
    w.str16(t.name);
    w.u8(static_cast<std::uint8_t>(t.kind));
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(d);
    w.floats(t.data);
  }
  return w.take();
}

ModelArchive decode_archive(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "KQT");
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("KQT: bad magic");
  r.raw(4);
  ModelArchive archive;
  archive.version = r.u32();
  if (archive.version != ModelArchive::kFormatVersion)
    throw FormatError("KQT: unsupported version " + std::to_string(archive.version));
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightTensor t;
    t.name = r.str16();
    auto kind = r.u8();
    if (kind > 1) throw FormatError("KQT: layer '" + t.name + "' has unknown kind " + std::to_string(kind));
    t.kind = static_cast<LayerKind>(kind);
    auto rank = r.u8();
    for (int d = 0; d < rank; ++d) t.shape.push_back(r.u32());
    std::size_t elems = 1;
    for (auto d : t.shape) {
      if (d != 0 && elems > r.remaining() / d) r.truncated();
      elems *= d;
    }
    t.data = r.floats(elems);
    try {
      t.validate();
    } catch (const InputError& e) {
      throw FormatError(std::string("KQT: ") + e.what());
    }
    archive.layers.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("KQT: trailing bytes after last layer");
  try {
    archive.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("KQT: ") + e.what());
  }
  return archive;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

void save_archive(const ModelArchive& archive, const std::filesystem::path& path) {
  write_file(path, encode_archive(archive));
}

ModelArchive load_archive(const std::filesystem::path& path) { return decode_archive(read_file(path)); }

} // namespace kq
