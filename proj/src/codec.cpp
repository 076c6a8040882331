#include "kq/codec.hpp"

#include <algorithm>

#include "kq/byte_io.hpp"
#include "kq/error.hpp"
#include "kq/metrics.hpp"

namespace kq {

namespace {

constexpr char kMagic[4] = {'K', 'Q', 'Z', '1'};

std::size_t packed_bytes(std::size_t count, unsigned width) { return (count * width + 7) / 8; }

} // namespace

std::vector<std::uint8_t> pack_bits(std::span<const std::uint32_t> values, unsigned width) {
  if (width > 32) throw InputError("bit width above 32");
  std::vector<std::uint8_t> out(packed_bytes(values.size(), width), 0);
  const std::uint64_t limit = std::uint64_t{1} << width;
  std::size_t bit = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t v = values[i];
    if (v >= limit)
      throw InputError("value " + std::to_string(v) + " at position " + std::to_string(i) + " exceeds " +
                       std::to_string(width) + "-bit width");
    for (unsigned b = 0; b < width; ++b, ++bit)
      if ((v >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
  }
  return out;
}

std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t count, unsigned width) {
  if (width > 32) throw FormatError("bit width above 32");
  const std::size_t need = packed_bytes(count, width);
  if (bytes.size() < need) throw FormatError("bit stream truncated");
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t v = 0;
    for (unsigned b = 0; b < width; ++b, ++bit) v |= std::uint64_t{(bytes[bit / 8] >> (bit % 8)) & 1u} << b;
    out[i] = static_cast<std::uint32_t>(v);
  }
  for (; bit < need * 8; ++bit)
    if ((bytes[bit / 8] >> (bit % 8)) & 1u) throw FormatError("nonzero padding bits");
  return out;
}

namespace {

struct LayerHeader {
  std::string name;
  std::uint8_t kind = 0;
  std::uint8_t stage = 0;
  std::vector<std::uint32_t> shape;
  std::uint32_t k = 0;
  std::uint32_t entry_dim = 0;
  std::uint8_t index_bits = 0;
  std::uint8_t codebook_bits = 0;
  std::uint32_t table_size = 0;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
  std::uint64_t accounted_bits = 0;
  std::uint64_t overhead_bits = 0;
};

std::size_t shape_product(const std::vector<std::uint32_t>& shape) {
  std::size_t p = 1;
  for (auto d : shape) p *= d;
  return p;
}

// Payload layout and bit accounting implied by the header fields.
struct Layout {
  std::uint64_t bytes = 0;
  std::uint64_t accounted_bits = 0;
  std::uint64_t overhead_bits = 0;
};

Layout layout_of(const LayerHeader& h) {
  const std::uint64_t m = shape_product(h.shape);
  const std::uint64_t n = h.entry_dim == 0 ? 0 : m / h.entry_dim;
  const std::uint64_t params = std::uint64_t{h.k} * h.entry_dim;
  Layout l;
  switch (static_cast<Stage>(h.stage)) {
  case Stage::K:
    l.bytes = params * 4 + packed_bytes(n, h.index_bits);
    l.accounted_bits = params * kFullPrecisionBits + n * h.index_bits;
    break;
  case Stage::K_plus_C:
    l.bytes = std::uint64_t{h.table_size} * 4 + packed_bytes(params, h.codebook_bits) + packed_bytes(n, h.index_bits);
    l.accounted_bits = params * h.codebook_bits + n * h.index_bits;
    l.overhead_bits = std::uint64_t{h.table_size} * kFullPrecisionBits;
    break;
  case Stage::scalar_only:
    l.bytes = std::uint64_t{h.k} * 4 + packed_bytes(m, h.index_bits);
    l.accounted_bits = std::uint64_t{h.k} * kFullPrecisionBits + m * h.index_bits;
    break;
  case Stage::passthrough:
    l.bytes = m * 4;
    l.accounted_bits = m * kFullPrecisionBits;
    break;
  }
  return l;
}

LayerHeader header_for(const QuantizedLayer& ql) {
  ql.validate();
  LayerHeader h;
  h.name = ql.name;
  h.kind = static_cast<std::uint8_t>(ql.kind);
  h.stage = static_cast<std::uint8_t>(ql.stage);
  h.shape = ql.shape;
  switch (ql.stage) {
  case Stage::K:
  case Stage::K_plus_C:
    h.k = static_cast<std::uint32_t>(ql.kernels->k());
    h.entry_dim = static_cast<std::uint32_t>(ql.kernels->dim);
    h.index_bits = static_cast<std::uint8_t>(index_bits(h.k));
    h.codebook_bits = ql.stage == Stage::K ? kFullPrecisionBits : static_cast<std::uint8_t>(ql.scalar->bits);
    if (ql.stage == Stage::K_plus_C) h.table_size = static_cast<std::uint32_t>(ql.scalar->values.size());
    break;
  case Stage::scalar_only:
    h.k = static_cast<std::uint32_t>(ql.scalar->values.size());
    h.entry_dim = 1;
    h.index_bits = static_cast<std::uint8_t>(ql.scalar->bits);
    h.codebook_bits = kFullPrecisionBits;
    break;
  case Stage::passthrough:
    h.codebook_bits = kFullPrecisionBits;
    break;
  }
  const auto l = layout_of(h);
  h.bytes = l.bytes;
  h.accounted_bits = l.accounted_bits;
  h.overhead_bits = l.overhead_bits;
  return h;
}

std::vector<std::uint8_t> layer_payload(const QuantizedLayer& ql, const LayerHeader& h) {
  detail::ByteWriter w;
  switch (ql.stage) {
  case Stage::K:
    w.floats(ql.kernels->entries);
    w.raw(pack_bits(ql.kernels->assignment, h.index_bits));
    break;
  case Stage::K_plus_C:
    w.floats(ql.scalar->values);
    w.raw(pack_bits(ql.scalar->indexes, h.codebook_bits));
    w.raw(pack_bits(ql.kernels->assignment, h.index_bits));
    break;
  case Stage::scalar_only:
    w.floats(ql.scalar->values);
    w.raw(pack_bits(ql.scalar->indexes, h.index_bits));
    break;
  case Stage::passthrough:
    w.floats(ql.raw);
    break;
  }
  return w.take();
}

void write_header(detail::ByteWriter& w, const LayerHeader& h) {
  w.str16(h.name);
  w.u8(h.kind);
  w.u8(h.stage);
  w.u8(static_cast<std::uint8_t>(h.shape.size()));
  for (auto d : h.shape) w.u32(d);
  w.u32(h.k);
  w.u32(h.entry_dim);
  w.u8(h.index_bits);
  w.u8(h.codebook_bits);
  w.u32(h.table_size);
  w.u64(h.offset);
  w.u64(h.bytes);
  w.u64(h.accounted_bits);
  w.u64(h.overhead_bits);
}

LayerHeader read_header(detail::ByteReader& r) {
  LayerHeader h;
  h.name = r.str16();
  h.kind = r.u8();
  h.stage = r.u8();
  const auto rank = r.u8();
  for (int d = 0; d < rank; ++d) h.shape.push_back(r.u32());
  h.k = r.u32();
  h.entry_dim = r.u32();
  h.index_bits = r.u8();
  h.codebook_bits = r.u8();
  h.table_size = r.u32();
  h.offset = r.u64();
  h.bytes = r.u64();
  h.accounted_bits = r.u64();
  h.overhead_bits = r.u64();
  return h;
}

[[noreturn]] void layer_error(const LayerHeader& h, const std::string& what) {
  throw FormatError("KQZ: layer '" + h.name + "': " + what);
}

std::vector<std::uint32_t> read_indexes(const LayerHeader& h, detail::ByteReader& r, std::size_t count,
                                        unsigned width, std::size_t limit, const char* what) {
  std::vector<std::uint32_t> idx;
  try {
    idx = unpack_bits(r.raw(packed_bytes(count, width)), count, width);
  } catch (const FormatError& e) {
    layer_error(h, std::string(what) + ": " + e.what());
  }
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (idx[i] >= limit)
      layer_error(h, std::string(what) + " " + std::to_string(idx[i]) + " at position " + std::to_string(i) +
                         " is out of range (" + std::to_string(limit) + " entries)");
  return idx;
}

QuantizedLayer decode_layer(const LayerHeader& h, std::span<const std::uint8_t> payload) {
  if (h.kind > 1) layer_error(h, "unknown kind");
  if (h.stage > 3) layer_error(h, "unknown stage");
  if (h.shape.empty()) layer_error(h, "empty shape");
  for (auto d : h.shape)
    if (d == 0) layer_error(h, "zero-sized dimension");
  const auto stage = static_cast<Stage>(h.stage);
  const std::size_t m = shape_product(h.shape);

  switch (stage) {
  case Stage::K:
  case Stage::K_plus_C:
    if (h.kind != 0 || h.shape.size() != 4 || h.shape[0] != h.shape[1]) layer_error(h, "kernel stage on a non-conv shape");
    if (h.entry_dim != std::uint64_t{h.shape[0]} * h.shape[0]) layer_error(h, "entry size does not match kernel size");
    if (h.k == 0) layer_error(h, "empty codebook");
    if (h.index_bits != index_bits(h.k)) layer_error(h, "index width does not match codebook size");
    if (stage == Stage::K && h.codebook_bits != 32) layer_error(h, "stage K stores 32-bit codebook values");
    if (stage == Stage::K_plus_C) {
      if (h.codebook_bits < 1 || h.codebook_bits > 16) layer_error(h, "codebook bits out of range");
      if (h.table_size == 0 || h.table_size > (1u << h.codebook_bits)) layer_error(h, "bad scalar table size");
    } else if (h.table_size != 0) {
      layer_error(h, "unexpected scalar table");
    }
    break;
  case Stage::scalar_only:
    if (h.entry_dim != 1 || h.index_bits < 1 || h.index_bits > 16) layer_error(h, "bad scalar layout");
    if (h.k == 0 || h.k > (1u << h.index_bits)) layer_error(h, "bad scalar table size");
    if (h.codebook_bits != 32 || h.table_size != 0) layer_error(h, "bad scalar layout");
    break;
  case Stage::passthrough:
    if (h.k != 0 || h.entry_dim != 0 || h.index_bits != 0 || h.codebook_bits != 32 || h.table_size != 0)
      layer_error(h, "bad passthrough layout");
    break;
  }
  const auto l = layout_of(h);
  if (l.bytes != h.bytes) layer_error(h, "payload size does not match header");
  if (l.accounted_bits != h.accounted_bits || l.overhead_bits != h.overhead_bits)
    layer_error(h, "bit accounting does not match header");

  detail::ByteReader r(payload, "KQZ: layer '" + h.name + "'");
  QuantizedLayer ql{h.name, static_cast<LayerKind>(h.kind), h.shape, stage, std::nullopt, std::nullopt, {}};
  const std::size_t n = h.entry_dim == 0 ? 0 : m / h.entry_dim;
  const std::size_t params = std::size_t{h.k} * h.entry_dim;
  switch (stage) {
  case Stage::K: {
    auto entries = r.floats(params);
    auto assignment = read_indexes(h, r, n, h.index_bits, h.k, "kernel index");
    ql.kernels = KernelCodebook::from_parts(h.entry_dim, std::move(entries), std::move(assignment));
    break;
  }
  case Stage::K_plus_C: {
    ScalarCodebook sc;
    sc.bits = h.codebook_bits;
    sc.values = r.floats(h.table_size);
    sc.indexes = read_indexes(h, r, params, h.codebook_bits, h.table_size, "codebook parameter index");
    auto assignment = read_indexes(h, r, n, h.index_bits, h.k, "kernel index");
    std::vector<float> entries(params);
    for (std::size_t p = 0; p < params; ++p) entries[p] = sc.values[sc.indexes[p]];
    ql.kernels = KernelCodebook::from_parts(h.entry_dim, std::move(entries), std::move(assignment));
    ql.scalar = std::move(sc);
    break;
  }
  case Stage::scalar_only: {
    ScalarCodebook sc;
    sc.bits = h.index_bits;
    sc.values = r.floats(h.k);
    sc.indexes = read_indexes(h, r, m, h.index_bits, h.k, "parameter index");
    ql.scalar = std::move(sc);
    break;
  }
  case Stage::passthrough:
    ql.raw = r.floats(m);
    break;
  }
  try {
    ql.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const InputError& e) {
    throw FormatError(std::string("KQZ: ") + e.what());
  }
  return ql;
}

} // namespace

std::vector<std::uint8_t> pack_model(const CompressedModel& model) {
  if (model.version != CompressedModel::kFormatVersion)
    throw InputError("cannot write KQZ version " + std::to_string(model.version));
  std::vector<LayerHeader> headers;
  std::vector<std::vector<std::uint8_t>> payloads;
  std::uint64_t offset = 0;
  for (const auto& ql : model.layers) {
    auto h = header_for(ql);
    h.offset = offset;
    auto p = layer_payload(ql, h);
    if (p.size() != h.bytes) throw Error("internal: payload size mismatch for layer '" + ql.name + "'");
    offset += p.size();
    headers.push_back(std::move(h));
    payloads.push_back(std::move(p));
  }

  detail::ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u32(model.version);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  if (model.metadata.size() > 0xFFFF) throw InputError("too many metadata entries");
  w.u16(static_cast<std::uint16_t>(model.metadata.size()));
  for (const auto& [key, value] : model.metadata) {
    w.str16(key);
    w.str16(value);
  }
  for (const auto& h : headers) write_header(w, h);
  for (const auto& p : payloads) w.raw(p);
  return w.take();
}

CompressedModel unpack_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("KQZ: bad magic");
  detail::ByteReader r(bytes, "KQZ");
  r.raw(4);
  CompressedModel model;
  model.version = r.u32();
  if (model.version != CompressedModel::kFormatVersion)
    throw FormatError("KQZ: unsupported version " + std::to_string(model.version));
  const auto count = r.u32();
  const auto meta = r.u16();
  for (int i = 0; i < meta; ++i) {
    auto key = r.str16();
    auto value = r.str16();
    model.metadata.emplace_back(std::move(key), std::move(value));
  }
  std::vector<LayerHeader> headers;
  for (std::uint32_t i = 0; i < count; ++i) headers.push_back(read_header(r));

  const std::size_t payload_start = r.position();
  std::uint64_t expected = 0;
  for (const auto& h : headers) {
    if (h.offset != expected) layer_error(h, "payload offset is not contiguous");
    if (h.bytes > r.remaining() || h.offset > r.remaining() - h.bytes) r.truncated();
    expected += h.bytes;
  }
  if (expected != r.remaining()) throw FormatError("KQZ: trailing bytes after last layer");

  for (const auto& h : headers) {
    for (const auto& other : model.layers)
      if (other.name == h.name) layer_error(h, "duplicate layer name");
    model.layers.push_back(decode_layer(h, bytes.subspan(payload_start + h.offset, h.bytes)));
  }
  return model;
}

void save_model(const CompressedModel& model, const std::filesystem::path& path) { write_file(path, pack_model(model)); }

CompressedModel load_model(const std::filesystem::path& path) { return unpack_model(read_file(path)); }

MeasuredBits measured_bits(const CompressedModel& model) {
  MeasuredBits m;
  for (const auto& ql : model.layers) {
    const auto h = header_for(ql);
    m.layers.push_back({ql.name, h.accounted_bits, h.overhead_bits});
    m.payload_bits += h.accounted_bits;
    m.overhead_bits += h.overhead_bits;
  }
  m.file_bytes = pack_model(model).size();
  return m;
}

} // namespace kq
