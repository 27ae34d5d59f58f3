#include "relmap/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace relmap {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'M', 'K', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw CheckpointError("truncated checkpoint while reading " + what);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  // Refuse absurd lengths before allocating.
  if (n > (std::uint64_t{1} << 32)) throw CheckpointError("corrupt length while reading " + what);
  std::string s(static_cast<std::size_t>(n), '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw CheckpointError("truncated checkpoint while reading " + what);
  return s;
}

void put_value(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_value(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

template <typename Real>
constexpr DType dtype_of() {
  return sizeof(Real) == 4 ? DType::f32 : DType::f64;
}

}  // namespace

template <typename Real>
void write_tensor(std::ostream& out, const Parameter<Real>& p) {
  put_le(out, static_cast<std::uint32_t>(p.name().size()));
  out.write(p.name().data(), static_cast<std::streamsize>(p.name().size()));
  put_le(out, static_cast<std::uint8_t>(dtype_of<Real>()));
  put_le(out, static_cast<std::uint32_t>(p.shape().size()));
  for (auto d : p.shape()) put_le(out, static_cast<std::uint64_t>(d));
  for (auto v : p.values) put_value(out, v);
}

TensorRecord read_tensor(std::istream& in) {
  TensorRecord r;
  const auto name_len = get_le<std::uint32_t>(in, "tensor name length");
  r.name = get_bytes(in, name_len, "tensor name");
  const auto tag = get_le<std::uint8_t>(in, "dtype of " + r.name);
  if (tag > 1) throw CheckpointError("tensor " + r.name + ": unknown dtype tag " + std::to_string(tag));
  r.dtype = static_cast<DType>(tag);
  const auto rank = get_le<std::uint32_t>(in, "rank of " + r.name);
  if (rank > 8) throw CheckpointError("tensor " + r.name + ": implausible rank " + std::to_string(rank));
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get_le<std::uint64_t>(in, "shape of " + r.name);
    if (d > (std::uint64_t{1} << 32)) throw CheckpointError("tensor " + r.name + ": implausible dimension");
    r.shape.push_back(static_cast<std::size_t>(d));
    count *= d;
  }
  if (count > (std::uint64_t{1} << 32)) throw CheckpointError("tensor " + r.name + ": implausible size");
  r.values.resize(static_cast<std::size_t>(count));
  for (auto& v : r.values) {
    if (r.dtype == DType::f32)
      v = std::bit_cast<float>(get_le<std::uint32_t>(in, "values of " + r.name));
    else
      v = std::bit_cast<double>(get_le<std::uint64_t>(in, "values of " + r.name));
  }
  return r;
}

template <typename Real>
void write_checkpoint(std::ostream& out, const Model<Real>& model, const Vocab& vocab,
                      const RelationSchema& schema) {
  nlohmann::json header;
  header["dtype"] = dtype_of<Real>() == DType::f32 ? "f32" : "f64";
  header["model"] = model.config().to_json();
  header["vocab"] = vocab.tokens();
  header["relations"] = nlohmann::json::array();
  for (const auto& r : schema.relations()) header["relations"].push_back({r.label, r.word});
  const std::string text = header.dump();

  out.write(kMagic.data(), kMagic.size());
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& params = model.params();
  put_le(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) write_tensor(out, params[i]);
}

template <typename Real>
void save_checkpoint(const std::string& path, const Model<Real>& model, const Vocab& vocab,
                     const RelationSchema& schema) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(out, model, vocab, schema);
  out.flush();
  if (!out) throw CheckpointError("failed writing " + path);
}

nlohmann::json read_checkpoint_header(std::istream& in, const std::string& source) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw CheckpointError(source + ": truncated checkpoint header");
  if (magic != kMagic) throw CheckpointError(source + ": not a checkpoint (bad magic)");
  const auto length = get_le<std::uint64_t>(in, "config block length");
  try {
    return nlohmann::json::parse(get_bytes(in, length, "config block"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(source + ": malformed config block: " + e.what());
  }
}

nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint_header(in, path);
}

template <typename Real>
LoadedCheckpoint<Real> read_checkpoint(std::istream& in, const std::string& source) {
  const auto header = read_checkpoint_header(in, source);

  ModelConfig config;
  std::vector<Relation> relations;
  std::vector<std::string> tokens;
  try {
    config = ModelConfig::from_json(header.at("model"));
    tokens = header.at("vocab").get<std::vector<std::string>>();
    for (const auto& r : header.at("relations"))
      relations.push_back({r.at(0).get<std::string>(), r.at(1).get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(source + ": incomplete config block: " + e.what());
  }

  Model<Real> model(config, 0);
  auto& params = model.params();
  const auto count = get_le<std::uint32_t>(in, "tensor count");
  if (count != params.size())
    throw CheckpointError(source + ": expected " + std::to_string(params.size()) + " tensors, found " +
                          std::to_string(count));
  for (std::uint32_t i = 0; i < count; ++i) {
    auto record = read_tensor(in);
    auto* p = params.find(record.name);
    if (!p) throw CheckpointError(source + ": unexpected tensor " + record.name);
    if (record.shape != p->shape())
      throw CheckpointError(source + ": shape mismatch for tensor " + record.name + ": stored " +
                            shape_string(record.shape) + ", config expects " + shape_string(p->shape()));
    for (std::size_t k = 0; k < record.values.size(); ++k) p->values[k] = static_cast<Real>(record.values[k]);
  }
  return {std::move(model), Vocab(std::move(tokens)), RelationSchema(std::move(relations))};
}

template <typename Real>
LoadedCheckpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return read_checkpoint<Real>(in, path);
}

#define RELMAP_INSTANTIATE_CHECKPOINT(R)                                                                \
  template void write_tensor(std::ostream&, const Parameter<R>&);                                      \
  template void write_checkpoint(std::ostream&, const Model<R>&, const Vocab&, const RelationSchema&); \
  template void save_checkpoint(const std::string&, const Model<R>&, const Vocab&, const RelationSchema&); \
  template LoadedCheckpoint<R> read_checkpoint(std::istream&, const std::string&);                     \
  template LoadedCheckpoint<R> load_checkpoint(const std::string&);

RELMAP_INSTANTIATE_CHECKPOINT(float)
RELMAP_INSTANTIATE_CHECKPOINT(double)

}  // namespace relmap
