#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "relmap/dataset.hpp"
#include "relmap/model.hpp"
#include "relmap/tensor.hpp"
#include "relmap/tokenizer.hpp"

namespace relmap {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

// Little-endian tensor record: u32 name length, name, u8 dtype tag, u32 rank,
// u64 dims, then the raw values.
template <typename Real>
void write_tensor(std::ostream& out, const Parameter<Real>& p);

struct TensorRecord {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;
};

TensorRecord read_tensor(std::istream& in);

// Layout: "RMK1", u64 length + config JSON (model config, vocabulary,
// relation schema), u32 tensor count, tensor records in parameter order.
template <typename Real>
void save_checkpoint(const std::string& path, const Model<Real>& model, const Vocab& vocab,
                     const RelationSchema& schema);
template <typename Real>
void write_checkpoint(std::ostream& out, const Model<Real>& model, const Vocab& vocab,
                      const RelationSchema& schema);

// Validates the magic and returns the config block; "dtype" is "f32" or "f64".
nlohmann::json read_checkpoint_header(std::istream& in, const std::string& source = "<stream>");
nlohmann::json read_checkpoint_header(const std::string& path);

template <typename Real>
struct LoadedCheckpoint {
  Model<Real> model;
  Vocab vocab;
  RelationSchema schema;
};

// Errors on a bad magic, truncation, unknown or missing tensors, and shape
// disagreement with the stored config; the message names the tensor.
template <typename Real>
LoadedCheckpoint<Real> load_checkpoint(const std::string& path);
template <typename Real>
LoadedCheckpoint<Real> read_checkpoint(std::istream& in, const std::string& source = "<stream>");

}  // namespace relmap
