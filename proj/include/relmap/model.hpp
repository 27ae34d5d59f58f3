#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relmap/dataset.hpp"
#include "relmap/encoder.hpp"
#include "relmap/interaction.hpp"
#include "relmap/tensor.hpp"
#include "relmap/tokenizer.hpp"

namespace relmap {

// single_token scores one map over span heads; multi_token scores the head,
// tail and cross maps with separate heads on the shared encoder.
enum class EntityMode { single_token, multi_token };

std::string_view to_string(EntityMode mode);
EntityMode parse_entity_mode(std::string_view name);
std::vector<SpanMode> map_modes(EntityMode mode);

struct ModelConfig {
  EncoderConfig encoder;
  EntityMode entity_mode = EntityMode::single_token;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

template <typename Real>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // Same architecture and parameter values; gradients start at zero.
  Model clone() const;

  const ModelConfig& config() const { return config_; }
  ParameterSet<Real>& params() { return params_; }
  const ParameterSet<Real>& params() const { return params_; }
  const EncoderWeights<Real>& encoder_weights() const { return encoder_; }
  const std::vector<HeadWeights<Real>>& heads() const { return heads_; }

  struct Forward {
    EncoderState<Real> state;
    std::vector<Tensor<Real>> logits;  // one per map_modes() entry
  };

  Forward forward(Tape<Real>& tape, const EncodedInput& input, bool training, std::mt19937_64& rng,
                  ScoringAudit* audit = nullptr) const;

  // Mean of the per-map BCE losses; gold holds one map per map_modes() entry.
  Tensor<Real> loss(Tape<Real>& tape, const EncodedInput& input, std::span<const CellMatrix> gold,
                    bool training, std::mt19937_64& rng) const;

 private:
  ModelConfig config_;
  ParameterSet<Real> params_;
  EncoderWeights<Real> encoder_;
  std::vector<HeadWeights<Real>> heads_;
};

struct Prediction {
  std::vector<InteractionMap> maps;
  TripleSet triples;
};

// Inference with dropout off.
template <typename Real>
Prediction predict(const Model<Real>& model, const EncodedInput& input, double threshold = 0.5);

}  // namespace relmap
