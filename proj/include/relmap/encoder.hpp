#pragma once

#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relmap/tensor.hpp"
#include "relmap/tokenizer.hpp"

namespace relmap {

// semantic_tokens embeds relation positions through the vocabulary entry of
// the relation word; fresh_placeholder gives each relation its own randomly
// initialized row, unrelated to any word.
enum class AblationMode { semantic_tokens, fresh_placeholder };

std::string_view to_string(AblationMode mode);
AblationMode parse_ablation_mode(std::string_view name);

struct EncoderConfig {
  // Counts the interaction head as the last layer: layers - 1 full
  // transformer layers run before it.
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t d_ff = 256;
  double dropout = 0.1;
  std::size_t max_len = 128;
  AblationMode ablation = AblationMode::semantic_tokens;
  std::size_t vocab_size = 0;
  std::size_t relation_count = 0;

  // Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

template <typename Real>
struct LayerWeights {
  std::vector<Parameter<Real>*> wq, bq, wk, bk, wv, bv;  // one per head
  Parameter<Real>* wo = nullptr;
  Parameter<Real>* bo = nullptr;
  Parameter<Real>* ln1_gain = nullptr;
  Parameter<Real>* ln1_bias = nullptr;
  Parameter<Real>* w1 = nullptr;
  Parameter<Real>* b1 = nullptr;
  Parameter<Real>* w2 = nullptr;
  Parameter<Real>* b2 = nullptr;
  Parameter<Real>* ln2_gain = nullptr;
  Parameter<Real>* ln2_bias = nullptr;
};

template <typename Real>
struct EncoderWeights {
  Parameter<Real>* token_embedding = nullptr;
  Parameter<Real>* position_embedding = nullptr;
  Parameter<Real>* placeholder_embedding = nullptr;  // fresh_placeholder only
  std::vector<LayerWeights<Real>> layers;
};

// Registers the encoder parameters in `params` and initializes them: weight
// matrices ~ N(0, 0.02), biases 0, layer-norm gains 1.
template <typename Real>
EncoderWeights<Real> register_encoder(ParameterSet<Real>& params, const EncoderConfig& config,
                                      std::mt19937_64& rng);

// H (the input embedding) and the outputs H_1 .. H_{layers-1}.
template <typename Real>
struct EncoderState {
  Tensor<Real> embedding;
  std::vector<Tensor<Real>> hidden;

  const Tensor<Real>& last() const { return hidden.empty() ? embedding : hidden.back(); }
};

// Token row plus learned position row for every position of the input.
template <typename Real>
Tensor<Real> embed(Tape<Real>& tape, const EncodedInput& input, const EncoderWeights<Real>& weights,
                   const EncoderConfig& config);

// softmax(Q K^T / sqrt(d_h)) for one head.
template <typename Real>
Tensor<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k);

template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v);

// Post-norm layers with full bidirectional attention over sentence and
// relation positions. Throws when the input exceeds config.max_len.
template <typename Real>
EncoderState<Real> encode(Tape<Real>& tape, const EncodedInput& input,
                          const EncoderWeights<Real>& weights, const EncoderConfig& config,
                          bool training, std::mt19937_64& rng);

}  // namespace relmap
