#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "relmap/encoder.hpp"
#include "relmap/model.hpp"
#include "support/fixtures.hpp"
#include "support/model_gradcheck.hpp"

namespace relmap {
namespace {

EncoderConfig small_config(std::size_t vocab, std::size_t relations, AblationMode mode = AblationMode::semantic_tokens) {
  EncoderConfig c;
  c.layers = 3;
  c.heads = 2;
  c.d_model = 8;
  c.d_head = 4;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.max_len = 16;
  c.vocab_size = vocab;
  c.relation_count = relations;
  c.ablation = mode;
  return c;
}

EncodedInput make_input(std::vector<std::size_t> ids, std::size_t n) {
  EncodedInput in;
  in.ids = std::move(ids);
  in.sentence_length = n;
  in.relation_count = in.ids.size() - n;
  return in;
}

TEST(EncoderConfigTest, Validation) {
  auto c = small_config(10, 2);
  EXPECT_NO_THROW(c.validate());
  c.d_model = 9;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(10, 2);
  c.layers = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(10, 2);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(EncoderConfigTest, JsonRoundTrip) {
  auto c = small_config(10, 2, AblationMode::fresh_placeholder);
  const auto back = EncoderConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.ablation, AblationMode::fresh_placeholder);
}

TEST(Embed, SameIdDiffersByPositionOnly) {
  const auto config = small_config(10, 1);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  Tape<double> tape;
  const auto h = embed(tape, make_input({5, 3, 5, 2}, 3), w, config);
  const auto& pos = w.position_embedding->values;
  for (std::size_t c = 0; c < config.d_model; ++c)
    EXPECT_NEAR(h.at(2, c) - h.at(0, c), pos[2 * config.d_model + c] - pos[c], 1e-15);
}

TEST(Embed, SemanticRelationRowUsesWordEmbedding) {
  const auto config = small_config(10, 2);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  Tape<double> tape;
  const auto h = embed(tape, make_input({4, 5, 7, 8}, 2), w, config);
  const auto& tok = w.token_embedding->values;
  const auto& pos = w.position_embedding->values;
  for (std::size_t c = 0; c < config.d_model; ++c)
    EXPECT_DOUBLE_EQ(h.at(3, c), tok[8 * config.d_model + c] + pos[3 * config.d_model + c]);
  EXPECT_EQ(w.placeholder_embedding, nullptr);
}

TEST(Embed, ErrorsOnBadInput) {
  const auto config = small_config(10, 1);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  Tape<double> tape;
  EXPECT_THROW(embed(tape, make_input({1, 10, 2}, 2), w, config), std::out_of_range);
  std::vector<std::size_t> long_ids(17, 2);
  EXPECT_THROW(embed(tape, make_input(long_ids, 16), w, config), std::length_error);
}

TEST(Embed, FreshPlaceholderIgnoresRelationWords) {
  const auto config = small_config(12, 2, AblationMode::fresh_placeholder);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  ASSERT_NE(w.placeholder_embedding, nullptr);
  // Same sentence; relation words swapped, as if the mapping file were permuted.
  Tape<double> tape;
  std::mt19937_64 unused(0);
  const auto a = encode(tape, make_input({3, 4, 5, 9, 10}, 3), w, config, false, unused);
  const auto b = encode(tape, make_input({3, 4, 5, 10, 9}, 3), w, config, false, unused);
  for (std::size_t i = 0; i < a.last().size(); ++i) EXPECT_EQ(a.last().values()[i], b.last().values()[i]);

  const auto semantic = small_config(12, 2, AblationMode::semantic_tokens);
  ParameterSet<double> sp;
  std::mt19937_64 rng2(4);
  const auto sw = register_encoder(sp, semantic, rng2);
  const auto c = encode(tape, make_input({3, 4, 5, 9, 10}, 3), sw, semantic, false, unused);
  const auto d = encode(tape, make_input({3, 4, 5, 10, 9}, 3), sw, semantic, false, unused);
  double delta = 0;
  for (std::size_t i = 0; i < c.last().size(); ++i) delta += std::abs(c.last().values()[i] - d.last().values()[i]);
  EXPECT_GT(delta, 0.0);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Tape<double> tape;
  auto q = tape.constant({3, 2}, {1, -2, 0.5, 3, -1, 0});
  auto k = tape.constant({3, 2}, {0.3, 0.7, 0.3, 0.7, 0.3, 0.7});
  auto v = tape.constant({3, 2}, {1, 2, 3, 4, 5, 9});
  const auto out = attention(q, k, v);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(out.at(r, 0), 3.0, 1e-12);
    EXPECT_NEAR(out.at(r, 1), 5.0, 1e-12);
  }
}

TEST(Attention, TwoTokenHandExample) {
  // d_h = 1, q = [1, 2], k = [0, ln 3]: row 0 scores [0, ln 3] -> [1/4, 3/4],
  // row 1 scores [0, 2 ln 3] -> [1/10, 9/10].
  Tape<double> tape;
  auto q = tape.constant({2, 1}, {1, 2});
  auto k = tape.constant({2, 1}, {0, std::log(3.0)});
  auto v = tape.constant({2, 1}, {10, 20});
  const auto p = attention_weights(q, k);
  EXPECT_NEAR(p.at(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(p.at(0, 1), 0.75, 1e-12);
  EXPECT_NEAR(p.at(1, 0), 0.1, 1e-12);
  EXPECT_NEAR(p.at(1, 1), 0.9, 1e-12);
  const auto out = attention(q, k, v);
  EXPECT_NEAR(out.at(0, 0), 17.5, 1e-12);
  EXPECT_NEAR(out.at(1, 0), 19.0, 1e-12);
}

TEST(Attention, ProbabilityRowsSumToOne) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> dist(0, 3);
  std::vector<double> qv(7 * 4), kv(7 * 4);
  for (auto& x : qv) x = dist(rng);
  for (auto& x : kv) x = dist(rng);
  Tape<double> tape;
  const auto p = attention_weights(tape.constant({7, 4}, qv), tape.constant({7, 4}, kv));
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += p.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Encode, ShapeContract) {
  EncoderConfig c;
  c.d_model = 128;
  c.heads = 4;
  c.d_head = 32;
  c.d_ff = 64;
  c.vocab_size = 20;
  c.relation_count = 3;
  ParameterSet<float> params;
  std::mt19937_64 rng(1);
  const auto w = register_encoder(params, c, rng);
  Tape<float> tape;
  const auto state = encode(tape, make_input({2, 3, 4, 5, 6, 7, 8, 9}, 5), w, c, false, rng);
  EXPECT_EQ(state.last().shape(), (Shape{8, 128}));
  EXPECT_EQ(state.hidden.size(), c.layers - 1);
  EXPECT_EQ(state.embedding.shape(), (Shape{8, 128}));
}

TEST(Encode, DeterministicWithoutDropout) {
  const auto config = small_config(10, 2);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  Tape<double> t1, t2;
  std::mt19937_64 r1(1), r2(999);
  const auto a = encode(t1, make_input({2, 3, 4, 8, 9}, 3), w, config, false, r1);
  const auto b = encode(t2, make_input({2, 3, 4, 8, 9}, 3), w, config, false, r2);
  for (std::size_t i = 0; i < a.last().size(); ++i) EXPECT_EQ(a.last().values()[i], b.last().values()[i]);
}

TEST(Encode, SentencesAreIndependentOfBatchOrder) {
  const auto config = small_config(10, 2);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  const auto x = make_input({2, 3, 4, 8, 9}, 3), y = make_input({5, 6, 8, 9}, 2);
  std::mt19937_64 unused(0);
  Tape<double> tape_xy, tape_yx;
  const auto x1 = encode(tape_xy, x, w, config, false, unused);
  const auto y1 = encode(tape_xy, y, w, config, false, unused);
  const auto y2 = encode(tape_yx, y, w, config, false, unused);
  const auto x2 = encode(tape_yx, x, w, config, false, unused);
  for (std::size_t i = 0; i < x1.last().size(); ++i) EXPECT_EQ(x1.last().values()[i], x2.last().values()[i]);
  for (std::size_t i = 0; i < y1.last().size(); ++i) EXPECT_EQ(y1.last().values()[i], y2.last().values()[i]);
}

TEST(Encode, RelationTokensReachSentenceRows) {
  const auto config = small_config(10, 2);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  const auto w = register_encoder(params, config, rng);
  std::mt19937_64 unused(0);
  Tape<double> tape;
  const auto base = encode(tape, make_input({2, 3, 4, 8, 9}, 3), w, config, false, unused);
  // Zero the embedding row of the first relation word.
  for (std::size_t c = 0; c < config.d_model; ++c) w.token_embedding->values[8 * config.d_model + c] = 0;
  const auto zeroed = encode(tape, make_input({2, 3, 4, 8, 9}, 3), w, config, false, unused);
  double delta = 0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < config.d_model; ++c) delta += std::abs(base.last().at(r, c) - zeroed.last().at(r, c));
  EXPECT_GT(delta, 0.0);
}

TEST(Encode, InitializationScheme) {
  const auto config = small_config(50, 2);
  ParameterSet<double> params;
  std::mt19937_64 rng(4);
  register_encoder(params, config, rng);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& name = p.name();
    if (name.find("gain") != std::string::npos) {
      for (auto v : p.values) EXPECT_EQ(v, 1.0) << name;
      EXPECT_FALSE(p.decay());
    } else if (name.find(".b") != std::string::npos || name.find("bias") != std::string::npos) {
      for (auto v : p.values) EXPECT_EQ(v, 0.0) << name;
      EXPECT_FALSE(p.decay()) << name;
    } else {
      EXPECT_TRUE(p.decay()) << name;
      double sq = 0;
      for (auto v : p.values) sq += v * v;
      const double sd = std::sqrt(sq / static_cast<double>(p.size()));
      if (p.size() >= 200) {
        EXPECT_NEAR(sd, 0.02, 0.004) << name;
      }
    }
  }
}

class EndToEndGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(EndToEndGradient, TinyModelSingleToken) {
  EXPECT_LT(testing::end_to_end_single_token(GetParam()).relative_error, 1e-3);
}

TEST_P(EndToEndGradient, TinyModelMultiTokenPlaceholder) {
  EXPECT_LT(testing::end_to_end_multi_token(GetParam()).relative_error, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Seeds, EndToEndGradient, ::testing::Range<std::uint64_t>(1, 21));

}  // namespace
}  // namespace relmap
