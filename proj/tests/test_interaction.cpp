#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "relmap/interaction.hpp"
#include "relmap/model.hpp"
#include "support/fixtures.hpp"
#include "support/model_gradcheck.hpp"

namespace relmap {
namespace {

EncoderConfig scalar_config() {
  EncoderConfig c;
  c.layers = 2;
  c.heads = 1;
  c.d_model = 1;
  c.d_head = 1;
  c.d_ff = 1;
  c.vocab_size = 4;
  c.relation_count = 1;
  return c;
}

TEST(ScoreMap, ScalarHandExample) {
  const auto config = scalar_config();
  ParameterSet<double> params;
  std::mt19937_64 rng(1);
  const auto head = register_head(params, config, "interaction.", rng);
  head.wq->values = {1.5};
  head.wk->values = {-0.5};
  Tape<double> tape;
  EncoderState<double> state;
  state.embedding = tape.constant({3, 1}, {1, 2, -1});
  const double h[3] = {1, 2, -1};
  const auto logits = score_map(state, head, config);
  ASSERT_EQ(logits.shape(), (Shape{3, 3}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(logits.at(i, j), (h[i] * 1.5) * (h[j] * -0.5));
}

TEST(ScoreMap, MeanOverHeadsScaledByRootDh) {
  EncoderConfig c = scalar_config();
  c.heads = 2;
  c.d_head = 2;
  c.d_model = 4;
  ParameterSet<double> params;
  std::mt19937_64 rng(3);
  const auto head = register_head(params, c, "interaction.", rng);
  std::normal_distribution<double> dist(0, 1);
  for (auto* p : {head.wq, head.wk, head.bq, head.bk})
    for (auto& v : p->values) v = dist(rng);
  std::vector<double> hv(5 * 4);
  for (auto& v : hv) v = dist(rng);
  Tape<double> tape;
  EncoderState<double> state;
  state.embedding = tape.constant({5, 4}, hv);
  const auto logits = score_map(state, head, c);

  // Per-head reference: project, dot within each head's slice, average.
  auto proj = [&](const Parameter<double>& w, const Parameter<double>& b, std::size_t row, std::size_t col) {
    double s = b.values[col];
    for (std::size_t k = 0; k < 4; ++k) s += hv[row * 4 + k] * w.values[k * 4 + col];
    return s;
  };
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double total = 0;
      for (std::size_t t = 0; t < 2; ++t) {
        double dot = 0;
        for (std::size_t d = 0; d < 2; ++d)
          dot += proj(*head.wq, *head.bq, i, t * 2 + d) * proj(*head.wk, *head.bk, j, t * 2 + d);
        total += dot / std::sqrt(2.0);
      }
      EXPECT_NEAR(logits.at(i, j), total / 2, 1e-12);
    }
  }
}

TEST(ScoreMap, ZeroQueryGivesHalfProbabilities) {
  const auto config = scalar_config();
  ParameterSet<double> params;
  std::mt19937_64 rng(1);
  const auto head = register_head(params, config, "interaction.", rng);
  head.wq->values = {0.0};
  Tape<double> tape;
  EncoderState<double> state;
  state.embedding = tape.constant({4, 1}, {1, 2, 3, 4});
  const auto map = to_probs(score_map(state, head, config));
  for (auto p : map.probs()) EXPECT_EQ(p, 0.5);
  EXPECT_EQ(predict_cells(map).count(), 0u);
}

TEST(ScoreMap, AuditSeesOneSquareMatrix) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 12, m = 1 + rng() % 5;
    auto config = testing::tiny_config(20, m);
    config.encoder.max_len = 32;
    Model<float> model(config, 7);
    EncodedInput input;
    for (std::size_t i = 0; i < n + m; ++i) input.ids.push_back(2 + rng() % 18);
    input.sentence_length = n;
    input.relation_count = m;
    Tape<float> tape;
    ScoringAudit audit;
    model.forward(tape, input, false, rng, &audit);
    const std::size_t l = n + m, d = config.encoder.d_model;
    const std::size_t hd = config.encoder.heads * config.encoder.d_head;
    // Weight, product, bias, biased projection for Q then K, then the map.
    const std::vector<Shape> expected{{d, hd}, {l, hd}, {1, hd}, {l, hd}, {d, hd}, {l, hd},
                                      {1, hd}, {l, hd}, {l, l}};
    EXPECT_EQ(audit.allocations, expected) << "n=" << n << " m=" << m;
    std::size_t squares = 0;
    for (const auto& s : audit.allocations) {
      EXPECT_EQ(s.size(), 2u);
      squares += s == Shape{l, l} && !(l == hd);
    }
    if (l != hd) {
      EXPECT_EQ(squares, 1u);
    }
  }
}

TEST(Thresholding, StrictInequality) {
  const std::vector<double> logits{0.0, 3.0, -3.0, std::log(0.95 / 0.05)};
  const auto map = to_probs(logits, 2, 0.5);
  EXPECT_DOUBLE_EQ(map(0, 0), 0.5);
  EXPECT_NEAR(map(0, 1), 0.9526, 1e-4);
  const auto cells = predict_cells(map);
  EXPECT_FALSE(cells(0, 0));
  EXPECT_TRUE(cells(0, 1));
  EXPECT_FALSE(cells(1, 0));
  EXPECT_TRUE(cells(1, 1));
  const auto strict = to_probs(logits, 2, 0.99);
  EXPECT_NEAR(strict(1, 1), 0.95, 1e-12);
  EXPECT_FALSE(predict_cells(strict)(1, 1));
}

TEST(Thresholding, RejectsOutOfRangeSigma) {
  EXPECT_THROW(InteractionMap(1, {0.5}, 0.0), std::invalid_argument);
  EXPECT_THROW(InteractionMap(1, {0.5}, 1.0), std::invalid_argument);
  EXPECT_THROW(InteractionMap(2, {0.5}, 0.5), std::invalid_argument);
}

TEST(Loss, AllZeroIsLn2) {
  Tape<double> tape;
  const auto loss = interaction_loss(tape.constant({4, 4}, std::vector<double>(16, 0.0)), CellMatrix(4));
  EXPECT_NEAR(loss.item(), std::log(2.0), 1e-9);
}

TEST(Loss, TwoByTwoHandCase) {
  Tape<double> tape;
  const auto gold = CellMatrix::from_rows({{true, false}, {false, false}});
  const auto loss = interaction_loss(tape.constant({2, 2}, {2, 0, 0, -2}), gold);
  const double expected = (2 * std::log1p(std::exp(-2.0)) + 2 * std::log(2.0)) / 4;
  EXPECT_NEAR(loss.item(), expected, 1e-12);
  EXPECT_NEAR(loss.item(), 0.4100, 1e-4);
}

TEST(Loss, SizeMismatchThrows) {
  Tape<double> tape;
  EXPECT_THROW(interaction_loss(tape.constant({2, 2}, {0, 0, 0, 0}), CellMatrix(3)), ShapeError);
}

TEST(Loss, PositiveForFiniteLogits) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> dist(0, 10);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(9);
    for (auto& x : v) x = dist(rng);
    const auto gold = testing::random_cells(rng, 3, 0.3);
    Tape<double> tape;
    EXPECT_GT(interaction_loss(tape.constant({3, 3}, v), gold).item(), 0.0);
  }
}

TEST(Loss, DecreasesUnderGradientDescent) {
  const auto s = testing::holmes_sentence();
  const auto schema = testing::holmes_schema();
  const std::vector<AnnotatedSentence> corpus{s};
  const auto vocab = Vocab::build(corpus, schema, 1);
  const auto input = encode_concat(s.tokens, schema, vocab);
  Model<double> model(testing::tiny_config(vocab.size(), 3), 11);
  const std::vector<CellMatrix> gold{build_gold_map(s, 3, SpanMode::single_token)};
  std::mt19937_64 rng(0);
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    model.params().zero_grads();
    Tape<double> tape;
    auto loss = model.loss(tape, input, gold, false, rng);
    losses.push_back(loss.item());
    tape.backward(loss);
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      auto& p = model.params()[i];
      for (std::size_t k = 0; k < p.size(); ++k) p.values[k] -= 0.05 * p.grad[k];
    }
  }
  std::size_t violations = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) violations += losses[i] > losses[i - 1];
  EXPECT_LE(violations, 2u);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Loss, GradientReachesEncoder) {
  const auto s = testing::holmes_sentence();
  const auto schema = testing::holmes_schema();
  const std::vector<AnnotatedSentence> corpus{s};
  const auto vocab = Vocab::build(corpus, schema, 1);
  Model<double> model(testing::tiny_config(vocab.size(), 3), 2);
  const std::vector<CellMatrix> gold{build_gold_map(s, 3, SpanMode::single_token)};
  std::mt19937_64 rng(0);
  Tape<double> tape;
  tape.backward(model.loss(tape, encode_concat(s.tokens, schema, vocab), gold, false, rng));
  for (const char* name : {"embedding.token", "embedding.position", "layer0.head0.wq", "layer0.ff.w1"}) {
    const auto* p = model.params().find(name);
    ASSERT_NE(p, nullptr) << name;
    double norm = 0;
    for (auto g : p->grad) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Export, CsvAndPgm) {
  const InteractionMap map(2, {0.0, 1.0, 0.5, 0.25});
  const std::vector<std::string> labels{"Holmes", "lives"};
  std::ostringstream csv;
  write_map_csv(csv, map, labels);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), ",Holmes,lives");
  EXPECT_NE(csv.str().find("Holmes,0"), std::string::npos);
  std::ostringstream pgm;
  write_map_pgm(pgm, map);
  const std::string bytes = pgm.str();
  const std::string header = "P5\n2 2\n255\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 255);
  EXPECT_EQ(px[2], 128);
  EXPECT_EQ(px[3], 64);
}

TEST(Export, LabelsAppendRelationWords) {
  const std::vector<std::string> tokens{"Holmes", "lives"};
  EXPECT_EQ(map_labels(tokens, testing::holmes_schema()),
            (std::vector<std::string>{"Holmes", "lives", "lives", "contains", "capital"}));
}

}  // namespace
}  // namespace relmap
