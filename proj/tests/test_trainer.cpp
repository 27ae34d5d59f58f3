#include <cmath>
#include <cstdlib>
#include <limits>

#include <gtest/gtest.h>

#include "relmap/synthetic.hpp"
#include "relmap/trainer.hpp"
#include "support/model_gradcheck.hpp"

namespace relmap {
namespace {

struct Fixture {
  RelationSchema schema;
  Vocab vocab;
  std::vector<TrainingExample> examples;
};

Fixture small_fixture(std::size_t sentences = 12, EntityMode mode = EntityMode::single_token) {
  SyntheticConfig config;
  config.relations = 3;
  config.sentences = sentences;
  config.vocab = 60;
  config.seed = 5;
  config.multi_token_rate = mode == EntityMode::multi_token ? 0.3 : 0.0;
  SyntheticGenerator gen(config);
  std::vector<AnnotatedSentence> corpus;
  for (const auto& s : gen.corpus()) corpus.push_back(s.sentence);
  Fixture f{gen.schema(), Vocab::build(corpus, gen.schema(), 1), {}};
  f.examples = make_examples(corpus, f.schema, f.vocab, mode);
  return f;
}

ModelConfig model_config(const Fixture& f, EntityMode mode = EntityMode::single_token) {
  auto c = testing::tiny_config(f.vocab.size(), f.schema.size(), mode);
  c.encoder.dropout = 0.1;
  c.encoder.max_len = 64;
  return c;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 3;
  c.threads = 1;
  c.seed = 9;
  return c;
}

template <typename Real>
void expect_same_values(const ParameterSet<Real>& a, const ParameterSet<Real>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values, b[i].values) << a[i].name();
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig ok;
  EXPECT_NO_THROW(ok.validate());
  auto bad = ok;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.learning_rate = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.learning_rate = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.threshold = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.beta2 = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.batch_size = 6;
  c.seed = 77;
  c.eval_every = 5;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(TrainConfig::from_json(nlohmann::json::object()).to_json(), TrainConfig{}.to_json());
}

TEST(WorkerThreads, ReadsEnvironment) {
  ::setenv("RELMAP_THREADS", "3", 1);
  EXPECT_EQ(worker_threads(), 3u);
  ::setenv("RELMAP_THREADS", "junk", 1);
  EXPECT_GE(worker_threads(), 1u);
  ::unsetenv("RELMAP_THREADS");
  EXPECT_GE(worker_threads(), 1u);
}

TEST(MakeExamples, SingleModeGoldIsAnchored) {
  const auto f = small_fixture(6, EntityMode::multi_token);
  for (const auto& ex : f.examples) {
    EXPECT_EQ(ex.gold_maps.size(), 3u);
    EXPECT_EQ(ex.input.ids.size(), ex.input.sentence_length + f.schema.size());
  }
  const auto single = small_fixture(6);
  for (const auto& ex : single.examples) {
    EXPECT_EQ(ex.gold_maps.size(), 1u);
    for (const auto& t : ex.gold) {
      EXPECT_EQ(t.subject.head, t.subject.tail);
      EXPECT_EQ(t.object.head, t.object.tail);
    }
  }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
  ParameterSet<double> params;
  auto& w = params.add("w", {1, 3}, true);
  w.values = {1.0, -2.0, 0.5};
  w.grad = {0.3, -4.0, 0.0};
  AdamW<double> opt(params);
  opt.adam_update(0.1);
  EXPECT_NEAR(w.values[0], 1.0 - 0.1 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(w.values[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(w.values[2], 0.5);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, SecondStepUsesBiasCorrection) {
  ParameterSet<double> params;
  auto& w = params.add("w", {1, 1}, false);
  w.values = {0.0};
  AdamW<double> opt(params, 0.9, 0.999, 1e-8);
  w.grad = {1.0};
  opt.adam_update(1.0);
  w.grad = {-1.0};
  opt.adam_update(1.0);
  const double m = 0.9 * 0.1 - 0.1, v = 0.999 * 0.001 + 0.001;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  const double first = -1.0 / (1.0 + 1e-8);
  EXPECT_NEAR(w.values[0], first - m_hat / (std::sqrt(v_hat) + 1e-8), 1e-12);
}

TEST(AdamW, DecayTouchesOnlyWeightMatrices) {
  const auto f = small_fixture(4);
  Model<float> model(model_config(f), 3);
  const auto before = model.clone();
  AdamW<float> opt(model.params());
  opt.apply_decay(0.1, 0.5);
  std::size_t decayed = 0, kept = 0;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params()[i];
    const auto& q = before.params()[i];
    if (p.decay()) {
      ++decayed;
      for (std::size_t k = 0; k < p.size(); ++k) EXPECT_EQ(p.values[k], q.values[k] - 0.05f * q.values[k]);
    } else {
      ++kept;
      EXPECT_EQ(p.values, q.values) << p.name();
      EXPECT_TRUE(p.name().find(".b") != std::string::npos || p.name().find("ln") != std::string::npos ||
                  p.name().find("bias") != std::string::npos || p.name().find("gain") != std::string::npos)
          << p.name();
    }
  }
  EXPECT_GT(decayed, 0u);
  EXPECT_GT(kept, 0u);
}

TEST(Trainer, ZeroLearningRateLeavesParametersBitIdentical) {
  auto f = small_fixture(1);
  Model<float> model(model_config(f), 4);
  const auto before = model.clone();
  auto config = quick_config();
  config.learning_rate = 0;
  config.weight_decay = 0.01;
  Trainer<float> trainer(model, config);
  const auto record = trainer.run_epoch(f.examples, 1);
  EXPECT_GT(record.mean_loss, 0.0);
  expect_same_values(model.params(), before.params());
}

TEST(Trainer, SameSeedGivesIdenticalLossCurves) {
  const auto f = small_fixture();
  auto run = [&](std::uint64_t seed) {
    Model<float> model(model_config(f), 12);
    auto config = quick_config();
    config.seed = seed;
    std::vector<double> losses;
    for (const auto& r : train(model, std::span(f.examples), {}, config)) losses.push_back(r.mean_loss);
    return std::pair{losses, std::move(model)};
  };
  auto [a, ma] = run(9);
  auto [b, mb] = run(9);
  auto [c, mc] = run(10);
  EXPECT_EQ(a, b);
  expect_same_values(ma.params(), mb.params());
  EXPECT_NE(a, c);
}

TEST(Trainer, ThreadCountDoesNotChangeTrajectory) {
  const auto f = small_fixture(16, EntityMode::multi_token);
  auto run = [&](std::size_t threads) {
    Model<double> model(model_config(f, EntityMode::multi_token), 21);
    auto config = quick_config();
    config.threads = threads;
    config.epochs = 2;
    train(model, std::span(f.examples), {}, config);
    return model;
  };
  const auto one = run(1);
  const auto three = run(3);
  expect_same_values(one.params(), three.params());
}

TEST(Trainer, LossDropsOnSmallCorpus) {
  const auto f = small_fixture();
  Model<float> model(model_config(f), 2);
  auto config = quick_config();
  config.epochs = 15;
  config.learning_rate = 3e-3;
  const auto log = train(model, std::span(f.examples), {}, config);
  ASSERT_EQ(log.size(), 15u);
  EXPECT_LT(log.back().mean_loss, 0.5 * log.front().mean_loss);
  EXPECT_EQ(log.front().epoch, 1u);
}

TEST(Trainer, DevF1LoggedWhenEvalEveryDividesEpoch) {
  const auto f = small_fixture();
  Model<float> model(model_config(f), 2);
  auto config = quick_config();
  config.epochs = 4;
  config.eval_every = 2;
  std::size_t callbacks = 0;
  const auto log = train(model, std::span(f.examples), std::span(f.examples).first(4), config,
                         [&](const EpochRecord&) { ++callbacks; });
  EXPECT_EQ(callbacks, 4u);
  EXPECT_FALSE(log[0].dev_f1.has_value());
  ASSERT_TRUE(log[1].dev_f1.has_value());
  EXPECT_GE(*log[1].dev_f1, 0.0);
  EXPECT_LE(*log[1].dev_f1, 1.0);
  EXPECT_FALSE(log[2].dev_f1.has_value());
  EXPECT_TRUE(log[3].dev_f1.has_value());
  EXPECT_TRUE(log[1].to_json().contains("dev_f1"));
  EXPECT_TRUE(log[0].to_json()["dev_f1"].is_null());
}

TEST(Trainer, EmptyDataIsAnError) {
  const auto f = small_fixture(2);
  Model<float> model(model_config(f), 2);
  EXPECT_THROW(train(model, std::span<const TrainingExample>{}, {}, quick_config()), TrainingError);
}

TEST(Trainer, NonFiniteLossAbortsNamingTheBatch) {
  const auto f = small_fixture(8);
  Model<float> model(model_config(f), 2);
  model.params().find("embedding.token")->values.assign(model.params().find("embedding.token")->size(),
                                                         std::numeric_limits<float>::quiet_NaN());
  Trainer<float> trainer(model, quick_config());
  try {
    trainer.run_epoch(f.examples, 1);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("batch"), std::string::npos) << what;
    EXPECT_NE(what.find("epoch 1"), std::string::npos) << what;
  }
}

TEST(PredictAll, MatchesExampleOrder) {
  const auto f = small_fixture(5);
  Model<float> model(model_config(f), 2);
  const auto preds = predict_all(model, std::span(f.examples));
  ASSERT_EQ(preds.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(preds[i], predict(model, f.examples[i].input).triples);
}

}  // namespace
}  // namespace relmap
