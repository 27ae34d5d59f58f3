// relmap: synthetic data, training, prediction, evaluation, map inspection
// and timing for the interaction-map triple extractor.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relmap/bench.hpp"
#include "relmap/checkpoint.hpp"
#include "relmap/dataset.hpp"
#include "relmap/decoder.hpp"
#include "relmap/evaluation.hpp"
#include "relmap/model.hpp"
#include "relmap/synthetic.hpp"
#include "relmap/tokenizer.hpp"
#include "relmap/trainer.hpp"

using namespace relmap;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

LoadedDataset load_reported(const std::string& path, const RelationSchema& schema, const LoadOptions& options) {
  auto data = load_dataset(path, schema, options);
  std::cerr << nlohmann::json{{"ingestion", path}, {"report", data.report.to_json()}}.dump() << "\n";
  return data;
}

// ---------------------------------------------------------------------------
// make-synthetic

struct SyntheticArgs {
  SyntheticConfig config;
  std::string mix = "normal,seo,epo,soo";
  std::string out_data;
  std::string out_relmap;
};

int run_make_synthetic(SyntheticArgs& args) {
  args.config.mix.clear();
  std::stringstream ss(args.mix);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    for (auto& c : item) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (item == "normal") args.config.mix.push_back(OverlapPattern::normal);
    else if (item == "seo") args.config.mix.push_back(OverlapPattern::seo);
    else if (item == "epo") args.config.mix.push_back(OverlapPattern::epo);
    else if (item == "soo") args.config.mix.push_back(OverlapPattern::soo);
    else throw UsageError("--overlap-mix: unknown pattern '" + item + "'");
  }
  if (args.config.mix.empty()) throw UsageError("--overlap-mix must name at least one pattern");
  SyntheticGenerator gen(args.config);
  const auto corpus = gen.corpus();
  auto data = open_out(args.out_data);
  write_jsonl(corpus, gen.schema(), data);
  finish(data, args.out_data);
  auto relmap = open_out(args.out_relmap);
  gen.schema().write_tsv(relmap);
  finish(relmap, args.out_relmap);
  std::cout << "wrote " << corpus.size() << " sentences to " << args.out_data << " and " << gen.schema().size()
            << " relations to " << args.out_relmap << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, dev, relmap, config, out_checkpoint, log;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

// Config file: {"model": {...}, "train": {...}, "min_freq": 1,
// "precision": "f32" | "f64"}; every key is optional.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t min_freq = 1;
  std::string precision = "f32";
};

RunConfig read_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  const auto j = read_json_file(path);
  try {
    if (j.contains("model")) rc.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) rc.train = TrainConfig::from_json(j.at("train"));
    rc.min_freq = j.value("min_freq", rc.min_freq);
    rc.precision = j.value("precision", rc.precision);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (rc.precision != "f32" && rc.precision != "f64")
    throw std::runtime_error(path + ": precision must be f32 or f64");
  return rc;
}

template <typename Real>
int train_with(const TrainArgs& args, RunConfig rc) {
  const auto schema = RelationSchema::load_tsv(args.relmap);
  LoadOptions options;
  options.max_sequence_length = rc.model.encoder.max_len;
  const auto train_set = load_reported(args.data, schema, options);
  if (train_set.sentences.empty()) throw std::runtime_error(args.data + ": no usable sentences");
  const auto vocab = Vocab::build(train_set.sentences, schema, rc.min_freq);
  rc.model.encoder.vocab_size = vocab.size();
  rc.model.encoder.relation_count = schema.size();

  const auto examples = make_examples(train_set.sentences, schema, vocab, rc.model.entity_mode);
  std::vector<TrainingExample> dev_examples;
  if (!args.dev.empty()) {
    const auto dev = load_reported(args.dev, schema, options);
    dev_examples = make_examples(dev.sentences, schema, vocab, rc.model.entity_mode);
  }

  Model<Real> model(rc.model, rc.train.seed);
  std::ofstream log;
  if (!args.log.empty()) log = open_out(args.log);
  std::printf("training %zu sentences, %zu relations, vocab %zu, %zu parameters\n", examples.size(), schema.size(),
              vocab.size(), model.params().scalar_count());
  train(model, examples, dev_examples, rc.train, [&](const EpochRecord& r) {
    if (r.dev_f1)
      std::printf("epoch %4zu  loss %.6f  dev_f1 %.4f  %.2fs\n", r.epoch, r.mean_loss, *r.dev_f1, r.seconds);
    else
      std::printf("epoch %4zu  loss %.6f  %.2fs\n", r.epoch, r.mean_loss, r.seconds);
    std::fflush(stdout);
    if (log) log << r.to_json().dump() << "\n";
  });
  if (log) finish(log, args.log);
  save_checkpoint(args.out_checkpoint, model, vocab, schema);
  std::printf("checkpoint written to %s\n", args.out_checkpoint.c_str());
  return 0;
}

int run_train(const TrainArgs& args) {
  auto rc = read_run_config(args.config);
  if (args.seed) rc.train.seed = *args.seed;
  if (args.epochs) rc.train.epochs = *args.epochs;
  return rc.precision == "f64" ? train_with<double>(args, rc) : train_with<float>(args, rc);
}

// Dispatches on the precision recorded in the checkpoint.
template <typename F>
int with_checkpoint(const std::string& path, F&& body) {
  const auto header = read_checkpoint_header(path);
  if (header.value("dtype", std::string("f32")) == "f64") return body(load_checkpoint<double>(path));
  return body(load_checkpoint<float>(path));
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string checkpoint, data, out;
  double threshold = 0.5;
};

nlohmann::json prediction_json(const AnnotatedSentence& s, const TripleSet& triples, const RelationSchema& schema,
                               EntityMode mode) {
  nlohmann::json j;
  j["text"] = s.text;
  j["entity_mode"] = std::string(to_string(mode));
  j["triple_list"] = nlohmann::json::array();
  j["spans"] = nlohmann::json::array();
  for (const auto& t : triples) {
    j["triple_list"].push_back(
        {span_text(s.tokens, t.subject), schema[t.relation].label, span_text(s.tokens, t.object)});
    j["spans"].push_back({{"subject", {t.subject.head, t.subject.tail}},
                          {"relation", schema[t.relation].label},
                          {"object", {t.object.head, t.object.tail}}});
  }
  return j;
}

int run_predict(const PredictArgs& args) {
  return with_checkpoint(args.checkpoint, [&](auto&& ck) {
    LoadOptions options;
    options.max_sequence_length = ck.model.config().encoder.max_len;
    const auto data = load_reported(args.data, ck.schema, options);
    auto out = open_out(args.out);
    for (const auto& s : data.sentences) {
      const auto input = encode_concat(s.tokens, ck.schema, ck.vocab);
      const auto p = predict(ck.model, input, args.threshold);
      out << prediction_json(s, p.triples, ck.schema, ck.model.config().entity_mode).dump() << "\n";
    }
    finish(out, args.out);
    std::printf("wrote predictions for %zu sentences to %s\n", data.sentences.size(), args.out.c_str());
    return 0;
  });
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred, gold, relmap, mode = "auto", json_out;
};

struct PredictedLine {
  std::string text;
  std::optional<EntityMode> mode;
  TripleSet triples;
};

std::vector<PredictedLine> read_predictions(const std::string& path, const RelationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<PredictedLine> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      PredictedLine p;
      p.text = j.at("text").get<std::string>();
      if (j.contains("entity_mode")) p.mode = parse_entity_mode(j.at("entity_mode").get<std::string>());
      for (const auto& t : j.at("spans")) {
        const auto label = t.at("relation").get<std::string>();
        const auto rel = schema.find(label);
        if (!rel) throw DataError("unknown relation label " + label);
        p.triples.insert({{t.at("subject").at(0).get<std::size_t>(), t.at("subject").at(1).get<std::size_t>()},
                          *rel,
                          {t.at("object").at(0).get<std::size_t>(), t.at("object").at(1).get<std::size_t>()}});
      }
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return out;
}

int run_eval(const EvalArgs& args) {
  const auto schema = RelationSchema::load_tsv(args.relmap);
  const auto gold = load_reported(args.gold, schema, {});
  const auto preds = read_predictions(args.pred, schema);
  if (preds.size() != gold.sentences.size())
    throw std::runtime_error(args.pred + " has " + std::to_string(preds.size()) + " predictions but " + args.gold +
                             " has " + std::to_string(gold.sentences.size()) + " usable sentences");
  std::vector<TripleSet> predicted, gold_sets;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].text != gold.sentences[i].text)
      throw std::runtime_error(args.pred + ": prediction " + std::to_string(i + 1) + " does not match gold text");
    predicted.push_back(preds[i].triples);
    gold_sets.emplace_back(gold.sentences[i].triples.begin(), gold.sentences[i].triples.end());
  }
  MatchMode mode = MatchMode::span;
  if (args.mode == "anchor") {
    mode = MatchMode::anchor;
  } else if (args.mode == "auto") {
    if (!preds.empty() && preds.front().mode == EntityMode::single_token) mode = MatchMode::anchor;
  } else if (args.mode != "span") {
    throw UsageError("--mode must be anchor, span or auto");
  }
  const auto report = breakdown(predicted, gold_sets, gold.sentences, mode);
  std::printf("match: %s\n%s", mode == MatchMode::anchor ? "anchor" : "span", report.render_text().c_str());
  if (!args.json_out.empty()) {
    auto out = open_out(args.json_out);
    out << report.to_json().dump(2) << "\n";
    finish(out, args.json_out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// inspect-map

struct InspectArgs {
  std::string checkpoint, sentence, out_csv, out_pgm;
  double threshold = 0.5;
};

int run_inspect(const InspectArgs& args) {
  return with_checkpoint(args.checkpoint, [&](auto&& ck) {
    const auto tokens = tokenize(args.sentence);
    if (tokens.empty()) throw UsageError("--sentence is empty");
    const auto input = encode_concat(tokens, ck.schema, ck.vocab);
    const auto p = predict(ck.model, input, args.threshold);
    const auto labels = map_labels(tokens, ck.schema);
    const auto modes = map_modes(ck.model.config().entity_mode);
    for (std::size_t k = 0; k < p.maps.size(); ++k) {
      // One file per map; multi-token checkpoints get a mode suffix.
      auto with_suffix = [&](const std::string& path) {
        if (p.maps.size() == 1) return path;
        const auto dot = path.find_last_of('.');
        const std::string tag = "." + std::string(to_string(modes[k]));
        return dot == std::string::npos ? path + tag : path.substr(0, dot) + tag + path.substr(dot);
      };
      if (!args.out_csv.empty()) {
        const auto path = with_suffix(args.out_csv);
        auto out = open_out(path);
        write_map_csv(out, p.maps[k], labels);
        finish(out, path);
      }
      if (!args.out_pgm.empty()) {
        const auto path = with_suffix(args.out_pgm);
        auto out = open_out(path);
        write_map_pgm(out, p.maps[k]);
        finish(out, path);
      }
    }
    for (const auto& t : p.triples)
      std::printf("(%s, %s, %s)\n", span_text(tokens, t.subject).c_str(), ck.schema[t.relation].label.c_str(),
                  span_text(tokens, t.object).c_str());
    return 0;
  });
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string checkpoint, data, mode, config;
  std::size_t repeats = 3;
};

int run_bench(const BenchArgs& args) {
  const auto mode = parse_bench_mode(args.mode);
  const auto rc = read_run_config(args.config);
  return with_checkpoint(args.checkpoint, [&](auto&& ck) {
    LoadOptions options;
    options.max_sequence_length = ck.model.config().encoder.max_len;
    const auto data = load_reported(args.data, ck.schema, options);
    const auto examples = make_examples(data.sentences, ck.schema, ck.vocab, ck.model.config().entity_mode);
    const auto result = bench(ck.model, examples, mode, rc.train, args.repeats);
    std::printf("%s\n", result.line().c_str());
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relmap: joint entity and relation extraction with a unified interaction map"};
  app.require_subcommand(1);

  SyntheticArgs syn;
  auto* make = app.add_subcommand("make-synthetic", "Generate a synthetic JSONL corpus and relation map");
  make->add_option("--relations", syn.config.relations, "Number of relations")->check(CLI::PositiveNumber);
  make->add_option("--sentences", syn.config.sentences, "Number of sentences")->check(CLI::PositiveNumber);
  make->add_option("--vocab", syn.config.vocab, "Word pool size");
  make->add_option("--max-triples", syn.config.max_triples, "Triples per sentence, at most")
      ->check(CLI::PositiveNumber);
  make->add_option("--overlap-mix", syn.mix, "Comma-separated patterns: normal,seo,epo,soo");
  make->add_option("--multi-token-rate", syn.config.multi_token_rate, "Probability of a multi-word entity")
      ->check(CLI::Range(0.0, 1.0));
  make->add_option("--seed", syn.config.seed, "Random seed");
  make->add_option("--out-data", syn.out_data, "Output JSONL path")->required();
  make->add_option("--out-relmap", syn.out_relmap, "Output relation TSV path")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--data", tr.data, "Training JSONL")->required();
  train_cmd->add_option("--relmap", tr.relmap, "Relation TSV (label<TAB>word)")->required();
  train_cmd->add_option("--config", tr.config, "JSON config with model/train sections");
  train_cmd->add_option("--out-checkpoint", tr.out_checkpoint, "Checkpoint path")->required();
  train_cmd->add_option("--dev", tr.dev, "Dev JSONL for periodic F1");
  train_cmd->add_option("--log", tr.log, "Per-epoch JSONL log");
  train_cmd->add_option("--seed", tr.seed, "Override the training seed");
  train_cmd->add_option("--epochs", tr.epochs, "Override the epoch count");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Extract triples with a trained checkpoint");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint path")->required();
  predict_cmd->add_option("--data", pr.data, "Input JSONL")->required();
  predict_cmd->add_option("--out", pr.out, "Output JSONL")->required();
  predict_cmd->add_option("--threshold", pr.threshold, "Cell threshold")->check(CLI::Range(0.0, 1.0));

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold");
  eval_cmd->add_option("--pred", ev.pred, "Predictions JSONL from predict")->required();
  eval_cmd->add_option("--gold", ev.gold, "Gold JSONL")->required();
  eval_cmd->add_option("--relmap", ev.relmap, "Relation TSV")->required();
  eval_cmd->add_option("--mode", ev.mode, "anchor, span or auto")
      ->check(CLI::IsMember({"anchor", "span", "auto"}));
  eval_cmd->add_option("--json", ev.json_out, "Also write the report as JSON");

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand("inspect-map", "Export the predicted interaction map of one sentence");
  inspect_cmd->add_option("--checkpoint", in.checkpoint, "Checkpoint path")->required();
  inspect_cmd->add_option("--sentence", in.sentence, "Whitespace-tokenized sentence")->required();
  auto* csv = inspect_cmd->add_option("--out-csv", in.out_csv, "Probability matrix as CSV");
  auto* pgm = inspect_cmd->add_option("--out-pgm", in.out_pgm, "Probability matrix as a grayscale PGM");
  inspect_cmd->add_option("--threshold", in.threshold, "Cell threshold")->check(CLI::Range(0.0, 1.0));

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Time training epochs or inference");
  bench_cmd->add_option("--checkpoint", be.checkpoint, "Checkpoint path")->required();
  bench_cmd->add_option("--data", be.data, "Input JSONL")->required();
  bench_cmd->add_option("--mode", be.mode, "train_epoch or inference")
      ->required()
      ->check(CLI::IsMember({"train_epoch", "inference"}));
  bench_cmd->add_option("--config", be.config, "JSON config; its train section drives train_epoch");
  bench_cmd->add_option("--repeats", be.repeats, "Runs to take the median over")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
    if (inspect_cmd->parsed() && csv->count() == 0 && pgm->count() == 0)
      throw CLI::RequiredError("inspect-map needs --out-csv or --out-pgm");
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (make->parsed()) return run_make_synthetic(syn);
    if (train_cmd->parsed()) return run_train(tr);
    if (predict_cmd->parsed()) return run_predict(pr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (inspect_cmd->parsed()) return run_inspect(in);
    if (bench_cmd->parsed()) return run_bench(be);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
