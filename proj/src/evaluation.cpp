#include "relmap/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "relmap/bench.hpp"
#include "relmap/decoder.hpp"

namespace relmap {

double PrfCounts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double PrfCounts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double PrfCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

PrfCounts& PrfCounts::operator+=(const PrfCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

PrfCounts count_matches(const TripleSet& predicted, const TripleSet& gold, MatchMode mode) {
  const TripleSet p = mode == MatchMode::anchor ? anchors_of(predicted) : predicted;
  const TripleSet g = mode == MatchMode::anchor ? anchors_of(gold) : gold;
  PrfCounts c;
  for (const auto& t : p) {
    if (g.count(t))
      ++c.tp;
    else
      ++c.fp;
  }
  c.fn = g.size() - c.tp;
  return c;
}

PrfCounts micro_counts(std::span<const TripleSet> predicted, std::span<const TripleSet> gold, MatchMode mode) {
  if (predicted.size() != gold.size())
    throw std::invalid_argument("prediction list has " + std::to_string(predicted.size()) +
                                " sentences but gold has " + std::to_string(gold.size()));
  PrfCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += count_matches(predicted[i], gold[i], mode);
  return total;
}

Prf micro_prf(std::span<const TripleSet> predicted, std::span<const TripleSet> gold, MatchMode mode) {
  const auto c = micro_counts(predicted, gold, mode);
  return {c.precision(), c.recall(), c.f1()};
}

std::optional<double> GroupScore::f1() const {
  if (counts.tp + counts.fp + counts.fn == 0) return std::nullopt;
  return counts.f1();
}

BreakdownReport breakdown(std::span<const TripleSet> predicted, std::span<const TripleSet> gold,
                          std::span<const AnnotatedSentence> sentences, MatchMode mode) {
  if (predicted.size() != gold.size() || gold.size() != sentences.size())
    throw std::invalid_argument("breakdown needs aligned prediction, gold and sentence lists");
  BreakdownReport r;
  r.overall.name = "Overall";
  for (auto p : {OverlapPattern::normal, OverlapPattern::seo, OverlapPattern::epo, OverlapPattern::soo})
    r.patterns.push_back({std::string(to_string(p)), 0, {}});
  for (auto b : {CountBucket::one, CountBucket::two, CountBucket::three, CountBucket::four, CountBucket::five_plus})
    r.buckets.push_back({std::string(to_string(b)), 0, {}});
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto c = count_matches(predicted[i], gold[i], mode);
    auto add = [&](GroupScore& g) {
      ++g.sentences;
      g.counts += c;
    };
    add(r.overall);
    add(r.patterns[static_cast<std::size_t>(classify_overlap(sentences[i]))]);
    add(r.buckets[static_cast<std::size_t>(bucket_by_count(sentences[i]))]);
  }
  return r;
}

namespace {

std::string format_f1(const GroupScore& g) {
  const auto f = g.f1();
  if (!f) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *f);
  return buf;
}

nlohmann::json group_json(const GroupScore& g) {
  const auto f = g.f1();
  return {{"name", g.name},
          {"sentences", g.sentences},
          {"tp", g.counts.tp},
          {"fp", g.counts.fp},
          {"fn", g.counts.fn},
          {"precision", g.counts.precision()},
          {"recall", g.counts.recall()},
          {"f1", f ? nlohmann::json(*f) : nlohmann::json(nullptr)}};
}

void render_row(std::ostringstream& out, const std::vector<GroupScore>& groups) {
  out << "  ";
  for (const auto& g : groups) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", g.name.c_str());
    out << buf;
  }
  out << "\n  ";
  for (const auto& g : groups) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", format_f1(g).c_str());
    out << buf;
  }
  out << "\n  ";
  for (const auto& g : groups) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", ("(" + std::to_string(g.sentences) + ")").c_str());
    out << buf;
  }
  out << "\n";
}

}  // namespace

std::string BreakdownReport::render_text() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "precision %.4f  recall %.4f  f1 %.4f  (tp %zu fp %zu fn %zu, %zu sentences)\n",
                overall.counts.precision(), overall.counts.recall(), overall.counts.f1(), overall.counts.tp,
                overall.counts.fp, overall.counts.fn, overall.sentences);
  out << buf;
  out << "F1 by overlap pattern:\n";
  render_row(out, patterns);
  out << "F1 by triple count:\n";
  render_row(out, buckets);
  return out.str();
}

nlohmann::json BreakdownReport::to_json() const {
  nlohmann::json j;
  j["overall"] = group_json(overall);
  j["patterns"] = nlohmann::json::array();
  for (const auto& g : patterns) j["patterns"].push_back(group_json(g));
  j["buckets"] = nlohmann::json::array();
  for (const auto& g : buckets) j["buckets"].push_back(group_json(g));
  return j;
}

// ---------------------------------------------------------------------------
// Timing

std::string_view to_string(BenchMode mode) { return mode == BenchMode::train_epoch ? "train_epoch" : "inference"; }

BenchMode parse_bench_mode(std::string_view name) {
  if (name == "train_epoch" || name == "train") return BenchMode::train_epoch;
  if (name == "inference") return BenchMode::inference;
  throw std::invalid_argument("unknown bench mode: " + std::string(name));
}

std::string BenchResult::unit() const { return mode == BenchMode::train_epoch ? "s/epoch" : "ms/sample"; }

std::string BenchResult::line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %10.4f %s  (median of %zu runs, %zu samples)",
                std::string(to_string(mode)).c_str(), median, unit().c_str(), runs.size(), samples);
  return buf;
}

nlohmann::json BenchResult::to_json() const {
  return {{"mode", std::string(to_string(mode))}, {"samples", samples}, {"runs", runs},
          {"median", median},                     {"unit", unit()}};
}

template <typename Real>
BenchResult bench(const Model<Real>& model, std::span<const TrainingExample> data, BenchMode mode,
                  const TrainConfig& config, std::size_t repeats) {
  if (data.empty()) throw std::invalid_argument("bench needs a nonempty dataset");
  if (repeats < 1) throw std::invalid_argument("bench needs at least one run");
  BenchResult r;
  r.mode = mode;
  r.samples = data.size();
  for (std::size_t k = 0; k < repeats; ++k) {
    if (mode == BenchMode::train_epoch) {
      auto copy = model.clone();
      Trainer<Real> trainer(copy, config);
      const auto start = std::chrono::steady_clock::now();
      trainer.run_epoch(data, 1);
      r.runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    } else {
      const auto start = std::chrono::steady_clock::now();
      for (const auto& ex : data) predict(model, ex.input, config.threshold);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      r.runs.push_back(ms / static_cast<double>(data.size()));
    }
  }
  auto sorted = r.runs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return r;
}

template BenchResult bench(const Model<float>&, std::span<const TrainingExample>, BenchMode, const TrainConfig&,
                           std::size_t);
template BenchResult bench(const Model<double>&, std::span<const TrainingExample>, BenchMode,
                           const TrainConfig&, std::size_t);

}  // namespace relmap
