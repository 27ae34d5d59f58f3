#pragma once

// Synthetic corpora in the ingestion JSONL format. Each triple is rendered as
// a "subject connective object" clause, where the connective is the verbal
// word of the relation; clauses are joined by filler words. Entity words are
// distinct within a sentence, so first-occurrence span resolution recovers
// the planted spans.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "relmap/dataset.hpp"

namespace relmap {

struct SyntheticConfig {
  std::size_t relations = 5;
  std::size_t sentences = 200;
  // Size of the word pool (fillers + relation words + entity words).
  std::size_t vocab = 120;
  std::size_t max_triples = 3;
  std::vector<OverlapPattern> mix{OverlapPattern::normal, OverlapPattern::seo,
                                  OverlapPattern::epo, OverlapPattern::soo};
  std::uint64_t seed = 7;
  // Probability that an entity is rendered as 2-3 words.
  double multi_token_rate = 0.0;
};

struct SyntheticSentence {
  AnnotatedSentence sentence;
  OverlapPattern pattern = OverlapPattern::normal;
  bool collision_single = false;
  bool collision_multi = false;
};

class SyntheticGenerator {
 public:
  // Throws std::invalid_argument when the word pool cannot hold the
  // requested relations and entities.
  explicit SyntheticGenerator(SyntheticConfig config);

  const SyntheticConfig& config() const { return config_; }
  const RelationSchema& schema() const { return schema_; }

  // One sentence of the requested pattern whose relations are drawn from
  // `relations` (all relations when empty).
  SyntheticSentence sentence(OverlapPattern pattern, std::span<const std::size_t> relations,
                             std::mt19937_64& rng) const;

  // config().sentences sentences; sentence i uses mix[i % mix.size()], so
  // every requested pattern appears when sentences >= mix.size().
  std::vector<SyntheticSentence> corpus() const;

 private:
  SyntheticConfig config_;
  RelationSchema schema_;
  std::vector<std::string> fillers_;
  std::vector<std::string> entities_;
};

void write_jsonl(std::span<const SyntheticSentence> sentences, const RelationSchema& schema,
                 std::ostream& out);

}  // namespace relmap
