#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relmap/dataset.hpp"

namespace relmap {

// anchor compares relation and span heads; span compares full spans.
enum class MatchMode { anchor, span };

struct PrfCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  // Zero when there are no predictions (resp. no gold triples).
  double precision() const;
  double recall() const;
  double f1() const;

  PrfCounts& operator+=(const PrfCounts& other);
  bool operator==(const PrfCounts&) const = default;
};

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

PrfCounts count_matches(const TripleSet& predicted, const TripleSet& gold, MatchMode mode);

// Exact-match micro scores aggregated over sentences. Throws
// std::invalid_argument when the lists are not aligned.
PrfCounts micro_counts(std::span<const TripleSet> predicted, std::span<const TripleSet> gold,
                       MatchMode mode = MatchMode::span);
Prf micro_prf(std::span<const TripleSet> predicted, std::span<const TripleSet> gold,
              MatchMode mode = MatchMode::span);

struct GroupScore {
  std::string name;
  std::size_t sentences = 0;
  PrfCounts counts;

  // Empty when the group has neither gold nor predicted triples.
  std::optional<double> f1() const;
};

struct BreakdownReport {
  GroupScore overall;
  std::vector<GroupScore> patterns;  // Normal, SEO, EPO, SOO
  std::vector<GroupScore> buckets;   // L=1 .. L>=5

  std::string render_text() const;
  nlohmann::json to_json() const;
};

BreakdownReport breakdown(std::span<const TripleSet> predicted, std::span<const TripleSet> gold,
                          std::span<const AnnotatedSentence> sentences, MatchMode mode = MatchMode::span);

}  // namespace relmap
