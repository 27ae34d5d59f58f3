#pragma once

#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "relmap/dataset.hpp"
#include "relmap/tokenizer.hpp"

namespace relmap {

// Readable gtest output for triples and spans.
inline void PrintTo(const EntitySpan& s, std::ostream* os) { *os << "[" << s.head << "," << s.tail << "]"; }
inline void PrintTo(const Triple& t, std::ostream* os) {
  *os << "(";
  PrintTo(t.subject, os);
  *os << " r" << t.relation << " ";
  PrintTo(t.object, os);
  *os << ")";
}

}  // namespace relmap

namespace relmap::testing {

inline RelationSchema holmes_schema() {
  return RelationSchema(std::vector<Relation>{{"lives_in", "lives"}, {"contains", "contains"}, {"is_capital_of", "capital"}});
}

// Holmes lives in London UK, with its two SEO and two EPO triples.
inline AnnotatedSentence holmes_sentence() {
  AnnotatedSentence s;
  s.text = "Holmes lives in London UK";
  s.tokens = tokenize(s.text);
  const EntitySpan holmes{0, 0}, london{3, 3}, uk{4, 4};
  s.triples = {{holmes, 0, london}, {holmes, 0, uk}, {uk, 1, london}, {london, 2, uk}};
  return s;
}

inline RelationSchema yunnan_schema() {
  return RelationSchema(
      {{"country", "country"}, {"administrative_divisions", "divisions"}, {"contains", "contains"}});
}

// A sentence carrying the six triples of the Yunnan case study.
inline AnnotatedSentence yunnan_sentence() {
  AnnotatedSentence s;
  s.text = "Flights from Chiang Mai in Thailand reach Jinghong in Yunnan , China";
  s.tokens = tokenize(s.text);
  const EntitySpan chiang_mai{2, 3}, thailand{5, 5}, jinghong{7, 7}, yunnan{9, 9}, china{11, 11};
  s.triples = {{yunnan, 0, china},         {china, 1, yunnan},  {thailand, 2, chiang_mai},
               {yunnan, 2, jinghong},      {china, 2, jinghong}, {china, 2, yunnan}};
  return s;
}

// Independent cell-by-cell evaluation of the interaction indicators.
inline CellMatrix oracle_gold_map(const AnnotatedSentence& s, std::size_t m, SpanMode mode) {
  const std::size_t n = s.tokens.size();
  auto subject_anchor = [&](const Triple& t) {
    return mode == SpanMode::multi_token_tail ? t.subject.tail : t.subject.head;
  };
  auto object_anchor = [&](const Triple& t) {
    return mode == SpanMode::multi_token_tail || mode == SpanMode::multi_token_cross ? t.object.tail
                                                                                       : t.object.head;
  };
  CellMatrix out(n + m);
  for (std::size_t i = 0; i < n + m; ++i) {
    for (std::size_t j = 0; j < n + m; ++j) {
      bool fire = false;
      for (const auto& t : s.triples) {
        const auto a = subject_anchor(t), b = object_anchor(t);
        if (i < n && j < n) fire |= (i == a && j == b) || (i == b && j == a);
        if (i < n && j >= n) fire |= i == a && j - n == t.relation;
        if (i >= n && j < n) fire |= i - n == t.relation && j == b;
      }
      if (fire) out.set(i, j);
    }
  }
  return out;
}

// Random sentence over placeholder tokens with non-overlapping entity spans.
inline AnnotatedSentence random_sentence(std::mt19937_64& rng, std::size_t max_n, std::size_t m,
                                         std::size_t max_triples, std::size_t max_span = 1) {
  AnnotatedSentence s;
  const std::size_t n = 2 + rng() % (max_n - 1);
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back("w" + std::to_string(i));
  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < n;) {
    const std::size_t len = 1 + rng() % max_span;
    if (i + len <= n && rng() % 2) {
      spans.push_back({i, i + len - 1});
      i += len;
    } else {
      ++i;
    }
  }
  if (spans.empty()) spans.push_back({0, 0});
  const std::size_t count = 1 + rng() % max_triples;
  std::set<Triple> seen;
  for (std::size_t k = 0; k < count; ++k) {
    Triple t{spans[rng() % spans.size()], rng() % m, spans[rng() % spans.size()]};
    if (seen.insert(t).second) s.triples.push_back(t);
  }
  for (const auto& tok : s.tokens) s.text += (s.text.empty() ? "" : " ") + tok;
  return s;
}

inline CellMatrix random_cells(std::mt19937_64& rng, std::size_t size, double density) {
  std::bernoulli_distribution coin(density);
  CellMatrix c(size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j)
      if (coin(rng)) c.set(i, j);
  return c;
}

}  // namespace relmap::testing
