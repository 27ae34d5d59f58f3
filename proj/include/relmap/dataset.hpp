#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace relmap {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inclusive token range [head, tail].
struct EntitySpan {
  std::size_t head = 0;
  std::size_t tail = 0;

  auto operator<=>(const EntitySpan&) const = default;
};

struct Triple {
  EntitySpan subject;
  std::size_t relation = 0;
  EntitySpan object;

  auto operator<=>(const Triple&) const = default;
};

using TripleSet = std::set<Triple>;

struct Relation {
  std::string label;
  std::string word;
};

// Ordered relation labels with their verbalizer words. Relation ids are
// positions in this list.
class RelationSchema {
 public:
  RelationSchema() = default;
  // Throws DataError when empty or when labels or words repeat.
  explicit RelationSchema(std::vector<Relation> relations);

  // label<TAB>word per line; blank lines and lines starting with '#' skipped.
  static RelationSchema parse_tsv(std::istream& in, const std::string& source = "<stream>");
  static RelationSchema load_tsv(const std::string& path);
  void write_tsv(std::ostream& out) const;

  std::size_t size() const { return relations_.size(); }
  const Relation& operator[](std::size_t id) const { return relations_.at(id); }
  const std::vector<Relation>& relations() const { return relations_; }
  std::optional<std::size_t> find(std::string_view label) const;

 private:
  std::vector<Relation> relations_;
};

// Verbal word of each relation in schema order.
std::vector<std::string> verbalize(const RelationSchema& schema);

struct AnnotatedSentence {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<Triple> triples;
};

// Square boolean matrix over the concatenated sequence: indices [0, N) are
// sentence tokens and [N, N+M) are relation positions.
class CellMatrix {
 public:
  CellMatrix() = default;
  explicit CellMatrix(std::size_t size) : size_(size), cells_(size * size, 0) {}
  // Throws std::invalid_argument when rows are not all of length rows.size().
  static CellMatrix from_rows(const std::vector<std::vector<bool>>& rows);

  std::size_t size() const { return size_; }
  bool operator()(std::size_t row, std::size_t col) const { return cells_[row * size_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool value = true) {
    cells_[row * size_ + col] = value ? 1 : 0;
  }
  std::size_t count() const;

  bool operator==(const CellMatrix&) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> cells_;
};

// How entities are anchored in a map. single_token uses span heads; the three
// multi_token modes are the head, tail and subject-head/object-tail maps of the
// multi-token extension.
enum class SpanMode { single_token, multi_token_head, multi_token_tail, multi_token_cross };

std::string_view to_string(SpanMode mode);

CellMatrix build_gold_map(const AnnotatedSentence& sentence, std::size_t relation_count,
                          SpanMode mode);

enum class OverlapPattern { normal, seo, epo, soo };

std::string_view to_string(OverlapPattern pattern);
OverlapPattern parse_overlap_pattern(std::string_view name);

// Precedence EPO > SOO > SEO > Normal. Entities are compared by full span.
OverlapPattern classify_overlap(const AnnotatedSentence& sentence);

enum class CountBucket { one, two, three, four, five_plus };

std::string_view to_string(CountBucket bucket);
CountBucket bucket_by_count(const AnnotatedSentence& sentence);
CountBucket bucket_for(std::size_t triple_count);

// True when decoding the gold map can license a triple that is not gold: some
// relation r has a subject candidate a and object candidate b, the pair
// (a, b) is linked by an entity-entity edge, yet (a, r, b) is not gold.
// Multi-token modes evaluate the three-map candidate rule over full spans.
bool has_cross_relation_collision(const AnnotatedSentence& sentence, bool multi_token);

struct IngestionReport {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::map<std::string, std::size_t> reasons;
  // Entity strings that occur more than once in their sentence; resolved to
  // the first occurrence.
  std::size_t ambiguous_mentions = 0;
  std::size_t duplicate_triples = 0;

  nlohmann::json to_json() const;
};

struct LoadOptions {
  std::size_t max_sentence_tokens = 100;
  // Bound on N + M; 0 disables the check.
  std::size_t max_sequence_length = 0;
};

struct LoadedDataset {
  std::vector<AnnotatedSentence> sentences;
  IngestionReport report;
};

// One JSON object per line with "text" and "triple_list" ([subject, relation,
// object] strings). Unknown relation labels throw DataError naming the label;
// unresolvable entities and over-long sentences are rejected and counted.
LoadedDataset parse_dataset(std::istream& in, const RelationSchema& schema,
                            const LoadOptions& options = {}, const std::string& source = "<stream>");
LoadedDataset load_dataset(const std::string& path, const RelationSchema& schema,
                           const LoadOptions& options = {});

// Outcome of resolving one sentence; reason is empty on success.
struct Resolution {
  std::optional<AnnotatedSentence> sentence;
  std::string reason;
  std::size_t ambiguous_mentions = 0;
  std::size_t duplicate_triples = 0;
};

struct StringTriple {
  std::string subject;
  std::string relation;
  std::string object;
};

Resolution resolve_sentence(const std::string& text, const std::vector<StringTriple>& triples,
                            const RelationSchema& schema, const LoadOptions& options = {});

// First occurrence of needle as a contiguous token subsequence.
std::optional<EntitySpan> find_span(const std::vector<std::string>& tokens,
                                    const std::vector<std::string>& needle);

std::string span_text(const std::vector<std::string>& tokens, const EntitySpan& span);

nlohmann::json sentence_to_json(const AnnotatedSentence& sentence, const RelationSchema& schema);

}  // namespace relmap
