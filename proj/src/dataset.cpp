#include "relmap/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "relmap/tokenizer.hpp"

namespace relmap {

// ---------------------------------------------------------------------------
// Relation schema

RelationSchema::RelationSchema(std::vector<Relation> relations) : relations_(std::move(relations)) {
  if (relations_.empty()) throw DataError("relation schema must contain at least one relation");
  std::unordered_set<std::string> labels, words;
  for (const auto& r : relations_) {
    if (r.label.empty() || r.word.empty()) throw DataError("relation with empty label or word");
    if (!labels.insert(r.label).second) throw DataError("duplicate relation label: " + r.label);
    if (!words.insert(r.word).second)
      throw DataError("duplicate relation word '" + r.word + "' (for " + r.label + ")");
    if (tokenize(r.word).size() != 1)
      throw DataError("relation word for " + r.label + " must be a single token: '" + r.word + "'");
  }
}

RelationSchema RelationSchema::parse_tsv(std::istream& in, const std::string& source) {
  std::vector<Relation> relations;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw DataError(source + ":" + std::to_string(line_no) + ": expected label<TAB>word");
    relations.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  if (relations.empty()) throw DataError(source + ": no relations found");
  return RelationSchema(std::move(relations));
}

RelationSchema RelationSchema::load_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open relation map: " + path);
  return parse_tsv(in, path);
}

void RelationSchema::write_tsv(std::ostream& out) const {
  for (const auto& r : relations_) out << r.label << '\t' << r.word << '\n';
}

std::optional<std::size_t> RelationSchema::find(std::string_view label) const {
  for (std::size_t i = 0; i < relations_.size(); ++i)
    if (relations_[i].label == label) return i;
  return std::nullopt;
}

std::vector<std::string> verbalize(const RelationSchema& schema) {
  std::vector<std::string> words;
  words.reserve(schema.size());
  for (const auto& r : schema.relations()) words.push_back(r.word);
  return words;
}

// ---------------------------------------------------------------------------
// Maps

CellMatrix CellMatrix::from_rows(const std::vector<std::vector<bool>>& rows) {
  CellMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size())
      throw std::invalid_argument("cell matrix must be square: row " + std::to_string(i) + " has " +
                                  std::to_string(rows[i].size()) + " cells, expected " +
                                  std::to_string(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) m.set(i, j, rows[i][j]);
  }
  return m;
}

std::size_t CellMatrix::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::string_view to_string(SpanMode mode) {
  switch (mode) {
    case SpanMode::single_token: return "single_token";
    case SpanMode::multi_token_head: return "multi_token_head";
    case SpanMode::multi_token_tail: return "multi_token_tail";
    case SpanMode::multi_token_cross: return "multi_token_cross";
  }
  return "?";
}

CellMatrix build_gold_map(const AnnotatedSentence& sentence, std::size_t relation_count,
                          SpanMode mode) {
  const std::size_t n = sentence.tokens.size();
  CellMatrix map(n + relation_count);
  for (const auto& t : sentence.triples) {
    if (t.relation >= relation_count)
      throw DataError("triple relation id " + std::to_string(t.relation) + " outside schema of " +
                      std::to_string(relation_count));
    std::size_t s = t.subject.head, o = t.object.head;
    if (mode == SpanMode::multi_token_tail) {
      s = t.subject.tail;
      o = t.object.tail;
    } else if (mode == SpanMode::multi_token_cross) {
      o = t.object.tail;
    }
    if (s >= n || o >= n) throw DataError("triple span outside sentence of " + std::to_string(n) + " tokens");
    map.set(s, o);
    map.set(o, s);
    map.set(s, n + t.relation);
    map.set(n + t.relation, o);
  }
  return map;
}

// ---------------------------------------------------------------------------
// Overlap patterns

std::string_view to_string(OverlapPattern pattern) {
  switch (pattern) {
    case OverlapPattern::normal: return "Normal";
    case OverlapPattern::seo: return "SEO";
    case OverlapPattern::epo: return "EPO";
    case OverlapPattern::soo: return "SOO";
  }
  return "?";
}

OverlapPattern parse_overlap_pattern(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "normal") return OverlapPattern::normal;
  if (lower == "seo") return OverlapPattern::seo;
  if (lower == "epo") return OverlapPattern::epo;
  if (lower == "soo") return OverlapPattern::soo;
  throw std::invalid_argument("unknown overlap pattern: " + std::string(name));
}

OverlapPattern classify_overlap(const AnnotatedSentence& sentence) {
  const auto& ts = sentence.triples;
  auto unordered = [](const Triple& t) { return std::minmax(t.subject, t.object); };
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i + 1; j < ts.size(); ++j)
      if (unordered(ts[i]) == unordered(ts[j])) return OverlapPattern::epo;
  for (const auto& t : ts)
    if (t.subject == t.object) return OverlapPattern::soo;
  std::map<EntitySpan, std::size_t> uses;
  for (const auto& t : ts) {
    ++uses[t.subject];
    if (t.object != t.subject) ++uses[t.object];
  }
  for (const auto& [span, count] : uses)
    if (count >= 2) return OverlapPattern::seo;
  return OverlapPattern::normal;
}

std::string_view to_string(CountBucket bucket) {
  switch (bucket) {
    case CountBucket::one: return "L=1";
    case CountBucket::two: return "L=2";
    case CountBucket::three: return "L=3";
    case CountBucket::four: return "L=4";
    case CountBucket::five_plus: return "L>=5";
  }
  return "?";
}

CountBucket bucket_for(std::size_t triple_count) {
  switch (triple_count) {
    case 0:
    case 1: return CountBucket::one;
    case 2: return CountBucket::two;
    case 3: return CountBucket::three;
    case 4: return CountBucket::four;
    default: return CountBucket::five_plus;
  }
}

CountBucket bucket_by_count(const AnnotatedSentence& sentence) {
  return bucket_for(sentence.triples.size());
}

namespace {

using Pair = std::pair<std::size_t, std::size_t>;

Pair unordered_pair(std::size_t a, std::size_t b) { return std::minmax(a, b); }

}  // namespace

bool has_cross_relation_collision(const AnnotatedSentence& sentence, bool multi_token) {
  std::map<std::size_t, std::set<std::size_t>> sh, st, oh, ot;
  std::set<Pair> ee_head, ee_tail, ee_cross;
  std::set<Triple> gold;
  for (const auto& t : sentence.triples) {
    sh[t.relation].insert(t.subject.head);
    st[t.relation].insert(t.subject.tail);
    oh[t.relation].insert(t.object.head);
    ot[t.relation].insert(t.object.tail);
    ee_head.insert(unordered_pair(t.subject.head, t.object.head));
    ee_tail.insert(unordered_pair(t.subject.tail, t.object.tail));
    ee_cross.insert(unordered_pair(t.subject.head, t.object.tail));
    if (multi_token)
      gold.insert(t);
    else
      gold.insert({{t.subject.head, t.subject.head}, t.relation, {t.object.head, t.object.head}});
  }
  for (const auto& [r, subjects] : sh) {
    for (std::size_t a : subjects) {
      for (std::size_t b : oh[r]) {
        if (!ee_head.contains(unordered_pair(a, b))) continue;
        if (!multi_token) {
          if (!gold.contains({{a, a}, r, {b, b}})) return true;
          continue;
        }
        for (std::size_t s_tail : st[r]) {
          if (s_tail < a) continue;
          for (std::size_t o_tail : ot[r]) {
            if (o_tail < b) continue;
            if (!ee_tail.contains(unordered_pair(s_tail, o_tail))) continue;
            if (!ee_cross.contains(unordered_pair(a, o_tail))) continue;
            if (!gold.contains({{a, s_tail}, r, {b, o_tail}})) return true;
          }
        }
      }
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Ingestion

nlohmann::json IngestionReport::to_json() const {
  nlohmann::json j;
  j["lines"] = lines;
  j["accepted"] = accepted;
  j["rejected"] = rejected;
  j["reasons"] = nlohmann::json::object();
  for (const auto& [reason, count] : reasons) j["reasons"][reason] = count;
  j["ambiguous_mentions"] = ambiguous_mentions;
  j["duplicate_triples"] = duplicate_triples;
  return j;
}

std::optional<EntitySpan> find_span(const std::vector<std::string>& tokens,
                                    const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > tokens.size()) return std::nullopt;
  auto it = std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end());
  if (it == tokens.end()) return std::nullopt;
  const auto head = static_cast<std::size_t>(it - tokens.begin());
  return EntitySpan{head, head + needle.size() - 1};
}

std::string span_text(const std::vector<std::string>& tokens, const EntitySpan& span) {
  std::string out;
  for (std::size_t i = span.head; i <= span.tail && i < tokens.size(); ++i) {
    if (i != span.head) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

bool occurs_twice(const std::vector<std::string>& tokens, const std::vector<std::string>& needle,
                  const EntitySpan& first) {
  auto start = tokens.begin() + static_cast<std::ptrdiff_t>(first.head + 1);
  return std::search(start, tokens.end(), needle.begin(), needle.end()) != tokens.end();
}

}  // namespace

Resolution resolve_sentence(const std::string& text, const std::vector<StringTriple>& triples,
                            const RelationSchema& schema, const LoadOptions& options) {
  Resolution result;
  AnnotatedSentence sentence;
  sentence.text = text;
  sentence.tokens = tokenize(text);
  std::set<Triple> seen;
  std::set<std::string> ambiguous;
  for (const auto& st : triples)
    if (!schema.find(st.relation)) throw DataError("unknown relation label: " + st.relation);
  for (const auto& st : triples) {
    const auto relation = schema.find(st.relation);
    const auto subject_tokens = tokenize(st.subject);
    const auto object_tokens = tokenize(st.object);
    const auto subject = find_span(sentence.tokens, subject_tokens);
    const auto object = find_span(sentence.tokens, object_tokens);
    if (!subject || !object) {
      result.reason = "entity_not_found";
      return result;
    }
    if (occurs_twice(sentence.tokens, subject_tokens, *subject)) ambiguous.insert(st.subject);
    if (occurs_twice(sentence.tokens, object_tokens, *object)) ambiguous.insert(st.object);
    Triple t{*subject, *relation, *object};
    if (!seen.insert(t).second) {
      ++result.duplicate_triples;
      continue;
    }
    sentence.triples.push_back(t);
  }
  result.ambiguous_mentions = ambiguous.size();
  if (sentence.tokens.empty()) {
    result.reason = "empty_text";
    return result;
  }
  if (sentence.tokens.size() > options.max_sentence_tokens) {
    result.reason = "too_long";
    return result;
  }
  if (options.max_sequence_length != 0 &&
      sentence.tokens.size() + schema.size() > options.max_sequence_length) {
    result.reason = "too_long";
    return result;
  }
  result.sentence = std::move(sentence);
  return result;
}

LoadedDataset parse_dataset(std::istream& in, const RelationSchema& schema,
                            const LoadOptions& options, const std::string& source) {
  LoadedDataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++out.report.lines;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      throw DataError(source + ":" + std::to_string(line_no) + ": missing \"text\" field");
    std::vector<StringTriple> triples;
    if (j.contains("triple_list")) {
      for (const auto& t : j["triple_list"]) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() || !t[2].is_string())
          throw DataError(source + ":" + std::to_string(line_no) +
                          ": triple must be [subject, relation, object] strings");
        triples.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
      }
    }
    Resolution r;
    try {
      r = resolve_sentence(j["text"].get<std::string>(), triples, schema, options);
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.report.ambiguous_mentions += r.ambiguous_mentions;
    out.report.duplicate_triples += r.duplicate_triples;
    if (r.sentence) {
      ++out.report.accepted;
      out.sentences.push_back(std::move(*r.sentence));
    } else {
      ++out.report.rejected;
      ++out.report.reasons[r.reason];
    }
  }
  return out;
}

LoadedDataset load_dataset(const std::string& path, const RelationSchema& schema,
                           const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);
  return parse_dataset(in, schema, options, path);
}

nlohmann::json sentence_to_json(const AnnotatedSentence& sentence, const RelationSchema& schema) {
  nlohmann::json j;
  j["text"] = sentence.text;
  j["triple_list"] = nlohmann::json::array();
  for (const auto& t : sentence.triples)
    j["triple_list"].push_back({span_text(sentence.tokens, t.subject), schema[t.relation].label,
                                span_text(sentence.tokens, t.object)});
  return j;
}

}  // namespace relmap
