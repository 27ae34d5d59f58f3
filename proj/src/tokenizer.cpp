#include "relmap/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace relmap {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{std::string(pad_token), std::string(unk_token)}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[pad_id] != pad_token || tokens_[unk_id] != unk_token)
    throw DataError("vocabulary must start with " + std::string(pad_token) + " and " +
                    std::string(unk_token));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("empty vocabulary entry at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], i).second)
      throw DataError("duplicate vocabulary entry: " + tokens_[i]);
  }
}

Vocab Vocab::build(std::span<const AnnotatedSentence> corpus, const RelationSchema& schema,
                   std::size_t min_freq) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::string> tokens{std::string(pad_token), std::string(unk_token)};
  for (const auto& word : verbalize(schema)) {
    if (word == pad_token || word == unk_token)
      throw DataError("relation word collides with special token: " + word);
    tokens.push_back(word);
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : freq) {
    if (count < min_freq || token == pad_token || token == unk_token) continue;
    if (std::find(tokens.begin(), tokens.end(), token) != tokens.end()) continue;
    kept.emplace_back(token, count);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [token, count] : kept) tokens.push_back(std::move(token));
  return Vocab(std::move(tokens));
}

Vocab Vocab::parse(std::istream& in, const std::string& source) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return Vocab(std::move(tokens));
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary: " + path);
  return parse(in, path);
}

void Vocab::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary: " + path);
  write(out);
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id : it->second;
}

EncodedInput encode_concat(std::span<const std::string> tokens, const RelationSchema& schema,
                           const Vocab& vocab) {
  EncodedInput out;
  out.sentence_length = tokens.size();
  out.relation_count = schema.size();
  out.ids.reserve(tokens.size() + schema.size());
  for (const auto& t : tokens) out.ids.push_back(vocab.id(t));
  for (const auto& r : schema.relations()) {
    if (!vocab.contains(r.word))
      throw DataError("relation word '" + r.word + "' for " + r.label + " missing from vocabulary");
    out.ids.push_back(vocab.id(r.word));
  }
  return out;
}

}  // namespace relmap
