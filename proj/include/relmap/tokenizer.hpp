#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relmap/dataset.hpp"

namespace relmap {

// Whitespace tokenization, case preserved.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr std::size_t pad_id = 0;
  static constexpr std::size_t unk_id = 1;
  static constexpr std::string_view pad_token = "[PAD]";
  static constexpr std::string_view unk_token = "[UNK]";

  Vocab();
  // tokens[0] and tokens[1] must be the PAD and UNK markers.
  explicit Vocab(std::vector<std::string> tokens);

  // Keeps corpus tokens seen at least min_freq times, plus every relation
  // word regardless of frequency. Ids after the specials: relation words in
  // schema order, then corpus tokens by descending frequency, ties broken
  // lexicographically.
  static Vocab build(std::span<const AnnotatedSentence> corpus, const RelationSchema& schema,
                     std::size_t min_freq);

  // One token per line; the line number is the id.
  static Vocab load(const std::string& path);
  static Vocab parse(std::istream& in, const std::string& source = "<stream>");
  void save(const std::string& path) const;
  void write(std::ostream& out) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  // UNK id for tokens outside the vocabulary.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Sentence ids followed by the M relation-word ids; no separators.
struct EncodedInput {
  std::vector<std::size_t> ids;
  std::size_t sentence_length = 0;
  std::size_t relation_count = 0;

  std::size_t relation_offset() const { return sentence_length; }
  std::size_t length() const { return ids.size(); }
};

// Throws DataError when a relation word is missing from the vocabulary.
EncodedInput encode_concat(std::span<const std::string> tokens, const RelationSchema& schema,
                           const Vocab& vocab);

}  // namespace relmap
