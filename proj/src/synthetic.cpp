#include "relmap/synthetic.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <stdexcept>
#include <string_view>

namespace relmap {

namespace {

constexpr std::array<std::string_view, 20> kRelationWords = {
    "contains", "capital", "founders", "country", "lives",  "place",  "member",
    "author",   "born",    "located",  "leader",  "spouse", "child",  "owner",
    "genre",    "language", "team",    "award",   "part",   "section"};

constexpr std::array<std::string_view, 14> kFillers = {
    "the", "and", "while", "also", "then", "of", "with", "near", "since", "where", "which", "as", "so", "yet"};

constexpr std::array<std::string_view, 16> kOnsets = {"Ka", "Lo", "Mi", "Ra", "Te", "Su", "No", "Vi",
                                                      "Da", "Pe", "Zo", "Ha", "Bi", "Fu", "Ge", "Wu"};
constexpr std::array<std::string_view, 16> kCodas = {"ran", "lis", "mon", "dor", "vek", "tal", "nis", "bur",
                                                     "sem", "gol", "fin", "pax", "rud", "zel", "cor", "mab"};

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

bool chance(std::mt19937_64& rng, double p) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

std::string entity_word(std::size_t i) {
  std::string w(kOnsets[i % kOnsets.size()]);
  w += kCodas[(i / kOnsets.size()) % kCodas.size()];
  if (i >= kOnsets.size() * kCodas.size()) w += std::to_string(i / (kOnsets.size() * kCodas.size()));
  return w;
}

struct PlannedTriple {
  std::size_t subject;
  std::size_t relation;
  std::size_t object;
};

}  // namespace

SyntheticGenerator::SyntheticGenerator(SyntheticConfig config) : config_(std::move(config)) {
  if (config_.relations == 0) throw std::invalid_argument("synthetic corpus needs at least one relation");
  if (config_.max_triples == 0) throw std::invalid_argument("max_triples must be at least 1");
  if (config_.mix.empty()) throw std::invalid_argument("overlap mix must not be empty");
  for (auto p : config_.mix)
    if (p == OverlapPattern::seo || p == OverlapPattern::epo)
      if (config_.max_triples < 2)
        throw std::invalid_argument("SEO/EPO sentences need max_triples >= 2");
  const std::size_t filler_count = std::min<std::size_t>(kFillers.size(), std::max<std::size_t>(4, config_.vocab / 10));
  const std::size_t needed_entities = 2 * std::max<std::size_t>(config_.max_triples, 2) * 3;
  if (config_.vocab < filler_count + config_.relations + needed_entities)
    throw std::invalid_argument("vocab of " + std::to_string(config_.vocab) + " words is too small for " +
                                std::to_string(config_.relations) + " relations and " +
                                std::to_string(config_.max_triples) + " triples per sentence");
  for (std::size_t i = 0; i < filler_count; ++i) fillers_.emplace_back(kFillers[i]);
  std::vector<Relation> relations;
  for (std::size_t k = 0; k < config_.relations; ++k) {
    std::string word = k < kRelationWords.size() ? std::string(kRelationWords[k])
                                                 : "relword" + std::to_string(k);
    relations.push_back({"/synthetic/r" + std::to_string(k) + "/" + word, word});
  }
  schema_ = RelationSchema(std::move(relations));
  const std::size_t entity_count = config_.vocab - filler_count - config_.relations;
  for (std::size_t i = 0; i < entity_count; ++i) entities_.push_back(entity_word(i));
}

SyntheticSentence SyntheticGenerator::sentence(OverlapPattern pattern,
                                               std::span<const std::size_t> relations,
                                               std::mt19937_64& rng) const {
  std::vector<std::size_t> allowed(relations.begin(), relations.end());
  if (allowed.empty())
    for (std::size_t k = 0; k < schema_.size(); ++k) allowed.push_back(k);
  for (auto r : allowed)
    if (r >= schema_.size()) throw std::invalid_argument("relation id outside synthetic schema");
  auto rel = [&] { return allowed[pick(rng, allowed.size())]; };

  LoadOptions unlimited;
  unlimited.max_sentence_tokens = static_cast<std::size_t>(-1);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    // Entity slots are indices into a per-sentence pool of distinct words.
    std::vector<std::size_t> order(entities_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t next_word = 0;
    std::vector<std::vector<std::string>> mentions;
    auto new_entity = [&] {
      std::size_t len = 1;
      if (config_.multi_token_rate > 0 && chance(rng, config_.multi_token_rate)) len = 2 + pick(rng, 2);
      std::vector<std::string> words;
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t j = next_word + pick(rng, order.size() - next_word);
        std::swap(order[next_word], order[j]);
        words.push_back(entities_[order[next_word++]]);
      }
      mentions.push_back(std::move(words));
      return mentions.size() - 1;
    };

    std::vector<PlannedTriple> plan;
    const std::size_t max_l = config_.max_triples;
    std::size_t total = 1 + pick(rng, max_l);
    switch (pattern) {
      case OverlapPattern::normal:
        break;
      case OverlapPattern::seo: {
        total = std::max<std::size_t>(total, 2);
        const auto a = new_entity(), b = new_entity(), c = new_entity();
        switch (pick(rng, 3)) {
          case 0: plan = {{a, rel(), b}, {a, rel(), c}}; break;
          case 1: plan = {{b, rel(), a}, {c, rel(), a}}; break;
          default: plan = {{a, rel(), b}, {c, rel(), a}}; break;
        }
        break;
      }
      case OverlapPattern::epo: {
        total = std::max<std::size_t>(total, 2);
        const auto a = new_entity(), b = new_entity();
        const auto r1 = rel();
        auto r2 = rel();
        if (allowed.size() > 1 && chance(rng, 0.5)) {
          while (r2 == r1) r2 = rel();
          plan = {{a, r1, b}, {a, r2, b}};
        } else {
          plan = {{a, r1, b}, {b, r2, a}};
        }
        break;
      }
      case OverlapPattern::soo: {
        const auto a = new_entity();
        plan = {{a, rel(), a}};
        break;
      }
    }
    while (plan.size() < total) {
      const auto s = new_entity(), o = new_entity();
      plan.push_back({s, rel(), o});
    }
    std::shuffle(plan.begin(), plan.end(), rng);

    std::vector<std::string> tokens;
    auto append = [&](const std::vector<std::string>& words) {
      tokens.insert(tokens.end(), words.begin(), words.end());
    };
    auto filler = [&] { return fillers_[pick(rng, fillers_.size())]; };
    if (chance(rng, 0.5)) tokens.push_back(filler());
    for (std::size_t i = 0; i < plan.size(); ++i) {
      if (i) tokens.push_back(filler());
      append(mentions[plan[i].subject]);
      tokens.push_back(schema_[plan[i].relation].word);
      append(mentions[plan[i].object]);
    }
    if (chance(rng, 0.5)) tokens.push_back(filler());

    std::string text;
    for (const auto& t : tokens) {
      if (!text.empty()) text += ' ';
      text += t;
    }
    auto join = [](const std::vector<std::string>& words) {
      std::string s;
      for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
      return s;
    };
    std::vector<StringTriple> strings;
    for (const auto& p : plan)
      strings.push_back({join(mentions[p.subject]), schema_[p.relation].label, join(mentions[p.object])});

    auto resolved = resolve_sentence(text, strings, schema_, unlimited);
    if (!resolved.sentence) continue;
    SyntheticSentence out;
    out.sentence = std::move(*resolved.sentence);
    if (classify_overlap(out.sentence) != pattern) continue;
    out.pattern = pattern;
    out.collision_single = has_cross_relation_collision(out.sentence, false);
    out.collision_multi = has_cross_relation_collision(out.sentence, true);
    return out;
  }
  throw std::runtime_error("could not generate a sentence with pattern " + std::string(to_string(pattern)));
}

std::vector<SyntheticSentence> SyntheticGenerator::corpus() const {
  std::mt19937_64 rng(config_.seed);
  std::vector<SyntheticSentence> out;
  out.reserve(config_.sentences);
  for (std::size_t i = 0; i < config_.sentences; ++i)
    out.push_back(sentence(config_.mix[i % config_.mix.size()], {}, rng));
  return out;
}

void write_jsonl(std::span<const SyntheticSentence> sentences, const RelationSchema& schema,
                 std::ostream& out) {
  for (const auto& s : sentences) out << sentence_to_json(s.sentence, schema).dump() << '\n';
}

}  // namespace relmap
