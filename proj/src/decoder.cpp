#include "relmap/decoder.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace relmap {

namespace {

void check_size(const CellMatrix& m, std::size_t n, std::size_t relations, const char* what) {
  if (m.size() != n + relations)
    throw std::invalid_argument(std::string(what) + " map has size " + std::to_string(m.size()) +
                                ", expected N + M = " + std::to_string(n + relations));
}

bool linked(const CellMatrix& m, std::size_t a, std::size_t b) { return m(a, b) || m(b, a); }

std::vector<std::size_t> subjects_of(const CellMatrix& m, std::size_t n, std::size_t r) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (m(i, n + r)) out.push_back(i);
  return out;
}

std::vector<std::size_t> objects_of(const CellMatrix& m, std::size_t n, std::size_t r) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n; ++j)
    if (m(n + r, j)) out.push_back(j);
  return out;
}

}  // namespace

TripleSet decode_single(const CellMatrix& cells, std::size_t sentence_length, std::size_t relation_count) {
  check_size(cells, sentence_length, relation_count, "interaction");
  TripleSet out;
  for (std::size_t r = 0; r < relation_count; ++r) {
    const auto subjects = subjects_of(cells, sentence_length, r);
    if (subjects.empty()) continue;
    const auto objects = objects_of(cells, sentence_length, r);
    for (auto s : subjects)
      for (auto o : objects)
        if (linked(cells, s, o)) out.insert({{s, s}, r, {o, o}});
  }
  return out;
}

TripleSet decode_multi(const CellMatrix& head, const CellMatrix& tail, const CellMatrix& cross,
                       std::size_t sentence_length, std::size_t relation_count) {
  if (head.size() != tail.size() || head.size() != cross.size())
    throw std::invalid_argument("head, tail and cross maps differ in size");
  check_size(head, sentence_length, relation_count, "head");
  const std::size_t n = sentence_length;
  TripleSet out;
  for (std::size_t r = 0; r < relation_count; ++r) {
    const auto subject_heads = subjects_of(head, n, r);
    const auto object_heads = objects_of(head, n, r);
    if (subject_heads.empty() || object_heads.empty()) continue;
    const auto subject_tails = subjects_of(tail, n, r);
    const auto object_tails = objects_of(tail, n, r);
    for (auto sh : subject_heads) {
      for (auto oh : object_heads) {
        if (!linked(head, sh, oh)) continue;
        for (auto st : subject_tails) {
          if (st < sh) continue;
          for (auto ot : object_tails) {
            if (ot < oh || !linked(tail, st, ot) || !linked(cross, sh, ot)) continue;
            out.insert({{sh, st}, r, {oh, ot}});
          }
        }
      }
    }
  }
  return out;
}

TripleSet oracle_decode_single(const CellMatrix& cells, std::size_t sentence_length,
                               std::size_t relation_count) {
  check_size(cells, sentence_length, relation_count, "interaction");
  const std::size_t n = sentence_length;
  TripleSet out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < relation_count; ++r)
      for (std::size_t j = 0; j < n; ++j)
        if (cells(i, n + r) && cells(n + r, j) && (cells(i, j) || cells(j, i))) out.insert({{i, i}, r, {j, j}});
  return out;
}

TripleSet oracle_decode_multi(const CellMatrix& head, const CellMatrix& tail, const CellMatrix& cross,
                              std::size_t sentence_length, std::size_t relation_count) {
  check_size(head, sentence_length, relation_count, "head");
  check_size(tail, sentence_length, relation_count, "tail");
  check_size(cross, sentence_length, relation_count, "cross");
  const std::size_t n = sentence_length;
  TripleSet out;
  for (std::size_t r = 0; r < relation_count; ++r)
    for (std::size_t sh = 0; sh < n; ++sh)
      for (std::size_t st = sh; st < n; ++st)
        for (std::size_t oh = 0; oh < n; ++oh)
          for (std::size_t ot = oh; ot < n; ++ot) {
            const bool er = head(sh, n + r) && head(n + r, oh) && tail(st, n + r) && tail(n + r, ot);
            const bool ee = (head(sh, oh) || head(oh, sh)) && (tail(st, ot) || tail(ot, st)) &&
                            (cross(sh, ot) || cross(ot, sh));
            if (er && ee) out.insert({{sh, st}, r, {oh, ot}});
          }
  return out;
}

Triple anchor_of(const Triple& t) {
  return {{t.subject.head, t.subject.head}, t.relation, {t.object.head, t.object.head}};
}

TripleSet anchors_of(const TripleSet& triples) {
  TripleSet out;
  for (const auto& t : triples) out.insert(anchor_of(t));
  return out;
}

}  // namespace relmap
