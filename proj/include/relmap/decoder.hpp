#pragma once

#include <cstddef>

#include "relmap/dataset.hpp"

namespace relmap {

// For each relation r, subjects S_r = {i : cell(i, N+r)} and objects
// O_r = {j : cell(N+r, j)}; (i, r, j) is emitted when cell(i, j) or cell(j, i)
// links the pair. Spans in the output are single tokens. The relation-relation
// quadrant is never read.
TripleSet decode_single(const CellMatrix& cells, std::size_t sentence_length, std::size_t relation_count);

// Three-map decoding over full spans. Subject/object heads come from the head
// map, tails from the tail map; a candidate ((sh..st), r, (oh..ot)) needs
// sh <= st, oh <= ot, the four entity-relation cells, and entity-entity links
// (sh, oh) in the head map, (st, ot) in the tail map and (sh, ot) in the cross
// map, each read symmetrically.
TripleSet decode_multi(const CellMatrix& head, const CellMatrix& tail, const CellMatrix& cross,
                       std::size_t sentence_length, std::size_t relation_count);

// Exhaustive reference decoders: test every anchor triple (N*M*N) or every
// span quadruple per relation against the cell conditions directly.
TripleSet oracle_decode_single(const CellMatrix& cells, std::size_t sentence_length,
                               std::size_t relation_count);
TripleSet oracle_decode_multi(const CellMatrix& head, const CellMatrix& tail, const CellMatrix& cross,
                              std::size_t sentence_length, std::size_t relation_count);

// Collapses spans to their head token, the anchor used by single-token scoring.
Triple anchor_of(const Triple& t);
TripleSet anchors_of(const TripleSet& triples);

}  // namespace relmap
