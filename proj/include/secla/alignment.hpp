#pragma once

#include <span>
#include <vector>

#include "secla/dataset.hpp"
#include "secla/model.hpp"

namespace secla {

// Appends a NONAME record carrying `noname_embedding` unless the list already
// has one.  Idempotent.
std::vector<NameRecord> augment_with_noname(std::vector<NameRecord> names, const Vector& noname_embedding);

// Per-face argmax over the columns of `a` (ties to the lowest index).  Faces
// whose argmax is a NONAME column get a NONAME link.  With enable_noface, real
// names chosen by no face are linked to NOFACE.  Columns of `a` correspond to
// `names`; link name indices are positions in `names`.
std::vector<Link> align_pair(const Matrix& a, std::span<const NameRecord> names, bool enable_noface);

struct AlignOptions {
  bool enable_noface = true;
  bool add_noname = true;
};

std::vector<LinkSet> align_dataset(const ProjectorStack& stack, std::span<const WeakPair> pairs,
                                   const Vector& noname_embedding, const AlignOptions& options = {});

}  // namespace secla
