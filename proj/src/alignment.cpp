#include "secla/alignment.hpp"

#include <algorithm>
#include <string>

#include "secla/errors.hpp"

namespace secla {

std::vector<NameRecord> augment_with_noname(std::vector<NameRecord> names, const Vector& noname_embedding) {
  if (std::any_of(names.begin(), names.end(), [](const NameRecord& n) { return n.is_noname; })) return names;
  if (!names.empty() && names.front().embedding.size() != noname_embedding.size()) {
    throw ShapeError("augment_with_noname: NONAME embedding has " + std::to_string(noname_embedding.size()) +
                     " dims, names have " + std::to_string(names.front().embedding.size()));
  }
  names.push_back(NameRecord{kNoNameText, noname_embedding, true});
  return names;
}

std::vector<Link> align_pair(const Matrix& a, std::span<const NameRecord> names, bool enable_noface) {
  if (a.empty()) throw ContractError("align_pair: empty similarity matrix");
  if (a.cols() != names.size()) throw ShapeError("align_pair: matrix columns do not match the name list");
  std::vector<Link> links;
  std::vector<bool> chosen(names.size(), false);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < a.cols(); ++j) {
      if (a(i, j) > a(i, best)) best = j;
    }
    if (names[best].is_noname) {
      links.push_back(Link::no_name(i, a(i, best)));
    } else {
      chosen[best] = true;
      links.push_back(Link::normal(i, best, a(i, best)));
    }
  }
  if (enable_noface) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (!chosen[j] && !names[j].is_noname) links.push_back(Link::no_face(j));
    }
  }
  return links;
}

std::vector<LinkSet> align_dataset(const ProjectorStack& stack, std::span<const WeakPair> pairs,
                                   const Vector& noname_embedding, const AlignOptions& options) {
  std::vector<LinkSet> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    LinkSet ls{p.pair_id, {}};
    auto names = options.add_noname ? augment_with_noname(p.names, noname_embedding) : p.names;
    if (p.faces.empty() || names.empty()) {
      if (options.enable_noface) {
        for (std::size_t j = 0; j < p.names.size(); ++j) {
          if (!p.names[j].is_noname) ls.links.push_back(Link::no_face(j));
        }
      }
      // Faces with no candidate names at all.
      for (std::size_t i = 0; i < p.faces.size(); ++i) ls.links.push_back(Link::no_name(i));
    } else {
      ls.links = align_pair(similarity_matrix(stack, p.faces, names), names, options.enable_noface);
    }
    out.push_back(std::move(ls));
  }
  return out;
}

}  // namespace secla
