#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "secla/model.hpp"

namespace secla {

inline constexpr int kFormatVersion = 1;

enum class LinkKind {
  Normal,  // face -> name
  NoName,  // face -> NONAME
  NoFace,  // NOFACE -> name
};

// One alignment link.  `face` is meaningful for Normal and NoName links,
// `name` for Normal and NoFace links; name indices refer to the pair's
// original name list.
struct Link {
  LinkKind kind = LinkKind::Normal;
  std::size_t face = 0;
  std::size_t name = 0;
  std::optional<double> score;

  static Link normal(std::size_t face, std::size_t name, std::optional<double> score = {}) {
    return {LinkKind::Normal, face, name, score};
  }
  static Link no_name(std::size_t face, std::optional<double> score = {}) {
    return {LinkKind::NoName, face, 0, score};
  }
  static Link no_face(std::size_t name) { return {LinkKind::NoFace, 0, name, {}}; }

  bool has_face() const { return kind != LinkKind::NoFace; }
  bool has_name() const { return kind != LinkKind::NoName; }
  bool is_null() const { return kind != LinkKind::Normal; }
  // Equality on the link identity, ignoring the score.
  bool same_target(const Link& other) const;
};

struct LinkSet {
  std::string pair_id;
  std::vector<Link> links;
};

// The weakly supervised view of a pair: what trainers are allowed to see.
struct WeakPair {
  std::string pair_id;
  std::vector<Vector> faces;
  std::vector<NameRecord> names;
};

struct ImageCaptionPair : WeakPair {
  std::optional<std::vector<Link>> gt_links;
};

struct Dataset {
  std::size_t face_dim = 0;
  std::size_t name_dim = 0;
  Vector noname_embedding;
  std::vector<ImageCaptionPair> pairs;
};

// Throws ValidationError on the first malformed record.  Messages carry the
// 1-based line number and, when known, the pair_id.
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
void write_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

// Checks dimensions, link indices and id uniqueness of an in-memory dataset.
void validate_dataset(const Dataset& dataset);

std::vector<WeakPair> strip_ground_truth(const std::vector<ImageCaptionPair>& pairs);
std::vector<LinkSet> ground_truth(const Dataset& dataset);

struct EasySplit {
  std::vector<ImageCaptionPair> easy;
  std::vector<ImageCaptionPair> rest;
  std::set<std::string> unique_names;
};

// easy = pairs with at most max_faces faces and at most max_names real names;
// with exclude_null, pairs whose ground truth has any null link (or that carry
// a NONAME record) are left in rest.  unique_names holds the real name texts
// of the easy pairs.
EasySplit make_easy_split(const Dataset& dataset, std::size_t max_faces, std::size_t max_names, bool exclude_null);

// Seeded per-epoch shuffle into batches of `batch_size`; the last batch may be
// smaller.  Returns index lists into the input sequence.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                 std::uint64_t epoch);

}  // namespace secla
