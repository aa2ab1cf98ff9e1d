#include "secla/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json_io.hpp"
#include "secla/errors.hpp"
#include "secla/rng.hpp"

namespace secla {

using nlohmann::json;

namespace detail {

ordered_json link_to_json(const Link& link) {
  ordered_json j;
  if (link.has_face()) {
    j["face"] = link.face;
  } else {
    j["face"] = nullptr;
  }
  if (link.kind == LinkKind::NoName) {
    j["name"] = kNoNameText;
  } else {
    j["name"] = link.name;
  }
  if (link.score) j["score"] = *link.score;
  return j;
}

Link link_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("face") || !j.contains("name")) {
    throw ValidationError(where + ": link needs 'face' and 'name'");
  }
  const auto& f = j["face"];
  const auto& n = j["name"];
  Link link;
  const bool face_null = f.is_null() || (f.is_string() && f.get<std::string>() == "NOFACE");
  if (face_null) {
    if (!n.is_number_unsigned()) throw ValidationError(where + ": NOFACE link needs a name index");
    link = Link::no_face(n.get<std::size_t>());
  } else if (f.is_number_unsigned()) {
    if (n.is_string() && n.get<std::string>() == kNoNameText) {
      link = Link::no_name(f.get<std::size_t>());
    } else if (n.is_number_unsigned()) {
      link = Link::normal(f.get<std::size_t>(), n.get<std::size_t>());
    } else {
      throw ValidationError(where + ": link name must be an index or \"NONAME\"");
    }
  } else {
    throw ValidationError(where + ": link face must be an index or null");
  }
  if (j.contains("score") && j["score"].is_number()) link.score = j["score"].get<double>();
  return link;
}

Vector vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
  Vector v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(where + ": expected an array of numbers");
    const double d = x.get<double>();
    if (!std::isfinite(d)) throw ValidationError(where + ": non-finite value");
    v.push_back(d);
  }
  return v;
}

ordered_json vector_to_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (const double x : v) a.push_back(x);
  return a;
}

}  // namespace detail

bool Link::same_target(const Link& other) const {
  if (kind != other.kind) return false;
  switch (kind) {
    case LinkKind::Normal:
      return face == other.face && name == other.name;
    case LinkKind::NoName:
      return face == other.face;
    case LinkKind::NoFace:
      return name == other.name;
  }
  return false;
}

namespace {

std::string context(std::size_t line, const std::string& pair_id) {
  std::string s = "line " + std::to_string(line);
  if (!pair_id.empty()) s += ", pair '" + pair_id + "'";
  return s;
}

void validate_pair(const ImageCaptionPair& p, std::size_t face_dim, std::size_t name_dim, const std::string& where) {
  if (p.pair_id.empty()) throw ValidationError(where + ": empty pair_id");
  if (p.faces.empty() && p.names.empty()) throw ValidationError(where + ": pair has neither faces nor names");
  for (std::size_t i = 0; i < p.faces.size(); ++i) {
    if (p.faces[i].size() != face_dim) {
      throw ValidationError(where + ": face " + std::to_string(i) + " has " + std::to_string(p.faces[i].size()) +
                            " dims, expected d_f=" + std::to_string(face_dim));
    }
    if (!all_finite(p.faces[i])) throw ValidationError(where + ": face " + std::to_string(i) + " is not finite");
  }
  std::size_t nonames = 0;
  for (std::size_t j = 0; j < p.names.size(); ++j) {
    const auto& n = p.names[j];
    if (n.embedding.size() != name_dim) {
      throw ValidationError(where + ": name " + std::to_string(j) + " has " + std::to_string(n.embedding.size()) +
                            " dims, expected d_n=" + std::to_string(name_dim));
    }
    if (!all_finite(n.embedding)) throw ValidationError(where + ": name " + std::to_string(j) + " is not finite");
    if (n.is_noname) ++nonames;
  }
  if (nonames > 1) throw ValidationError(where + ": more than one NONAME record");
  if (!p.gt_links) return;
  std::vector<int> face_seen(p.faces.size(), 0);
  for (const auto& l : *p.gt_links) {
    if (l.has_face() && l.face >= p.faces.size()) {
      throw ValidationError(where + ": gt link references face " + std::to_string(l.face));
    }
    if (l.has_name() && l.name >= p.names.size()) {
      throw ValidationError(where + ": gt link references name " + std::to_string(l.name));
    }
    if (l.has_face() && ++face_seen[l.face] > 1) {
      throw ValidationError(where + ": face " + std::to_string(l.face) + " appears in more than one gt link");
    }
  }
}

}  // namespace

void validate_dataset(const Dataset& dataset) {
  if (dataset.face_dim == 0 || dataset.name_dim == 0) throw ValidationError("dataset: dimensions must be positive");
  if (dataset.noname_embedding.size() != dataset.name_dim) {
    throw ValidationError("dataset: noname_embedding has " + std::to_string(dataset.noname_embedding.size()) +
                          " dims, expected d_n=" + std::to_string(dataset.name_dim));
  }
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    const auto& p = dataset.pairs[i];
    const std::string where = "pair '" + p.pair_id + "'";
    validate_pair(p, dataset.face_dim, dataset.name_dim, where);
    if (!ids.insert(p.pair_id).second) throw ValidationError(where + ": duplicate pair_id");
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(context(line_no, "") + ": JSON parse error: " + e.what());
    }
    try {
      if (!have_header) {
        const std::string where = context(line_no, "") + " (header)";
        if (!j.is_object() || !j.contains("format_version") || !j.contains("d_f") || !j.contains("d_n") ||
            !j.contains("noname_embedding")) {
          throw ValidationError(where + ": expected {format_version, d_f, d_n, noname_embedding}");
        }
        if (j["format_version"].get<int>() != kFormatVersion) {
          throw ValidationError(where + ": unsupported format_version " + j["format_version"].dump());
        }
        ds.face_dim = j["d_f"].get<std::size_t>();
        ds.name_dim = j["d_n"].get<std::size_t>();
        if (ds.face_dim == 0 || ds.name_dim == 0) throw ValidationError(where + ": dimensions must be positive");
        ds.noname_embedding = detail::vector_from_json(j["noname_embedding"], where);
        if (ds.noname_embedding.size() != ds.name_dim) {
          throw ValidationError(where + ": noname_embedding has " + std::to_string(ds.noname_embedding.size()) +
                                " dims, expected d_n=" + std::to_string(ds.name_dim));
        }
        have_header = true;
        continue;
      }
      if (!j.is_object() || !j.contains("pair_id") || !j["pair_id"].is_string()) {
        throw ValidationError(context(line_no, "") + ": record needs a string pair_id");
      }
      ImageCaptionPair p;
      p.pair_id = j["pair_id"].get<std::string>();
      const std::string where = context(line_no, p.pair_id);
      if (j.contains("faces")) {
        if (!j["faces"].is_array()) throw ValidationError(where + ": 'faces' must be an array");
        for (const auto& f : j["faces"]) p.faces.push_back(detail::vector_from_json(f, where));
      }
      if (j.contains("names")) {
        if (!j["names"].is_array()) throw ValidationError(where + ": 'names' must be an array");
        for (const auto& n : j["names"]) {
          if (!n.is_object() || !n.contains("text") || !n.contains("emb") || !n["text"].is_string()) {
            throw ValidationError(where + ": name records need 'text' and 'emb'");
          }
          NameRecord r;
          r.text = n["text"].get<std::string>();
          r.embedding = detail::vector_from_json(n["emb"], where);
          r.is_noname = r.text == kNoNameText || n.value("noname", false);
          p.names.push_back(std::move(r));
        }
      }
      if (j.contains("gt_links") && !j["gt_links"].is_null()) {
        if (!j["gt_links"].is_array()) throw ValidationError(where + ": 'gt_links' must be an array");
        std::vector<Link> links;
        for (const auto& l : j["gt_links"]) links.push_back(detail::link_from_json(l, where));
        p.gt_links = std::move(links);
      }
      validate_pair(p, ds.face_dim, ds.name_dim, where);
      if (!ids.insert(p.pair_id).second) throw ValidationError(where + ": duplicate pair_id");
      ds.pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ValidationError(context(line_no, "") + ": " + e.what());
    }
  }
  if (!have_header) throw ValidationError("dataset: missing header line");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  detail::ordered_json header;
  header["format_version"] = kFormatVersion;
  header["d_f"] = dataset.face_dim;
  header["d_n"] = dataset.name_dim;
  header["noname_embedding"] = detail::vector_to_json(dataset.noname_embedding);
  out << header.dump() << '\n';
  for (const auto& p : dataset.pairs) {
    detail::ordered_json j;
    j["pair_id"] = p.pair_id;
    auto faces = detail::ordered_json::array();
    for (const auto& f : p.faces) faces.push_back(detail::vector_to_json(f));
    j["faces"] = std::move(faces);
    auto names = detail::ordered_json::array();
    for (const auto& n : p.names) {
      detail::ordered_json r;
      r["text"] = n.text;
      r["emb"] = detail::vector_to_json(n.embedding);
      if (n.is_noname && n.text != kNoNameText) r["noname"] = true;
      names.push_back(std::move(r));
    }
    j["names"] = std::move(names);
    if (p.gt_links) {
      auto links = detail::ordered_json::array();
      for (const auto& l : *p.gt_links) links.push_back(detail::link_to_json(l));
      j["gt_links"] = std::move(links);
    }
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write dataset file " + path.string());
  write_dataset(out, dataset);
}

std::vector<WeakPair> strip_ground_truth(const std::vector<ImageCaptionPair>& pairs) {
  std::vector<WeakPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(static_cast<const WeakPair&>(p));
  return out;
}

std::vector<LinkSet> ground_truth(const Dataset& dataset) {
  std::vector<LinkSet> out;
  out.reserve(dataset.pairs.size());
  for (const auto& p : dataset.pairs) {
    if (!p.gt_links) throw ValidationError("pair '" + p.pair_id + "' has no gt_links");
    out.push_back(LinkSet{p.pair_id, *p.gt_links});
  }
  return out;
}

EasySplit make_easy_split(const Dataset& dataset, std::size_t max_faces, std::size_t max_names, bool exclude_null) {
  if (max_faces == 0 || max_names == 0) throw ContractError("make_easy_split: thresholds must be >= 1");
  EasySplit split;
  for (const auto& p : dataset.pairs) {
    std::size_t real_names = 0;
    bool has_noname_record = false;
    for (const auto& n : p.names) {
      if (n.is_noname) {
        has_noname_record = true;
      } else {
        ++real_names;
      }
    }
    bool easy = p.faces.size() <= max_faces && real_names <= max_names;
    if (easy && exclude_null) {
      if (has_noname_record) easy = false;
      if (p.gt_links) {
        for (const auto& l : *p.gt_links) easy = easy && !l.is_null();
      }
    }
    if (easy) {
      for (const auto& n : p.names) {
        if (!n.is_noname) split.unique_names.insert(n.text);
      }
      split.easy.push_back(p);
    } else {
      split.rest.push_back(p);
    }
  }
  return split;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                 std::uint64_t epoch) {
  if (batch_size == 0) throw ContractError("batch_iter: batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "batch-order", epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace secla
