#include "secla/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "secla/errors.hpp"
#include "secla/rng.hpp"

namespace secla {

namespace {

Vector normal_vector(Rng& rng, std::size_t dim) {
  Vector v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

void scale_to_norm(Vector& v, double target) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) {
    v[0] = target;
    return;
  }
  for (double& x : v) x *= target / n;
}

// Weighted draw of `count` distinct identities, excluding `taken`.
std::vector<std::size_t> draw_identities(Rng& rng, const Vector& weights, std::size_t count,
                                         const std::vector<std::size_t>& taken) {
  std::vector<std::size_t> out;
  std::vector<bool> used(weights.size(), false);
  for (const auto t : taken) used[t] = true;
  for (std::size_t c = 0; c < count; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!used[i]) total += weights[i];
    }
    double r = rng.uniform() * total;
    std::size_t pick = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (used[i]) continue;
      pick = i;
      r -= weights[i];
      if (r < 0.0) break;
    }
    used[pick] = true;
    out.push_back(pick);
  }
  return out;
}

}  // namespace

std::string identity_name(std::size_t identity) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "person_%04zu", identity);
  return buf;
}

void SynthConfig::validate() const {
  if (num_identities == 0 || num_pairs == 0) throw ContractError("synth: identities and pairs must be >= 1");
  if (min_faces == 0 || min_faces > max_faces) throw ContractError("synth: need 1 <= min_faces <= max_faces");
  if (max_names == 0 || min_names > max_names) throw ContractError("synth: need min_names <= max_names, max_names >= 1");
  if (face_dim == 0 || name_dim == 0) throw ContractError("synth: dimensions must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ContractError("synth: sigma must be >= 0");
  if (!(noname_rate >= 0.0 && noname_rate <= 1.0) || !(noface_rate >= 0.0 && noface_rate <= 1.0)) {
    throw ContractError("synth: rates must lie in [0, 1]");
  }
  if (!(zipf_exponent >= 0.0)) throw ContractError("synth: zipf exponent must be >= 0");
  const std::size_t extras = std::max<std::size_t>(min_names, noface_rate > 0.0 ? 1 : 0);
  if (max_faces + extras > num_identities) {
    throw ContractError("synth: infeasible config, a pair may need " + std::to_string(max_faces + extras) +
                        " distinct identities but only " + std::to_string(num_identities) + " exist");
  }
}

Dataset synth_generate(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.face_dim = config.face_dim;
  ds.name_dim = config.name_dim;

  Rng id_rng(derive_seed(config.seed, "synth-identities"));
  std::vector<Vector> centers(config.num_identities);
  std::vector<Vector> name_embs(config.num_identities);
  const double name_norm = std::sqrt(static_cast<double>(config.name_dim));
  for (std::size_t i = 0; i < config.num_identities; ++i) {
    centers[i] = normal_vector(id_rng, config.face_dim);
    scale_to_norm(centers[i], 1.0);
    name_embs[i] = normal_vector(id_rng, config.name_dim);
    scale_to_norm(name_embs[i], name_norm);
  }
  Rng noname_rng(derive_seed(config.seed, "synth-noname"));
  ds.noname_embedding = normal_vector(noname_rng, config.name_dim);
  scale_to_norm(ds.noname_embedding, name_norm);

  Vector weights(config.num_identities);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), config.zipf_exponent);
  }

  Rng rng(derive_seed(config.seed, "synth-pairs"));
  const int width = static_cast<int>(std::to_string(config.num_pairs - 1).size());
  for (std::size_t p = 0; p < config.num_pairs; ++p) {
    ImageCaptionPair pair;
    std::string idx = std::to_string(p);
    pair.pair_id = "pair_" + std::string(static_cast<std::size_t>(width) - idx.size(), '0') + idx;

    const std::size_t n = config.min_faces + rng.index(config.max_faces - config.min_faces + 1);
    const auto face_ids = draw_identities(rng, weights, n, {});
    std::vector<bool> captioned(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vector f = centers[face_ids[i]];
      for (double& x : f) x += config.sigma * rng.normal();
      scale_to_norm(f, 1.0);
      pair.faces.push_back(std::move(f));
      captioned[i] = !rng.bernoulli(config.noname_rate);
    }
    std::size_t extras = rng.bernoulli(config.noface_rate) ? 1 : 0;

    // Enforce caption-length bounds.
    auto caption_len = [&] {
      return static_cast<std::size_t>(std::count(captioned.begin(), captioned.end(), true)) + extras;
    };
    while (caption_len() > config.max_names) {
      if (extras > 0) {
        --extras;
        continue;
      }
      for (std::size_t i = n; i-- > 0;) {
        if (captioned[i]) {
          captioned[i] = false;
          break;
        }
      }
    }
    while (caption_len() < config.min_names) ++extras;
    const auto extra_ids = draw_identities(rng, weights, extras, face_ids);

    // (identity, face index or npos) in caption order.
    struct Entry {
      std::size_t identity;
      std::size_t face;
    };
    std::vector<Entry> caption;
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < n; ++i) {
      if (captioned[i]) caption.push_back({face_ids[i], i});
    }
    for (const auto id : extra_ids) caption.push_back({id, kNone});
    rng.shuffle(caption.begin(), caption.end());

    std::vector<Link> gt;
    std::vector<std::size_t> name_of_face(n, kNone);
    for (std::size_t j = 0; j < caption.size(); ++j) {
      pair.names.push_back(NameRecord{identity_name(caption[j].identity), name_embs[caption[j].identity], false});
      if (caption[j].face == kNone) {
        continue;
      }
      name_of_face[caption[j].face] = j;
    }
    for (std::size_t i = 0; i < n; ++i) {
      gt.push_back(name_of_face[i] == kNone ? Link::no_name(i) : Link::normal(i, name_of_face[i]));
    }
    for (std::size_t j = 0; j < caption.size(); ++j) {
      if (caption[j].face == kNone) gt.push_back(Link::no_face(j));
    }
    pair.gt_links = std::move(gt);
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

}  // namespace secla
