#include "secla/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "secla/alignment.hpp"
#include "secla/errors.hpp"

namespace secla {

const char* to_string(PrototypeType type) {
  switch (type) {
    case PrototypeType::RandomFace:
      return "random_face";
    case PrototypeType::AvgFace:
      return "avg_face";
    case PrototypeType::MedoidFace:
      return "medoid_face";
    case PrototypeType::MatchedFace:
      return "matched_face";
  }
  return "?";
}

PrototypeType prototype_from_string(const std::string& s) {
  if (s == "random_face" || s == "random") return PrototypeType::RandomFace;
  if (s == "avg_face" || s == "avg") return PrototypeType::AvgFace;
  if (s == "medoid_face" || s == "medoid") return PrototypeType::MedoidFace;
  if (s == "matched_face" || s == "matched") return PrototypeType::MatchedFace;
  throw ContractError("unknown prototype type '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("train: lr must be positive");
  if (!(alpha >= 0.0)) throw ContractError("train: alpha must be non-negative");
  if (batch_size == 0) throw ContractError("train: batch_size must be >= 1");
  if (epochs == 0 || stage1_epochs == 0 || stage2_epochs == 0) throw ContractError("train: epochs must be >= 1");
  if (!use_fn && !use_nf) throw ContractError("train: at least one contrastive direction must be enabled");
}

LossBreakdown batch_loss(const ProjectorStack& stack, const BatchInput& batch, const Vector& noname_embedding,
                         const BatchLossOptions& options, ProjectorStack* grads,
                         std::vector<std::uint32_t>* signature) {
  ProjectionTape tape(stack);
  std::vector<PairItems> pair_items;
  for (const auto& p : batch.pairs) {
    if (p.faces.empty()) continue;
    const auto names = options.add_noname ? augment_with_noname(p.names, noname_embedding) : p.names;
    if (names.empty()) continue;
    PairItems items;
    for (const auto& f : p.faces) items.faces.push_back(tape.add_face(f));
    for (const auto& n : names) items.names.push_back(tape.add_name(n.embedding));
    pair_items.push_back(std::move(items));
  }
  std::vector<MatchedItems> matched_items;
  for (const auto& m : batch.matched) {
    if (m.faces.empty() || m.names.empty() || m.prototypes.empty()) {
      throw ContractError("batch_loss: matched sample with an empty set");
    }
    MatchedItems items;
    for (const auto& f : m.faces) items.faces.push_back(tape.add_face(f));
    for (const auto& n : m.names) items.names.push_back(tape.add_name(n));
    for (const auto& p : m.prototypes) items.prototypes.push_back(tape.add_face(p));
    matched_items.push_back(std::move(items));
  }
  tape.forward(options.workers);

  LossBreakdown out;
  const auto record = [signature](const SetSimilarity& s) {
    if (signature) signature->insert(signature->end(), s.argmax.begin(), s.argmax.end());
  };
  if (!pair_items.empty()) {
    const auto sim = batch_similarity(tape, pair_items);
    SimilarityGrad g;
    out = total_loss(sim, options.loss, grads ? &g : nullptr);
    if (grads) backpropagate(tape, pair_items, sim, g);
    for (const auto& c : sim.fn_cells) record(c);
    for (const auto& c : sim.nf_cells) record(c);
  }
  if (!matched_items.empty() && (options.stage2.use_fnp || options.stage2.use_fp)) {
    const auto sim = stage2_similarity(tape, matched_items);
    Stage2Scores g;
    const auto s2 = stage2_total(sim.scores, options.stage2, grads ? &g : nullptr);
    out.l_fnp_b = s2.l_fnp_b;
    out.l_fp_b = s2.l_fp_b;
    out.l_stage2 = s2.l_stage2;
    if (grads) backpropagate(tape, matched_items, sim, g);
    for (const auto* cells : {&sim.fn_pos, &sim.nf_pos, &sim.proto_name, &sim.name_proto, &sim.face_proto,
                              &sim.proto_face}) {
      for (const auto& c : *cells) record(c);
    }
  }
  if (grads) tape.backward(*grads);
  if (signature) tape.append_relu_pattern(*signature);
  return out;
}

namespace {

class Optimizer {
 public:
  Optimizer(ProjectorStack& stack, const TrainConfig& config)
      : stack_(stack), state_(stack.parameters(), config.adam), lr_(config.lr) {}

  void step(const ProjectorStack& grads) {
    const auto params = stack_.parameters();
    const auto g = grads.parameters();
    adam_step(params, g, state_, lr_);
  }

 private:
  ProjectorStack& stack_;
  AdamState state_;
  double lr_;
};

struct EpochAccumulator {
  std::size_t batches = 0;
  LossBreakdown sum;

  void add(const LossBreakdown& b) {
    ++batches;
    sum.l_fn += b.l_fn;
    sum.l_nf += b.l_nf;
    sum.l_agree += b.l_agree;
    sum.l_stage2 += b.l_stage2;
    sum.total += b.total + b.l_stage2;
  }

  EpochLog finish(const std::string& stage, std::size_t epoch) const {
    const double d = batches ? static_cast<double>(batches) : 1.0;
    return EpochLog{stage, epoch, sum.l_fn / d, sum.l_nf / d, sum.l_agree / d, sum.l_stage2 / d, sum.total / d};
  }
};

BatchLossOptions loss_options_for(const TrainConfig& config) {
  return BatchLossOptions{config.loss_options(), config.stage2_options(), config.add_noname, config.workers};
}

// One optimizer step on `batch`; returns the loss before the update.
LossBreakdown train_step(ProjectorStack& stack, Optimizer& opt, const BatchInput& batch, const Vector& noname,
                         const TrainConfig& config, const std::string& stage, std::size_t epoch, std::size_t index) {
  auto grads = ProjectorStack::zeros_like(stack);
  const auto loss = batch_loss(stack, batch, noname, loss_options_for(config), &grads);
  const double total = loss.total + loss.l_stage2;
  if (!std::isfinite(total)) {
    throw NumericError(stage + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(index) + " (l_fn=" + std::to_string(loss.l_fn) +
                       ", l_nf=" + std::to_string(loss.l_nf) + ", l_agree=" + std::to_string(loss.l_agree) +
                       ", l_stage2=" + std::to_string(loss.l_stage2) + ")");
  }
  for (const auto& p : grads.parameters()) {
    if (!all_finite(p)) {
      throw NumericError(stage + ": non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(index));
    }
  }
  opt.step(grads);
  return loss;
}

bool trainable(const WeakPair& p, bool add_noname) { return !p.faces.empty() && (add_noname || !p.names.empty()); }

void run_secla(ProjectorStack& stack, std::span<const WeakPair> pairs, const Vector& noname, const TrainConfig& config,
               std::size_t epochs, const std::string& stage, std::vector<EpochLog>& log) {
  Optimizer opt(stack, config);
  const std::uint64_t order_seed = derive_seed(config.seed, stage);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    EpochAccumulator acc;
    const auto batches = batch_iter(pairs.size(), config.batch_size, order_seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      BatchInput input;
      for (const auto idx : batches[b]) {
        if (trainable(pairs[idx], config.add_noname)) input.pairs.push_back(pairs[idx]);
      }
      if (input.pairs.empty()) continue;
      acc.add(train_step(stack, opt, input, noname, config, stage, epoch, b));
    }
    log.push_back(acc.finish(stage, epoch + 1));
  }
}

std::size_t argmax_face(const std::vector<Vector>& projected_faces, std::span<const double> name_proj) {
  std::size_t best = 0;
  double best_s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < projected_faces.size(); ++i) {
    const double s = pair_similarity(projected_faces[i], name_proj);
    if (s > best_s) {
      best_s = s;
      best = i;
    }
  }
  return best;
}

std::string bank_key(const std::string& pair_id, std::size_t face) { return pair_id + "#" + std::to_string(face); }

}  // namespace

TrainResult train_secla(std::span<const WeakPair> pairs, const Vector& noname_embedding, const TrainConfig& config) {
  config.validate();
  if (pairs.empty()) throw ContractError("train_secla: empty dataset");
  TrainResult result{ProjectorStack::init(config.dims, derive_seed(config.seed, "init")), {}, {}};
  run_secla(result.stack, pairs, noname_embedding, config, config.epochs, "secla", result.log);
  return result;
}

std::set<std::string> unique_names(std::span<const WeakPair> pairs) {
  std::set<std::string> out;
  for (const auto& p : pairs) {
    for (const auto& n : p.names) {
      if (!n.is_noname) out.insert(n.text);
    }
  }
  return out;
}

MatchResult match_known_names(const ProjectorStack& stack, const WeakPair& pair, const std::set<std::string>& known) {
  MatchResult r;
  r.residual.pair_id = pair.pair_id;
  std::vector<Vector> projected;
  projected.reserve(pair.faces.size());
  for (const auto& f : pair.faces) projected.push_back(project_face(stack, f));
  std::vector<bool> face_taken(pair.faces.size(), false);
  for (std::size_t j = 0; j < pair.names.size(); ++j) {
    const auto& n = pair.names[j];
    if (n.is_noname || !known.count(n.text)) {
      r.residual.names.push_back(n);
      continue;
    }
    if (pair.faces.empty()) continue;
    const std::size_t i = argmax_face(projected, project_name(stack, n.embedding));
    face_taken[i] = true;
    r.matched.emplace_back(i, j);
  }
  for (std::size_t i = 0; i < pair.faces.size(); ++i) {
    if (!face_taken[i]) r.residual.faces.push_back(pair.faces[i]);
  }
  return r;
}

TrainResult train_pipeline_heuristic(std::span<const WeakPair> easy, std::span<const WeakPair> rest,
                                     const Vector& noname_embedding, const TrainConfig& config) {
  config.validate();
  if (easy.empty()) throw ContractError("train_pipeline_heuristic: empty easy subset");
  TrainResult result{ProjectorStack::init(config.dims, derive_seed(config.seed, "init")), {}, {}};
  run_secla(result.stack, easy, noname_embedding, config, config.stage1_epochs, "stage1", result.log);
  result.stage1 = result.stack;

  const auto known = unique_names(easy);
  std::vector<WeakPair> unmatched;
  for (const auto& p : rest) {
    auto m = match_known_names(result.stack, p, known);
    if (trainable(m.residual, config.add_noname)) unmatched.push_back(std::move(m.residual));
  }
  if (!unmatched.empty()) {
    run_secla(result.stack, unmatched, noname_embedding, config, config.stage2_epochs, "finetune", result.log);
  }
  return result;
}

bool FaceBank::add(const std::string& name, const std::string& key, const Vector& face) {
  if (!keys_.emplace(name, key).second) return false;
  auto& list = faces_[name];
  if (!list.empty() && list.front().size() != face.size()) throw ShapeError("FaceBank: face dimension mismatch");
  list.push_back(face);
  return true;
}

const std::vector<Vector>& FaceBank::faces(const std::string& name) const {
  const auto it = faces_.find(name);
  if (it == faces_.end()) throw ContractError("FaceBank: no faces banked for '" + name + "'");
  return it->second;
}

Vector average_face(std::span<const Vector> faces) {
  if (faces.empty()) throw ContractError("average_face: empty set");
  Vector avg(faces.front().size(), 0.0);
  for (const auto& f : faces) {
    for (std::size_t d = 0; d < avg.size(); ++d) avg[d] += f[d];
  }
  for (double& x : avg) x /= static_cast<double>(faces.size());
  return avg;
}

Vector medoid_face(std::span<const Vector> faces) {
  if (faces.empty()) throw ContractError("medoid_face: empty set");
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < faces.size(); ++i) {
    double cost = 0.0;
    for (std::size_t j = 0; j < faces.size(); ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t d = 0; d < faces[i].size(); ++d) {
        const double diff = faces[i][d] - faces[j][d];
        d2 += diff * diff;
      }
      cost += std::sqrt(d2);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = i;
    }
  }
  return faces[best];
}

std::vector<Vector> select_prototypes(const FaceBank& bank, std::span<const NameRecord> names, PrototypeType type,
                                      const ProjectorStack& stack, Rng& rng) {
  for (const auto& n : names) bank.faces(n.text);  // reject unknown names up front
  std::vector<Vector> out;
  out.reserve(names.size());
  if (type != PrototypeType::MatchedFace) {
    for (const auto& n : names) {
      const auto& faces = bank.faces(n.text);
      if (type == PrototypeType::RandomFace) {
        out.push_back(faces[rng.index(faces.size())]);
      } else if (type == PrototypeType::AvgFace) {
        out.push_back(average_face(faces));
      } else {
        out.push_back(medoid_face(faces));
      }
    }
    return out;
  }
  // Project the banked faces of every distinct name once, in one pass.
  std::map<std::string, std::size_t> offset;
  std::vector<Vector> pool;
  for (const auto& n : names) {
    if (offset.count(n.text)) continue;
    offset[n.text] = pool.size();
    const auto& faces = bank.faces(n.text);
    pool.insert(pool.end(), faces.begin(), faces.end());
  }
  const auto projected = project_faces(stack, pool);
  for (const auto& n : names) {
    const auto& faces = bank.faces(n.text);
    const std::size_t at = offset[n.text];
    const std::vector<Vector> mine(projected.begin() + static_cast<std::ptrdiff_t>(at),
                                   projected.begin() + static_cast<std::ptrdiff_t>(at + faces.size()));
    out.push_back(faces[argmax_face(mine, project_name(stack, n.embedding))]);
  }
  return out;
}

Vector noface_embedding(std::size_t face_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "noface"));
  Vector v(face_dim);
  for (double& x : v) x = rng.normal();
  return v;
}

TrainResult train_secla_b(std::span<const WeakPair> all, std::span<const WeakPair> easy,
                          const Vector& noname_embedding, const TrainConfig& config) {
  config.validate();
  if (easy.empty()) throw ContractError("train_secla_b: empty easy subset");
  TrainResult result{ProjectorStack::init(config.dims, derive_seed(config.seed, "init")), {}, {}};
  auto& stack = result.stack;
  run_secla(stack, easy, noname_embedding, config, config.stage1_epochs, "stage1", result.log);
  result.stage1 = stack;

  const auto known = unique_names(easy);
  FaceBank bank;
  const auto stage1_links =
      align_dataset(stack, easy, noname_embedding, AlignOptions{false, config.add_noname});
  for (std::size_t p = 0; p < easy.size(); ++p) {
    for (const auto& l : stage1_links[p].links) {
      if (l.kind != LinkKind::Normal) continue;
      bank.add(easy[p].names[l.name].text, bank_key(easy[p].pair_id, l.face), easy[p].faces[l.face]);
    }
  }

  const Vector noface = noface_embedding(config.dims.face_dim, config.seed);
  Optimizer opt(stack, config);
  const std::uint64_t order_seed = derive_seed(config.seed, "stage2");
  for (std::size_t epoch = 0; epoch < config.stage2_epochs; ++epoch) {
    EpochAccumulator acc;
    Rng proto_rng(derive_seed(config.seed, "prototype-random", epoch));
    // Epoch-level prototype cache for the average and medoid strategies.
    std::map<std::string, Vector> cached;
    const auto batches = batch_iter(all.size(), config.batch_size, order_seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const ProjectorStack& matcher = config.freeze_matching ? *result.stage1 : stack;
      BatchInput input;
      std::vector<std::vector<NameRecord>> matched_names;
      for (const auto idx : batches[b]) {
        const auto& pair = all[idx];
        auto m = match_known_names(matcher, pair, known);
        if (!m.matched.empty()) {
          MatchedSample sample;
          std::vector<NameRecord> names;
          std::vector<std::size_t> faces_used;
          for (const auto& [face, name] : m.matched) {
            bank.add(pair.names[name].text, bank_key(pair.pair_id, face), pair.faces[face]);
            if (std::find(faces_used.begin(), faces_used.end(), face) == faces_used.end()) {
              faces_used.push_back(face);
              sample.faces.push_back(pair.faces[face]);
            }
            names.push_back(pair.names[name]);
            sample.names.push_back(pair.names[name].embedding);
          }
          if (config.add_noface_to_matched) sample.faces.push_back(noface);
          input.matched.push_back(std::move(sample));
          matched_names.push_back(std::move(names));
        }
        if (trainable(m.residual, config.add_noname)) input.pairs.push_back(std::move(m.residual));
      }
      if (config.prototype == PrototypeType::AvgFace || config.prototype == PrototypeType::MedoidFace) {
        for (std::size_t s = 0; s < input.matched.size(); ++s) {
          for (const auto& n : matched_names[s]) {
            auto it = cached.find(n.text);
            if (it == cached.end()) {
              const auto& faces = bank.faces(n.text);
              it = cached.emplace(n.text, config.prototype == PrototypeType::AvgFace ? average_face(faces)
                                                                                    : medoid_face(faces))
                       .first;
            }
            input.matched[s].prototypes.push_back(it->second);
          }
        }
      } else {
        std::vector<NameRecord> all_names;
        for (const auto& names : matched_names) all_names.insert(all_names.end(), names.begin(), names.end());
        const auto protos = select_prototypes(bank, all_names, config.prototype, stack, proto_rng);
        std::size_t next = 0;
        for (std::size_t s = 0; s < input.matched.size(); ++s) {
          for (std::size_t j = 0; j < matched_names[s].size(); ++j) input.matched[s].prototypes.push_back(protos[next++]);
        }
      }
      if (input.pairs.empty() && input.matched.empty()) continue;
      acc.add(train_step(stack, opt, input, noname_embedding, config, "stage2", epoch, b));
    }
    result.log.push_back(acc.finish("stage2", epoch + 1));
  }
  return result;
}

}  // namespace secla
