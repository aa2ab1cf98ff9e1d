#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "secla/dataset.hpp"
#include "secla/losses.hpp"
#include "secla/model.hpp"

namespace secla {

enum class PrototypeType { RandomFace, AvgFace, MedoidFace, MatchedFace };

const char* to_string(PrototypeType type);
PrototypeType prototype_from_string(const std::string& s);

struct TrainConfig {
  ModelDims dims;
  double alpha = 0.15;
  double lr = 3e-4;
  std::size_t batch_size = 20;
  std::size_t epochs = 30;
  std::size_t stage1_epochs = 15;
  std::size_t stage2_epochs = 20;
  std::uint64_t seed = 0;
  PrototypeType prototype = PrototypeType::MatchedFace;
  bool add_noname = true;
  bool add_noface_to_matched = false;
  bool use_fn = true;
  bool use_nf = true;
  bool use_fnp = true;
  bool use_fp = true;
  // Match known names with the frozen stage-1 model instead of the current one.
  bool freeze_matching = false;
  std::size_t workers = 1;
  AdamConfig adam;

  void validate() const;
  LossOptions loss_options() const { return {alpha, use_fn, use_nf}; }
  Stage2Options stage2_options() const { return {use_fnp, use_fp}; }
};

struct EpochLog {
  std::string stage;
  std::size_t epoch = 0;
  double l_fn = 0.0;
  double l_nf = 0.0;
  double l_agree = 0.0;
  double l_stage2 = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ProjectorStack stack;
  std::vector<EpochLog> log;
  std::optional<ProjectorStack> stage1;  // set by the two-stage trainers
};

// Matched items of one sample for the prototype losses, as raw vectors.
struct MatchedSample {
  std::vector<Vector> faces;
  std::vector<Vector> names;
  std::vector<Vector> prototypes;
};

struct BatchInput {
  std::vector<WeakPair> pairs;          // trained with the contrastive objective
  std::vector<MatchedSample> matched;   // trained with the prototype objective
};

struct BatchLossOptions {
  LossOptions loss;
  Stage2Options stage2;
  bool add_noname = true;
  std::size_t workers = 1;
};

// Objective of one optimizer step: contrastive total over `pairs` plus the
// prototype loss over `matched`.  Pairs without faces (or without names once
// NONAME handling is applied) are skipped.  When `grads` is given it receives
// the gradient (accumulated).  `signature`, when given, receives the ReLU
// masks and argmax choices that define the active smooth piece.
LossBreakdown batch_loss(const ProjectorStack& stack, const BatchInput& batch, const Vector& noname_embedding,
                         const BatchLossOptions& options, ProjectorStack* grads = nullptr,
                         std::vector<std::uint32_t>* signature = nullptr);

// Plain SECLA: config.epochs passes over `pairs`.
TrainResult train_secla(std::span<const WeakPair> pairs, const Vector& noname_embedding, const TrainConfig& config);

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> matched;  // (face, name)
  WeakPair residual;
};

// Each real name whose text is in `known` picks its highest-similarity face.
// The residual keeps the unknown names and the faces no known name picked.
MatchResult match_known_names(const ProjectorStack& stack, const WeakPair& pair, const std::set<std::string>& known);

std::set<std::string> unique_names(std::span<const WeakPair> pairs);

// Stage 1 on `easy`, then fine-tuning on the residual of `rest` after the
// stage-1 model has claimed faces for known names.
TrainResult train_pipeline_heuristic(std::span<const WeakPair> easy, std::span<const WeakPair> rest,
                                     const Vector& noname_embedding, const TrainConfig& config);

// Faces observed for each known name.  Entries are keyed so a face seen again
// in a later epoch is not banked twice.
class FaceBank {
 public:
  bool add(const std::string& name, const std::string& key, const Vector& face);
  bool contains(const std::string& name) const { return faces_.count(name) > 0; }
  const std::vector<Vector>& faces(const std::string& name) const;
  std::size_t size() const { return keys_.size(); }
  std::size_t name_count() const { return faces_.size(); }

 private:
  std::map<std::string, std::vector<Vector>> faces_;
  std::set<std::pair<std::string, std::string>> keys_;
};

Vector average_face(std::span<const Vector> faces);
// Member with the smallest mean Euclidean distance to the others; ties to the
// lowest index.
Vector medoid_face(std::span<const Vector> faces);

// One prototype per name.  Throws ContractError for names missing from the bank.
std::vector<Vector> select_prototypes(const FaceBank& bank, std::span<const NameRecord> names, PrototypeType type,
                                      const ProjectorStack& stack, Rng& rng);

// NOFACE vector appended to matched-face lists: seeded standard normal.
Vector noface_embedding(std::size_t face_dim, std::uint64_t seed);

// SECLA-B: stage 1 on `easy`, bank its aligned faces, then bootstrapped
// training over all pairs.
TrainResult train_secla_b(std::span<const WeakPair> all, std::span<const WeakPair> easy,
                          const Vector& noname_embedding, const TrainConfig& config);

}  // namespace secla
