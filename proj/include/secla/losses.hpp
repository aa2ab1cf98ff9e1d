#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "secla/numerics.hpp"
#include "secla/tape.hpp"

namespace secla {

enum class Direction { FaceToName, NameToFace };

// Mean over rows of the row maximum (FaceToName) or mean over columns of the
// column maximum (NameToFace).
double dense_similarity(const Matrix& a, Direction direction);

// -log softmax(logits)[target], evaluated with log-sum-exp.  When `grad` is
// non-empty it receives scale * (softmax - onehot).
double softmax_nll(std::span<const double> logits, std::size_t target, std::span<double> grad = {},
                   double scale = 1.0);

// Face-to-name contrastive loss over a B x B matrix D_fn[k][l] = sim_d(F_k, N_l):
// for every caption l a softmax over images k, target k = l, averaged over l.
double contrastive_fn(const Matrix& d_fn, Matrix* grad = nullptr);
// Name-to-face mirror over D_nf[l][k] = sim_d(N_l, F_k): for every image k a
// softmax over captions l, target l = k.
double contrastive_nf(const Matrix& d_nf, Matrix* grad = nullptr);
// Mean squared difference of the two diagonals.
double agreement_loss(const Matrix& d_nf, const Matrix& d_fn, Matrix* grad_nf = nullptr, Matrix* grad_fn = nullptr);

struct LossOptions {
  double alpha = 0.15;
  bool use_fn = true;
  bool use_nf = true;
};

struct LossBreakdown {
  double l_fn = 0.0;
  double l_nf = 0.0;
  double l_agree = 0.0;
  double total = 0.0;
  double l_fnp_b = 0.0;
  double l_fp_b = 0.0;
  double l_stage2 = 0.0;
};

// l_fn + l_nf + alpha * l_agree, honouring the direction switches.
double combine_total(double l_fn, double l_nf, double l_agree, const LossOptions& options);

// Items of one image-caption pair registered on a tape.
struct PairItems {
  ItemSet faces;
  ItemSet names;
};

struct BatchSimilarity {
  Matrix d_fn;  // [k][l] = sim_d(F_k, N_l)
  Matrix d_nf;  // [l][k] = sim_d(N_l, F_k)
  std::vector<SetSimilarity> fn_cells;  // index k * B + l
  std::vector<SetSimilarity> nf_cells;  // index l * B + k
};

BatchSimilarity batch_similarity(const ProjectionTape& tape, std::span<const PairItems> batch);

struct SimilarityGrad {
  Matrix d_fn;
  Matrix d_nf;
};

LossBreakdown total_loss(const BatchSimilarity& sim, const LossOptions& options, SimilarityGrad* grad = nullptr);

void backpropagate(ProjectionTape& tape, std::span<const PairItems> batch, const BatchSimilarity& sim,
                   const SimilarityGrad& grad);

// Dense similarities entering the prototype losses for k matched samples
// (matched faces F'_i, matched names N'_i, prototype faces P_i).
struct Stage2Scores {
  Vector fn_pos;        // [i]    sim_d(F'_i, N'_i)
  Vector nf_pos;        // [i]    sim_d(N'_i, F'_i)
  Matrix proto_name;    // [j][i] sim_d(P_j, N'_i)
  Matrix name_proto;    // [i][j] sim_d(N'_i, P_j)
  Matrix face_proto;    // [i][j] sim_d(F'_i, P_j)
  Matrix proto_face;    // [j][i] sim_d(P_j, F'_i)

  static Stage2Scores zeros(std::size_t k);
  std::size_t samples() const { return fn_pos.size(); }
};

struct Stage2Options {
  bool use_fnp = true;
  bool use_fp = true;
};

// Matched face/name sets against other samples' prototypes, both directions.
double stage2_fnp(const Stage2Scores& s, Stage2Scores* grad = nullptr);
// Matched faces against all prototypes (own included), both directions.
double stage2_fp(const Stage2Scores& s, Stage2Scores* grad = nullptr);
LossBreakdown stage2_total(const Stage2Scores& s, const Stage2Options& options, Stage2Scores* grad = nullptr);

struct MatchedItems {
  ItemSet faces;
  ItemSet names;
  ItemSet prototypes;
};

struct Stage2Similarity {
  Stage2Scores scores;
  std::vector<SetSimilarity> fn_pos, nf_pos;
  std::vector<SetSimilarity> proto_name, name_proto, face_proto, proto_face;  // row-major k x k
};

Stage2Similarity stage2_similarity(const ProjectionTape& tape, std::span<const MatchedItems> samples);

void backpropagate(ProjectionTape& tape, std::span<const MatchedItems> samples, const Stage2Similarity& sim,
                   const Stage2Scores& grad);

}  // namespace secla
