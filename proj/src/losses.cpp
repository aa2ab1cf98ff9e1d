#include "secla/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "secla/errors.hpp"

namespace secla {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m.values())) throw NumericError(std::string(what) + ": non-finite input");
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.empty()) {
    throw ShapeError(std::string(what) + ": expected a non-empty square matrix, got " + std::to_string(m.rows()) +
                     "x" + std::to_string(m.cols()));
  }
}

// Softmax over each column, target on the diagonal, averaged over columns.
double column_softmax_loss(const Matrix& d, Matrix* grad, const char* what) {
  require_square(d, what);
  require_finite(d, what);
  const std::size_t b = d.rows();
  const double scale = 1.0 / static_cast<double>(b);
  if (grad) *grad = Matrix(b, b);
  Vector logits(b), g(b);
  double total = 0.0;
  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t r = 0; r < b; ++r) logits[r] = d(r, c);
    total += softmax_nll(logits, c, grad ? std::span<double>(g) : std::span<double>{}, scale);
    if (grad) {
      for (std::size_t r = 0; r < b; ++r) (*grad)(r, c) = g[r];
    }
  }
  return total * scale;
}

void check_stage2_shapes(const Stage2Scores& s) {
  const std::size_t k = s.fn_pos.size();
  if (k == 0) throw ContractError("stage2 loss: no matched samples");
  const auto square = [k](const Matrix& m) { return m.rows() == k && m.cols() == k; };
  if (s.nf_pos.size() != k || !square(s.proto_name) || !square(s.name_proto) || !square(s.face_proto) ||
      !square(s.proto_face)) {
    throw ShapeError("stage2 loss: score tables disagree on the sample count");
  }
}

// Positive score against the prototypes of every other sample, target at 0.
double prototype_contrast(const Vector& pos, const Matrix& neg, bool neg_row_is_sample, Vector* grad_pos,
                          Matrix* grad_neg) {
  const std::size_t k = pos.size();
  const double scale = 1.0 / static_cast<double>(k);
  Vector logits, g;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    logits.assign(1, pos[i]);
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) logits.push_back(neg_row_is_sample ? neg(i, j) : neg(j, i));
    }
    g.assign(logits.size(), 0.0);
    total += softmax_nll(logits, 0, grad_pos ? std::span<double>(g) : std::span<double>{}, scale);
    if (grad_pos) {
      (*grad_pos)[i] += g[0];
      std::size_t slot = 1;
      for (std::size_t j = 0; j < k; ++j) {
        if (j == i) continue;
        (neg_row_is_sample ? (*grad_neg)(i, j) : (*grad_neg)(j, i)) += g[slot++];
      }
    }
  }
  return total * scale;
}

// Softmax over all prototypes with the sample's own prototype as target.
double prototype_softmax(const Matrix& scores, bool row_is_sample, Matrix* grad) {
  const std::size_t k = scores.rows();
  const double scale = 1.0 / static_cast<double>(k);
  Vector logits(k), g(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) logits[j] = row_is_sample ? scores(i, j) : scores(j, i);
    total += softmax_nll(logits, i, grad ? std::span<double>(g) : std::span<double>{}, scale);
    if (grad) {
      for (std::size_t j = 0; j < k; ++j) (row_is_sample ? (*grad)(i, j) : (*grad)(j, i)) += g[j];
    }
  }
  return total * scale;
}

}  // namespace

double dense_similarity(const Matrix& a, Direction direction) {
  if (a.empty()) throw ContractError("dense_similarity: empty matrix");
  double total = 0.0;
  if (direction == Direction::FaceToName) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const auto row = a.row(i);
      total += *std::max_element(row.begin(), row.end());
    }
    return total / static_cast<double>(a.rows());
  }
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double best = a(0, j);
    for (std::size_t i = 1; i < a.rows(); ++i) best = std::max(best, a(i, j));
    total += best;
  }
  return total / static_cast<double>(a.cols());
}

double softmax_nll(std::span<const double> logits, std::size_t target, std::span<double> grad, double scale) {
  if (target >= logits.size()) throw ContractError("softmax_nll: target out of range");
  if (!all_finite(logits)) throw NumericError("softmax_nll: non-finite logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (const double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  if (!grad.empty()) {
    if (grad.size() != logits.size()) throw ShapeError("softmax_nll: gradient length mismatch");
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad[i] = scale * (std::exp(logits[i] - lse) - (i == target ? 1.0 : 0.0));
    }
  }
  return std::max(0.0, lse - logits[target]);
}

double contrastive_fn(const Matrix& d_fn, Matrix* grad) { return column_softmax_loss(d_fn, grad, "contrastive_fn"); }

double contrastive_nf(const Matrix& d_nf, Matrix* grad) { return column_softmax_loss(d_nf, grad, "contrastive_nf"); }

double agreement_loss(const Matrix& d_nf, const Matrix& d_fn, Matrix* grad_nf, Matrix* grad_fn) {
  require_square(d_nf, "agreement_loss");
  require_square(d_fn, "agreement_loss");
  if (d_nf.rows() != d_fn.rows()) throw ShapeError("agreement_loss: matrix sizes differ");
  const std::size_t b = d_nf.rows();
  const double scale = 1.0 / static_cast<double>(b);
  if (grad_nf) *grad_nf = Matrix(b, b);
  if (grad_fn) *grad_fn = Matrix(b, b);
  double total = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    const double diff = d_nf(k, k) - d_fn(k, k);
    total += diff * diff;
    if (grad_nf) (*grad_nf)(k, k) = 2.0 * diff * scale;
    if (grad_fn) (*grad_fn)(k, k) = -2.0 * diff * scale;
  }
  return total * scale;
}

double combine_total(double l_fn, double l_nf, double l_agree, const LossOptions& options) {
  if (options.alpha < 0.0) throw ContractError("total loss: alpha must be non-negative");
  return (options.use_fn ? l_fn : 0.0) + (options.use_nf ? l_nf : 0.0) + options.alpha * l_agree;
}

BatchSimilarity batch_similarity(const ProjectionTape& tape, std::span<const PairItems> batch) {
  const std::size_t b = batch.size();
  if (b == 0) throw ContractError("batch_similarity: empty batch");
  BatchSimilarity sim;
  sim.d_fn = Matrix(b, b);
  sim.d_nf = Matrix(b, b);
  sim.fn_cells.resize(b * b);
  sim.nf_cells.resize(b * b);
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = 0; l < b; ++l) {
      auto& fn = sim.fn_cells[k * b + l];
      fn = set_similarity(tape, batch[k].faces, batch[l].names);
      sim.d_fn(k, l) = fn.value;
      auto& nf = sim.nf_cells[l * b + k];
      nf = set_similarity(tape, batch[l].names, batch[k].faces);
      sim.d_nf(l, k) = nf.value;
    }
  }
  return sim;
}

LossBreakdown total_loss(const BatchSimilarity& sim, const LossOptions& options, SimilarityGrad* grad) {
  if (!options.use_fn && !options.use_nf) throw ContractError("total_loss: both directions disabled");
  LossBreakdown out;
  Matrix g_fn, g_nf, g_agree_nf, g_agree_fn;
  if (options.use_fn) out.l_fn = contrastive_fn(sim.d_fn, grad ? &g_fn : nullptr);
  if (options.use_nf) out.l_nf = contrastive_nf(sim.d_nf, grad ? &g_nf : nullptr);
  out.l_agree = agreement_loss(sim.d_nf, sim.d_fn, grad ? &g_agree_nf : nullptr, grad ? &g_agree_fn : nullptr);
  out.total = combine_total(out.l_fn, out.l_nf, out.l_agree, options);
  if (!std::isfinite(out.total)) throw NumericError("total_loss: non-finite loss");
  if (grad) {
    const std::size_t b = sim.d_fn.rows();
    grad->d_fn = Matrix(b, b);
    grad->d_nf = Matrix(b, b);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t c = 0; c < b; ++c) {
        grad->d_fn(r, c) = (options.use_fn ? g_fn(r, c) : 0.0) + options.alpha * g_agree_fn(r, c);
        grad->d_nf(r, c) = (options.use_nf ? g_nf(r, c) : 0.0) + options.alpha * g_agree_nf(r, c);
      }
    }
  }
  return out;
}

void backpropagate(ProjectionTape& tape, std::span<const PairItems> batch, const BatchSimilarity& sim,
                   const SimilarityGrad& grad) {
  const std::size_t b = batch.size();
  if (sim.d_fn.rows() != b || grad.d_fn.rows() != b || grad.d_nf.rows() != b) {
    throw ContractError("backpropagate: similarity record does not match the batch");
  }
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = 0; l < b; ++l) {
      set_similarity_backward(tape, batch[k].faces, batch[l].names, sim.fn_cells[k * b + l], grad.d_fn(k, l));
      set_similarity_backward(tape, batch[l].names, batch[k].faces, sim.nf_cells[l * b + k], grad.d_nf(l, k));
    }
  }
}

Stage2Scores Stage2Scores::zeros(std::size_t k) {
  return Stage2Scores{Vector(k, 0.0), Vector(k, 0.0), Matrix(k, k), Matrix(k, k), Matrix(k, k), Matrix(k, k)};
}

double stage2_fnp(const Stage2Scores& s, Stage2Scores* grad) {
  check_stage2_shapes(s);
  if (grad && grad->samples() != s.samples()) *grad = Stage2Scores::zeros(s.samples());
  const double fn = prototype_contrast(s.fn_pos, s.proto_name, false, grad ? &grad->fn_pos : nullptr,
                                       grad ? &grad->proto_name : nullptr);
  const double nf = prototype_contrast(s.nf_pos, s.name_proto, true, grad ? &grad->nf_pos : nullptr,
                                       grad ? &grad->name_proto : nullptr);
  return fn + nf;
}

double stage2_fp(const Stage2Scores& s, Stage2Scores* grad) {
  check_stage2_shapes(s);
  if (grad && grad->samples() != s.samples()) *grad = Stage2Scores::zeros(s.samples());
  const double fp = prototype_softmax(s.face_proto, true, grad ? &grad->face_proto : nullptr);
  const double pf = prototype_softmax(s.proto_face, false, grad ? &grad->proto_face : nullptr);
  return fp + pf;
}

LossBreakdown stage2_total(const Stage2Scores& s, const Stage2Options& options, Stage2Scores* grad) {
  check_stage2_shapes(s);
  if (grad) *grad = Stage2Scores::zeros(s.samples());
  LossBreakdown out;
  if (options.use_fnp) out.l_fnp_b = stage2_fnp(s, grad);
  if (options.use_fp) out.l_fp_b = stage2_fp(s, grad);
  out.l_stage2 = out.l_fnp_b + out.l_fp_b;
  if (!std::isfinite(out.l_stage2)) throw NumericError("stage2_total: non-finite loss");
  return out;
}

Stage2Similarity stage2_similarity(const ProjectionTape& tape, std::span<const MatchedItems> samples) {
  const std::size_t k = samples.size();
  if (k == 0) throw ContractError("stage2_similarity: no matched samples");
  Stage2Similarity sim;
  sim.scores = Stage2Scores::zeros(k);
  sim.fn_pos.resize(k);
  sim.nf_pos.resize(k);
  sim.proto_name.resize(k * k);
  sim.name_proto.resize(k * k);
  sim.face_proto.resize(k * k);
  sim.proto_face.resize(k * k);
  auto& s = sim.scores;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& mi = samples[i];
    if (mi.faces.empty() || mi.names.empty() || mi.prototypes.empty()) {
      throw ContractError("stage2_similarity: empty matched set in sample " + std::to_string(i));
    }
    sim.fn_pos[i] = set_similarity(tape, mi.faces, mi.names);
    s.fn_pos[i] = sim.fn_pos[i].value;
    sim.nf_pos[i] = set_similarity(tape, mi.names, mi.faces);
    s.nf_pos[i] = sim.nf_pos[i].value;
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto& mi = samples[i];
      const auto& pj = samples[j].prototypes;
      auto& pn = sim.proto_name[j * k + i];
      pn = set_similarity(tape, pj, mi.names);
      s.proto_name(j, i) = pn.value;
      auto& np = sim.name_proto[i * k + j];
      np = set_similarity(tape, mi.names, pj);
      s.name_proto(i, j) = np.value;
      auto& fp = sim.face_proto[i * k + j];
      fp = set_similarity(tape, mi.faces, pj);
      s.face_proto(i, j) = fp.value;
      auto& pf = sim.proto_face[j * k + i];
      pf = set_similarity(tape, pj, mi.faces);
      s.proto_face(j, i) = pf.value;
    }
  }
  return sim;
}

void backpropagate(ProjectionTape& tape, std::span<const MatchedItems> samples, const Stage2Similarity& sim,
                   const Stage2Scores& grad) {
  const std::size_t k = samples.size();
  if (sim.fn_pos.size() != k || grad.samples() != k) {
    throw ContractError("backpropagate: stage2 record does not match the samples");
  }
  for (std::size_t i = 0; i < k; ++i) {
    const auto& mi = samples[i];
    set_similarity_backward(tape, mi.faces, mi.names, sim.fn_pos[i], grad.fn_pos[i]);
    set_similarity_backward(tape, mi.names, mi.faces, sim.nf_pos[i], grad.nf_pos[i]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto& mi = samples[i];
      const auto& pj = samples[j].prototypes;
      set_similarity_backward(tape, pj, mi.names, sim.proto_name[j * k + i], grad.proto_name(j, i));
      set_similarity_backward(tape, mi.names, pj, sim.name_proto[i * k + j], grad.name_proto(i, j));
      set_similarity_backward(tape, mi.faces, pj, sim.face_proto[i * k + j], grad.face_proto(i, j));
      set_similarity_backward(tape, pj, mi.faces, sim.proto_face[j * k + i], grad.proto_face(j, i));
    }
  }
}

}  // namespace secla
