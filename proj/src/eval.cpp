#include "secla/eval.hpp"

#include <map>

#include "secla/errors.hpp"

namespace secla {

namespace {

std::map<std::string, const LinkSet*> index_by_id(std::span<const LinkSet> sets, const char* what) {
  std::map<std::string, const LinkSet*> idx;
  for (const auto& s : sets) {
    if (!idx.emplace(s.pair_id, &s).second) {
      throw ContractError(std::string(what) + ": duplicate pair_id '" + s.pair_id + "'");
    }
  }
  return idx;
}

}  // namespace

EvalCounts score_links(std::span<const LinkSet> pred, std::span<const LinkSet> gt, bool include_null) {
  const auto gt_idx = index_by_id(gt, "ground truth");
  index_by_id(pred, "predictions");
  EvalCounts c;
  for (const auto& g : gt) {
    for (const auto& l : g.links) {
      if (include_null || !l.is_null()) ++c.gt;
    }
  }
  for (const auto& p : pred) {
    const auto it = gt_idx.find(p.pair_id);
    if (it == gt_idx.end()) throw ContractError("score_links: no ground truth for pair '" + p.pair_id + "'");
    const auto& truth = it->second->links;
    std::vector<bool> used(truth.size(), false);
    for (const auto& l : p.links) {
      if (!include_null && l.is_null()) continue;
      ++c.found;
      for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!used[t] && truth[t].same_target(l)) {
          used[t] = true;
          ++c.correct;
          break;
        }
      }
    }
  }
  return c;
}

PrecisionRecallF1 precision_recall_f1(double precision, double recall) {
  PrecisionRecallF1 r{precision, recall, 0.0};
  if (precision + recall > 0.0) r.f1 = 2.0 * precision * recall / (precision + recall);
  return r;
}

PrecisionRecallF1 precision_recall_f1(const EvalCounts& counts) {
  const double p = counts.found ? static_cast<double>(counts.correct) / static_cast<double>(counts.found) : 0.0;
  const double r = counts.gt ? static_cast<double>(counts.correct) / static_cast<double>(counts.gt) : 0.0;
  return precision_recall_f1(p, r);
}

double accuracy(std::span<const LinkSet> pred, std::span<const LinkSet> gt) {
  const auto pred_idx = index_by_id(pred, "predictions");
  const auto gt_idx = index_by_id(gt, "ground truth");
  for (const auto& p : pred) {
    if (!gt_idx.count(p.pair_id)) throw ContractError("accuracy: no ground truth for pair '" + p.pair_id + "'");
  }
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const auto& g : gt) {
    const auto it = pred_idx.find(g.pair_id);
    for (const auto& l : g.links) {
      if (!l.has_face()) continue;
      ++total;
      if (it == pred_idx.end()) continue;
      for (const auto& pl : it->second->links) {
        if (pl.has_face() && pl.face == l.face) {
          if (pl.same_target(l)) ++hits;
          break;
        }
      }
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

MetricsReport evaluate(std::span<const LinkSet> pred, std::span<const LinkSet> gt, bool include_null) {
  MetricsReport r;
  r.include_null = include_null;
  r.counts = score_links(pred, gt, include_null);
  r.prf = precision_recall_f1(r.counts);
  r.accuracy = accuracy(pred, gt);
  if (r.counts.found == 0) r.warnings.push_back("no predicted links: precision reported as 0");
  if (r.counts.gt == 0) r.warnings.push_back("no ground-truth links: recall reported as 0");
  return r;
}

}  // namespace secla
