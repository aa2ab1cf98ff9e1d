#pragma once

#include <span>
#include <string>
#include <vector>

#include "secla/dataset.hpp"

namespace secla {

struct EvalCounts {
  std::size_t correct = 0;
  std::size_t found = 0;
  std::size_t gt = 0;
};

// A predicted link is correct when the ground truth of the same pair holds a
// link with the same face and name reference.  With include_null = false,
// NONAME/NOFACE links are ignored on both sides.  Pairs present only in the
// ground truth still contribute to gt.
EvalCounts score_links(std::span<const LinkSet> pred, std::span<const LinkSet> gt, bool include_null = true);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero denominators yield 0.
PrecisionRecallF1 precision_recall_f1(const EvalCounts& counts);
PrecisionRecallF1 precision_recall_f1(double precision, double recall);

// Fraction of ground-truth face links (normal and NONAME) whose face received
// the same name reference in the prediction.
double accuracy(std::span<const LinkSet> pred, std::span<const LinkSet> gt);

struct MetricsReport {
  PrecisionRecallF1 prf;
  double accuracy = 0.0;
  EvalCounts counts;
  bool include_null = true;
  std::vector<std::string> warnings;
};

MetricsReport evaluate(std::span<const LinkSet> pred, std::span<const LinkSet> gt, bool include_null = true);

}  // namespace secla
