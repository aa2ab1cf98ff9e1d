#include "secla/gradcheck.hpp"

#include <algorithm>
#include <utility>

#include "secla/errors.hpp"
#include "secla/numerics.hpp"
#include "secla/rng.hpp"
#include "secla/training.hpp"

namespace secla {

namespace {

constexpr std::size_t kFaceDim = 8;
constexpr std::size_t kNameDim = 6;
constexpr std::size_t kProjDim = 4;

Vector random_vector(std::size_t dim, Rng& rng) {
  Vector v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

// Scatter the flat vector back into the stack's parameter blocks.
void load_flat(ProjectorStack& stack, std::span<const double> flat) {
  std::size_t at = 0;
  for (auto block : stack.parameters()) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + block.size()), block.begin());
    at += block.size();
  }
}

Vector flatten(const ProjectorStack& stack) {
  Vector flat;
  for (const auto block : stack.parameters()) flat.insert(flat.end(), block.begin(), block.end());
  return flat;
}

struct Instance {
  ProjectorStack stack;
  BatchInput batch;
  BatchLossOptions options;
  Vector noname;
  std::string label;
};

Instance make_instance(bool stage2, std::size_t index, std::uint64_t seed) {
  Rng rng(derive_seed(seed, stage2 ? "gradcheck-stage2" : "gradcheck-stage1", index));
  Instance inst;
  ModelDims dims{kFaceDim, kNameDim, kProjDim, {7, 5}, index % 3 != 2};
  inst.stack = ProjectorStack::init(dims, rng.next_u64());
  inst.noname = random_vector(kNameDim, rng);
  inst.options.add_noname = index % 2 == 0;

  const std::size_t pairs = 1 + rng.index(4);
  for (std::size_t p = 0; p < pairs; ++p) {
    WeakPair wp;
    wp.pair_id = "p" + std::to_string(p);
    const std::size_t n = 1 + rng.index(3);
    const std::size_t m = 1 + rng.index(3);
    for (std::size_t i = 0; i < n; ++i) wp.faces.push_back(random_vector(kFaceDim, rng));
    for (std::size_t j = 0; j < m; ++j) {
      wp.names.push_back(NameRecord{"n" + std::to_string(j), random_vector(kNameDim, rng), false});
    }
    inst.batch.pairs.push_back(std::move(wp));
  }

  if (!stage2) {
    // Cycle through the weightings the trainers use: full loss, no agreement,
    // each direction on its own.
    switch (index % 4) {
      case 0:
        inst.options.loss = {0.15, true, true};
        inst.label = "total";
        break;
      case 1:
        inst.options.loss = {0.0, true, true};
        inst.label = "total_no_agree";
        break;
      case 2:
        inst.options.loss = {0.7, true, false};
        inst.label = "fn_agree";
        break;
      default:
        inst.options.loss = {0.3, false, true};
        inst.label = "nf_agree";
        break;
    }
    return inst;
  }

  // Prototype objective, sometimes together with a contrastive residual.
  if (index % 3 == 0) inst.batch.pairs.clear();
  const std::size_t samples = 1 + rng.index(4);
  for (std::size_t s = 0; s < samples; ++s) {
    MatchedSample ms;
    const std::size_t n = 1 + rng.index(3);
    const std::size_t m = 1 + rng.index(3);
    for (std::size_t i = 0; i < n; ++i) ms.faces.push_back(random_vector(kFaceDim, rng));
    for (std::size_t j = 0; j < m; ++j) {
      ms.names.push_back(random_vector(kNameDim, rng));
      ms.prototypes.push_back(random_vector(kFaceDim, rng));
    }
    inst.batch.matched.push_back(std::move(ms));
  }
  switch (index % 3) {
    case 0:
      inst.options.stage2 = {true, true};
      inst.label = "stage2";
      break;
    case 1:
      inst.options.stage2 = {true, false};
      inst.label = "stage2_fnp_plus_total";
      break;
    default:
      inst.options.stage2 = {false, true};
      inst.label = "stage2_fp_plus_total";
      break;
  }
  return inst;
}

GradcheckCase check_instance(const Instance& inst, std::size_t index, const GradcheckSuiteOptions& options) {
  auto grads = ProjectorStack::zeros_like(inst.stack);
  batch_loss(inst.stack, inst.batch, inst.noname, inst.options, &grads);
  Vector analytic = flatten(grads);
  if (options.inject_bug) {
    // Flip the sign of the last common layer's bias gradient.
    const double* bias = grads.common.layers.back().bias.data();
    std::size_t at = 0;
    for (const auto block : std::as_const(grads).parameters()) {
      if (block.data() == bias) {
        for (std::size_t k = 0; k < block.size(); ++k) analytic[at + k] *= -1.0;
      }
      at += block.size();
    }
  }

  ProjectorStack scratch = inst.stack;
  const Objective objective = [&](std::span<const double> flat) {
    load_flat(scratch, flat);
    const auto loss = batch_loss(scratch, inst.batch, inst.noname, inst.options);
    return loss.total + loss.l_stage2;
  };
  const PieceSignature signature = [&](std::span<const double> flat) {
    load_flat(scratch, flat);
    std::vector<std::uint32_t> sig;
    batch_loss(scratch, inst.batch, inst.noname, inst.options, nullptr, &sig);
    return sig;
  };
  const Vector x = flatten(inst.stack);
  const auto r = grad_check(objective, x, analytic, GradCheckOptions{options.h, 1e-6}, signature);
  GradcheckCase c;
  c.objective = inst.label;
  c.instance = index;
  c.max_relative_error = r.max_relative_error;
  c.checked = r.checked;
  c.skipped = r.skipped;
  c.passed = r.checked > 0 && r.max_relative_error < options.tolerance;
  return c;
}

}  // namespace

GradcheckReport run_gradcheck_suite(const GradcheckSuiteOptions& options) {
  if (options.instances == 0) throw ContractError("gradcheck: need at least one instance");
  if (!(options.tolerance > 0.0)) throw ContractError("gradcheck: tolerance must be positive");
  GradcheckReport report;
  report.passed = true;
  for (const bool stage2 : {false, true}) {
    for (std::size_t i = 0; i < options.instances; ++i) {
      const auto c = check_instance(make_instance(stage2, i, options.seed), i, options);
      report.max_relative_error = std::max(report.max_relative_error, c.max_relative_error);
      report.passed = report.passed && c.passed;
      report.cases.push_back(c);
    }
  }
  return report;
}

}  // namespace secla
