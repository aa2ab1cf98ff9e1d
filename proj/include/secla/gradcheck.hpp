#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace secla {

// Finite-difference verification of the training objectives on small random
// instances (faces 8-d, names 6-d, projections 4-d, up to 4 pairs of up to 3
// faces and 3 names).
struct GradcheckSuiteOptions {
  std::size_t instances = 24;  // per objective family
  double tolerance = 1e-4;
  double h = 1e-5;
  std::uint64_t seed = 0;
  // Corrupts the analytic gradient before comparison; used to show that the
  // harness catches a wrong backward pass.
  bool inject_bug = false;
};

struct GradcheckCase {
  std::string objective;
  std::size_t instance = 0;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_relative_error = 0.0;
  bool passed = false;
};

GradcheckReport run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

}  // namespace secla
