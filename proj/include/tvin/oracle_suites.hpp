#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tvin::suites {

struct SuiteReport {
  bool pass = true;
  double worst = 0.0;         // worst relative error / max-abs deviation seen
  std::string worst_case;
  std::vector<std::string> lines;
};

/// Finite-difference checks for every tape op (tol 1e-4) and the composed
/// VIN/TVIN graphs (tol 1e-3), central differences against double-precision
/// reference evaluation, `seeds` randomized instances each.
SuiteReport run_gradient_suites(int seeds, std::ostream& log);

/// vi_forward with true-transition kernels vs exact tabular value iteration
/// (gamma 0.99) on random maps up to 7x7, across all three domains.
/// Tolerance 1e-5 max-abs.
SuiteReport run_vi_equivalence(int seeds, std::ostream& log);

}  // namespace tvin::suites
