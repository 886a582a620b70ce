#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stackvs {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr double kGradCheckEps = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;

/// Randomised finite-difference checks of every tape op, one outcome per op.
std::vector<CheckOutcome> op_gradient_suite(std::uint64_t seed, int trials = 20);

/// Finite-difference check of one decoder cell step over all of its
/// parameters, on random tiny shapes.
CheckOutcome cell_gradient_check(std::uint64_t seed, int trials = 20);

/// Hand-computed metric values and the degenerate-corpus cases.
std::vector<CheckOutcome> metric_oracle_suite();

/// Everything above.
std::vector<CheckOutcome> run_selfcheck(std::uint64_t seed);

}  // namespace stackvs
