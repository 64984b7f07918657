#pragma once

// The full finite-difference gradient suite: every registered op, every
// layer, the warp, one flow-decoder level, the losses and miniature
// networks, each over several seeds. Checks run in double precision.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace blurvid {

struct GradcheckCase {
  std::string name;
  double tolerance = 1e-3;
  // Central-difference step. Single ops use 1e-3; composed layers and
  // networks use 1e-5, where the O(eps^2) truncation error would otherwise
  // dominate the relative error of near-zero gradients.
  double epsilon = 1e-3;
  // Returns the max relative error for one seed.
  std::function<double(std::uint64_t seed, double epsilon)> run;
};

const std::vector<GradcheckCase>& gradcheck_cases();

struct GradcheckRow {
  std::string name;
  int seeds = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  double epsilon = 0.0;
  bool passed = false;
};

// Runs the cases whose name contains `filter` (all when empty) over seeds
// 1..seeds. Rows are printed to `table` as they complete.
std::vector<GradcheckRow> run_gradcheck_suite(int seeds = 5, const std::string& filter = "",
                                              std::ostream* table = nullptr);

}  // namespace blurvid
