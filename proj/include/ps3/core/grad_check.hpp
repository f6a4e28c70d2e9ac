#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ps3/core/tape.hpp"

namespace ps3 {

// Scalar function of the bound parameter leaves.
using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Coordinates checked per parameter tensor; 0 checks every coordinate.
  // Sampled coordinates are drawn with a fixed seed.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  // Optional labels for the report.
  std::vector<std::string> names;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool finite = true;
  std::string worst;  // "<param>[<index>] analytic=<a> numeric=<n>"
};

// Central differences (f(x+e) - f(x-e)) / 2e against tape gradients. The
// relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
// Non-finite function values or gradients make the check fail
// (finite = false, max_rel_error = +inf).
GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor<double>>& params,
                           const GradCheckOptions& options = {});

}  // namespace ps3
