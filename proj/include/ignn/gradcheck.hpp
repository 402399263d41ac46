#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ignn/param_store.hpp"
#include "ignn/tensor.hpp"

namespace ignn::check {

// Pass bar for the whole suite and the central-difference step size.
inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradStep = 1e-5;

// |a - n| / max(|a|, |n|, 1e-2): absolute near zero, relative elsewhere.
double relative_gradient_error(double analytic, double numeric);

// Worst relative error over every coordinate of every parameter in `params`.
// `loss_fn` must build a scalar from the current parameter values; it runs
// once on a recording tape for the analytic gradients and twice per
// coordinate (recording off) for the central differences.
double max_param_gradcheck(const std::function<num::Tensor(num::Tape&)>& loss_fn,
                           num::ParameterStore& params, double h = kGradStep);

struct GradCaseResult {
  std::string name;
  double max_error = 0.0;  // worst coordinate over all seeds
  int64_t coords = 0;      // parameter coordinates checked per seed
  bool pass = false;
};

struct GradSuiteResult {
  std::vector<GradCaseResult> cases;
  bool pass = false;
};

// One case per differentiable building block, each driven with `num_seeds`
// random instantiations starting at base_seed.
GradSuiteResult run_gradient_suite(uint64_t base_seed, int num_seeds);

}  // namespace ignn::check
