#pragma once

// Central finite-difference gradient checking. Only forward evaluation is
// used to form the numeric gradient, so it is independent of the backward
// rules it checks.

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "relsim/autodiff.hpp"

namespace relsim {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  // Elements where both gradients are this close pass regardless of the
  // relative error.
  double abs_tol = 1e-6;
};

struct GradCheckResult {
  bool passed = true;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;  // "param[index]: analytic vs numeric" for the worst element
};

// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<ad::Tensor(ad::Tape&)>;

GradCheckResult check_gradients(const LossBuilder& loss, std::span<ad::Parameter* const> params,
                                const GradCheckOptions& options = {});

// Numeric gradient of one parameter by central differences.
std::vector<double> numeric_gradient(const LossBuilder& loss, ad::Parameter& param, double step = 1e-5);

}  // namespace relsim
