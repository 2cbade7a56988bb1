#include "relsim/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace relsim {

namespace {

constexpr double kReportFloor = 1e-6;

double evaluate(const LossBuilder& loss) {
  ad::Tape tape;
  return loss(tape).item();
}

}  // namespace

std::vector<double> numeric_gradient(const LossBuilder& loss, ad::Parameter& param, double step) {
  std::vector<double> g(param.value.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = param.value[i];
    param.value[i] = saved + step;
    const double up = evaluate(loss);
    param.value[i] = saved - step;
    const double down = evaluate(loss);
    param.value[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

GradCheckResult check_gradients(const LossBuilder& loss, std::span<ad::Parameter* const> params,
                                const GradCheckOptions& options) {
  ad::Gradients analytic;
  {
    ad::Tape tape;
    analytic = tape.backward(loss(tape));
  }
  GradCheckResult r;
  double worst_score = -1.0;
  for (ad::Parameter* p : params) {
    const auto numeric = numeric_gradient(loss, *p, options.step);
    const auto got = analytic.get(p->id);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = got.empty() ? 0.0 : got[i];
      const double n = numeric[i];
      const double abs_err = std::fabs(a - n);
      const double scale = std::max(std::fabs(a), std::fabs(n));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      const bool ok = abs_err <= options.abs_tol || rel_err <= options.rel_tol;
      ++r.checked;
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      // Relative error is only reported where the gradient is not negligible.
      if (scale >= kReportFloor) r.max_rel_error = std::max(r.max_rel_error, rel_err);
      const double score = ok ? rel_err * 0.5 : 1.0 + rel_err;
      if (score > worst_score) {
        worst_score = score;
        std::ostringstream s;
        s << p->name << "[" << i << "]: analytic " << a << " vs numeric " << n;
        r.worst = s.str();
      }
      if (!ok) r.passed = false;
    }
  }
  return r;
}

}  // namespace relsim
