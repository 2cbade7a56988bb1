#pragma once

// Built-in verification battery behind `relsim check`.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace relsim {

struct CheckOptions {
  std::size_t points = 20;          // random points per gradient check
  std::size_t mc_draws = 200'000;   // Monte Carlo draws per t-test fixture
  std::uint64_t seed = 20240607;
};

struct CheckOutcome {
  bool passed = false;
  std::string detail;
};

struct Check {
  std::string name;
  std::function<CheckOutcome(const CheckOptions&)> run;
};

// Every check, each name once, in report order.
const std::vector<Check>& check_registry();

struct CheckReport {
  std::string name;
  CheckOutcome outcome;
  double seconds = 0.0;
};

// Runs the checks whose names start with `prefix` (all when empty).
std::vector<CheckReport> run_checks(const CheckOptions& options = {}, const std::string& prefix = {});

// Two samples with a known one-sided Welch comparison.
struct TTestFixture {
  std::string name;
  std::vector<double> treatment;
  std::vector<double> baseline;
};

const std::vector<TTestFixture>& ttest_fixtures();

// P(T >= t_observed) under normal populations with equal means and the
// samples' standard deviations, estimated from `draws` simulated pairs of
// samples of the same sizes.
double monte_carlo_welch_p(std::span<const double> treatment, std::span<const double> baseline, std::size_t draws,
                           std::uint64_t seed);

}  // namespace relsim
