#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "relsim/heads.hpp"

namespace relsim {

// Thrown when a correlation is undefined (constant input).
class UndefinedCorrelation : public std::domain_error {
 public:
  UndefinedCorrelation() : std::domain_error("undefined correlation: constant input") {}
};

// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> predictions, std::span<const double> gold);
// Percentage of positions where the classes agree.
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
// P(T <= t) for Student's t with `df` degrees of freedom (df may be
// fractional, as with Welch-Satterthwaite).
double student_t_cdf(double t, double df);

enum class TTestKind { welch, pooled, paired };

std::string to_string(TTestKind k);
TTestKind parse_ttest_kind(const std::string& name);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // one-sided, H1: mean(treatment) > mean(baseline)
  bool significant = false;
};

// One-sided two-sample test of H1: mean(treatment) > mean(baseline).
TTestResult one_sided_t_test(std::span<const double> treatment, std::span<const double> baseline, double alpha = 0.05,
                             TTestKind kind = TTestKind::welch);

// ---------------------------------------------------------------------------
// Multi-seed comparison

inline constexpr const char* kRegimeSingle = "single";
inline constexpr const char* kRegimeMultitask = "multitask";
inline constexpr const char* kRegimeMultilabel = "multilabel";

// Short names used in the comparison table (MLL, Single, MTL).
std::string regime_display_name(const std::string& regime);

struct RunResult {
  std::string regime;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;  // relation -> metric value
};

enum class Annotation { none, up, down };

struct ComparisonCell {
  double mean = 0.0;
  std::vector<double> samples;
  Annotation annotation = Annotation::none;
  double p_value = 1.0;
};

// How baseline cells are marked.
//   caption: up when MLL is significantly better, down otherwise.
//   three_way: up when MLL is significantly better, down when the baseline
//     is significantly better, unmarked otherwise.
enum class AnnotationPolicy { caption, three_way };

struct ComparisonOptions {
  double alpha = 0.05;
  TTestKind test = TTestKind::welch;
  AnnotationPolicy policy = AnnotationPolicy::caption;
};

struct ComparisonTable {
  std::vector<RelationSpec> relations;
  std::vector<std::string> regimes;  // row order: multilabel first
  std::map<std::string, std::map<std::string, ComparisonCell>> cells;  // regime -> relation -> cell

  const ComparisonCell& cell(const std::string& regime, const std::string& relation) const;
};

ComparisonTable compare_regimes(std::span<const RunResult> results, std::span<const RelationSpec> relations,
                                const ComparisonOptions& options = {});

// ".720", "-.120", "1.000" for correlations; "86.7" for accuracy.
std::string format_metric(double value, Metric metric);
std::string format_cell(const ComparisonCell& cell, Metric metric);

// Markdown table in the layout of the published comparison tables.
std::string render_table(const ComparisonTable& table);

// CSV with columns regime, seed, relation, metric_name, value. Values are
// written as shortest round-trip decimals.
void write_results_csv(std::ostream& out, std::span<const RunResult> results, std::span<const RelationSpec> relations);

// Metric of a relation's predictions. Correlations that are undefined
// because the predictions are constant count as 0.
double relation_metric(const RelationSpec& spec, std::span<const double> predicted_scores,
                       std::span<const double> gold_scores);

}  // namespace relsim
