#include "relsim/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "relsim/error.hpp"

namespace relsim {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  if (a.size() < 2) throw ShapeError(std::string(what) + ": need at least 2 points");
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased sample variance.
double variance_of(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Lentz's method for the continued fraction of I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_pair(a, b, "pearson");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelation();
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> predictions, std::span<const double> gold) {
  require_pair(predictions, gold, "spearman");
  const auto rp = average_ranks(predictions);
  const auto rg = average_ranks(gold);
  return pearson(rp, rg);
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold) {
  if (predicted.size() != gold.size()) throw ShapeError("accuracy: length mismatch");
  if (predicted.empty()) throw ShapeError("accuracy: need at least 1 prediction");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gold.size());
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::domain_error("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a + 1) / (a + b + 2).
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::domain_error("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);  // P(T > |t|)
  return t >= 0.0 ? 1.0 - tail : tail;
}

std::string to_string(TTestKind k) {
  switch (k) {
    case TTestKind::welch: return "welch";
    case TTestKind::pooled: return "pooled";
    case TTestKind::paired: return "paired";
  }
  return "unknown";
}

TTestKind parse_ttest_kind(const std::string& name) {
  if (name == "welch") return TTestKind::welch;
  if (name == "pooled") return TTestKind::pooled;
  if (name == "paired") return TTestKind::paired;
  throw ConfigError("unknown t-test kind '" + name + "' (expected welch, pooled or paired)");
}

TTestResult one_sided_t_test(std::span<const double> treatment, std::span<const double> baseline, double alpha,
                             TTestKind kind) {
  if (treatment.size() < 2 || baseline.size() < 2) throw ShapeError("t-test: each sample needs at least 2 values");
  const double n1 = static_cast<double>(treatment.size());
  const double n2 = static_cast<double>(baseline.size());
  double diff = 0.0, se = 0.0, df = 0.0;

  switch (kind) {
    case TTestKind::welch: {
      const double m1 = mean_of(treatment), m2 = mean_of(baseline);
      const double a = variance_of(treatment, m1) / n1;
      const double b = variance_of(baseline, m2) / n2;
      diff = m1 - m2;
      se = std::sqrt(a + b);
      const double denom = a * a / (n1 - 1.0) + b * b / (n2 - 1.0);
      df = denom > 0.0 ? (a + b) * (a + b) / denom : n1 + n2 - 2.0;
      break;
    }
    case TTestKind::pooled: {
      const double m1 = mean_of(treatment), m2 = mean_of(baseline);
      const double sp2 =
          ((n1 - 1.0) * variance_of(treatment, m1) + (n2 - 1.0) * variance_of(baseline, m2)) / (n1 + n2 - 2.0);
      diff = m1 - m2;
      se = std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
      df = n1 + n2 - 2.0;
      break;
    }
    case TTestKind::paired: {
      if (treatment.size() != baseline.size()) throw ShapeError("paired t-test: samples differ in length");
      std::vector<double> d(treatment.size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = treatment[i] - baseline[i];
      const double md = mean_of(d);
      diff = md;
      se = std::sqrt(variance_of(d, md) / n1);
      df = n1 - 1.0;
      break;
    }
  }

  TTestResult r;
  r.df = df;
  if (se == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.p = diff > 0.0 ? 0.0 : (diff < 0.0 ? 1.0 : 0.5);
  } else {
    r.t = diff / se;
    // Upper tail computed directly; 1 - cdf would cancel for large t.
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + r.t * r.t));
    r.p = r.t > 0.0 ? tail : 1.0 - tail;
  }
  r.significant = r.p < alpha && r.t > 0.0;
  return r;
}

std::string regime_display_name(const std::string& regime) {
  if (regime == kRegimeMultilabel) return "MLL";
  if (regime == kRegimeSingle) return "Single";
  if (regime == kRegimeMultitask) return "MTL";
  return regime;
}

const ComparisonCell& ComparisonTable::cell(const std::string& regime, const std::string& relation) const {
  auto it = cells.find(regime);
  if (it == cells.end()) throw ConfigError("comparison table has no regime " + regime);
  auto jt = it->second.find(relation);
  if (jt == it->second.end()) throw ConfigError("comparison table has no relation " + relation);
  return jt->second;
}

ComparisonTable compare_regimes(std::span<const RunResult> results, std::span<const RelationSpec> relations,
                                const ComparisonOptions& options) {
  ComparisonTable table;
  table.relations.assign(relations.begin(), relations.end());

  std::map<std::string, std::vector<const RunResult*>> by_regime;
  for (const auto& r : results) {
    if (r.metrics.size() != relations.size()) {
      throw ConfigError("run " + r.regime + "/" + std::to_string(r.seed) + " reports " +
                        std::to_string(r.metrics.size()) + " relations, expected " + std::to_string(relations.size()));
    }
    for (const auto& spec : relations) {
      if (!r.metrics.count(spec.name)) {
        throw ConfigError("run " + r.regime + "/" + std::to_string(r.seed) + " has no result for relation " + spec.name);
      }
    }
    by_regime[r.regime].push_back(&r);
  }
  std::size_t run_count = 0;
  for (const auto& [regime, runs] : by_regime) {
    if (run_count == 0) run_count = runs.size();
    if (runs.size() != run_count) throw ConfigError("regimes have different run counts");
  }

  for (const char* name : {kRegimeMultilabel, kRegimeSingle, kRegimeMultitask}) {
    if (by_regime.count(name)) table.regimes.emplace_back(name);
  }
  for (const auto& [regime, runs] : by_regime) {
    if (std::find(table.regimes.begin(), table.regimes.end(), regime) == table.regimes.end()) {
      table.regimes.push_back(regime);
    }
  }

  for (const auto& regime : table.regimes) {
    auto runs = by_regime[regime];
    // Seed order makes paired tests line up and the samples canonical.
    std::stable_sort(runs.begin(), runs.end(), [](const RunResult* a, const RunResult* b) { return a->seed < b->seed; });
    for (const auto& spec : relations) {
      ComparisonCell c;
      for (const RunResult* r : runs) c.samples.push_back(r->metrics.at(spec.name));
      c.mean = mean_of(c.samples);
      table.cells[regime][spec.name] = std::move(c);
    }
  }

  if (!by_regime.count(kRegimeMultilabel) || run_count < 2) return table;
  for (const auto& regime : table.regimes) {
    if (regime == kRegimeMultilabel) continue;
    for (const auto& spec : relations) {
      ComparisonCell& c = table.cells[regime][spec.name];
      const auto& mll = table.cells[kRegimeMultilabel][spec.name].samples;
      const TTestResult better = one_sided_t_test(mll, c.samples, options.alpha, options.test);
      c.p_value = better.p;
      if (better.significant) {
        c.annotation = Annotation::up;
      } else if (options.policy == AnnotationPolicy::caption) {
        c.annotation = Annotation::down;
      } else {
        const TTestResult worse = one_sided_t_test(c.samples, mll, options.alpha, options.test);
        c.annotation = worse.significant ? Annotation::down : Annotation::none;
      }
    }
  }
  return table;
}

std::string format_metric(double value, Metric metric) {
  char buf[32];
  if (metric == Metric::accuracy) {
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  std::string s = buf;
  // Correlations drop the leading zero: 0.720 -> .720, -0.120 -> -.120.
  if (s.rfind("0.", 0) == 0) return s.substr(1);
  if (s.rfind("-0.", 0) == 0) return s == "-0.000" ? ".000" : "-" + s.substr(2);
  return s;
}

std::string format_cell(const ComparisonCell& cell, Metric metric) {
  std::string s = format_metric(cell.mean, metric);
  if (cell.annotation == Annotation::up) s += "↑";
  if (cell.annotation == Annotation::down) s += "↓";
  return s;
}

std::string render_table(const ComparisonTable& table) {
  std::ostringstream out;
  out << "| ";
  for (const auto& spec : table.relations) out << "| " << spec.name << " ";
  out << "|\n|---";
  for (std::size_t i = 0; i < table.relations.size(); ++i) out << "|---";
  out << "|\n";
  for (const auto& regime : table.regimes) {
    out << "| " << regime_display_name(regime) << " ";
    for (const auto& spec : table.relations) out << "| " << format_cell(table.cell(regime, spec.name), spec.metric) << " ";
    out << "|\n";
  }
  return out.str();
}

void write_results_csv(std::ostream& out, std::span<const RunResult> results, std::span<const RelationSpec> relations) {
  out << "regime,seed,relation,metric_name,value\n";
  for (const auto& r : results) {
    for (const auto& spec : relations) {
      auto it = r.metrics.find(spec.name);
      if (it == r.metrics.end()) continue;
      out << r.regime << ',' << r.seed << ',' << spec.name << ',' << to_string(spec.metric) << ','
          << shortest(it->second) << '\n';
    }
  }
}

double relation_metric(const RelationSpec& spec, std::span<const double> predicted_scores,
                       std::span<const double> gold_scores) {
  switch (spec.metric) {
    case Metric::accuracy: {
      std::vector<std::size_t> p, g;
      for (double v : predicted_scores) p.push_back(static_cast<std::size_t>(v));
      for (double v : gold_scores) g.push_back(static_cast<std::size_t>(v));
      return accuracy(p, g);
    }
    case Metric::spearman:
    case Metric::pearson:
      try {
        return spec.metric == Metric::spearman ? spearman(predicted_scores, gold_scores)
                                               : pearson(predicted_scores, gold_scores);
      } catch (const UndefinedCorrelation&) {
        return 0.0;
      }
  }
  return 0.0;
}

}  // namespace relsim
