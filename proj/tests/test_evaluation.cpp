#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "relsim/checks.hpp"
#include "relsim/error.hpp"
#include "relsim/evaluation.hpp"

#ifdef RELSIM_HAVE_BOOST_MATH
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#endif

using namespace relsim;

namespace {

std::vector<double> shifted(std::vector<double> v, double by) {
  for (double& x : v) x += by;
  return v;
}

std::vector<RunResult> campaign(const std::vector<RelationSpec>& specs,
                                const std::map<std::string, std::vector<std::vector<double>>>& samples) {
  // samples: regime -> per-relation sample lists of equal length.
  std::vector<RunResult> out;
  for (const auto& [regime, per_relation] : samples) {
    for (std::size_t s = 0; s < per_relation.front().size(); ++s) {
      RunResult r{regime, s + 1, {}};
      for (std::size_t k = 0; k < specs.size(); ++k) r.metrics[specs[k].name] = per_relation[k][s];
      out.push_back(r);
    }
  }
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("spearman") {
  const std::vector<double> gold{0.3, 1.7, 2.2, 3.9, 4.0, 0.1};
  std::vector<double> mono, rev;
  for (double g : gold) mono.push_back(std::exp(g) * 3 - 1);
  for (double g : gold) rev.push_back(-g * g * g);
  CHECK(spearman(mono, gold) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(rev, gold) == doctest::Approx(-1.0).epsilon(1e-15));

  const std::vector<double> p{1, 2, 2, 4}, g{1, 2, 3, 4};
  CHECK(std::fabs(spearman(p, g) - oracle::spearman(p, g)) <= 1e-12);
  CHECK(average_ranks(p) == std::vector<double>{1, 2.5, 2.5, 4});

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = a[i] + rng.uniform(-0.5, 0.5);
    }
    // Tie-free: closed form.
    double d2 = 0;
    const auto ra = oracle::average_ranks(a), rb = oracle::average_ranks(b);
    for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double dn = static_cast<double>(n);
    CHECK(std::fabs(spearman(a, b) - (1 - 6 * d2 / (dn * (dn * dn - 1)))) <= 1e-12);
    CHECK(spearman(a, b) == spearman(b, a));
    // Heavy ties against the oracle.
    for (double& x : a) x = std::round(x * 3);
    for (double& x : b) x = std::round(x * 3);
    const bool constant = std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; }) ||
                          std::all_of(b.begin(), b.end(), [&](double x) { return x == b[0]; });
    if (constant) {
      CHECK_THROWS_AS(spearman(a, b), UndefinedCorrelation);
    } else {
      CHECK(std::fabs(spearman(a, b) - oracle::spearman(a, b)) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 1, 1}, g), std::exception);
}

TEST_CASE("pearson") {
  const std::vector<double> a{1, 2, 3};
  CHECK(pearson(a, std::vector<double>{1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(pearson(a, std::vector<double>{5, 7, 9}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(a, std::vector<double>{-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(pearson(a, std::vector<double>{2, 2, 2}), UndefinedCorrelation);
  CHECK_THROWS(pearson(a, std::vector<double>{1, 2}));
  CHECK_THROWS(pearson(std::vector<double>{1}, std::vector<double>{1}));

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(12), y(12), z(12);
    for (std::size_t i = 0; i < 12; ++i) {
      x[i] = rng.uniform(-1, 1);
      y[i] = x[i] + rng.uniform(-1, 1);
    }
    const double c = rng.uniform(-3, 3), d = rng.uniform(-5, 5);
    for (std::size_t i = 0; i < 12; ++i) z[i] = c * y[i] + d;
    CHECK(std::fabs(pearson(x, z) - (c > 0 ? 1 : -1) * pearson(x, y)) <= 1e-12);
    CHECK(std::fabs(pearson(x, y) - oracle::pearson(x, y)) <= 1e-12);
  }
}

TEST_CASE("accuracy") {
  const std::vector<std::size_t> g{0, 1, 2};
  CHECK(accuracy(g, g) == 100.0);
  CHECK(accuracy(std::vector<std::size_t>{1, 2, 0}, g) == 0.0);
  CHECK(std::fabs(accuracy(std::vector<std::size_t>{0, 1, 0}, g) - 200.0 / 3) <= 1e-9);
  CHECK_THROWS(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}));
}

TEST_CASE("one-sided Welch test") {
  SUBCASE("small gap is not significant") {
    const auto a = oracle::standardized(30, 0.720, 0.01, 1);
    const auto b = oracle::standardized(30, 0.717, 0.01, 2);
    const TTestResult r = one_sided_t_test(a, b);
    CHECK(std::fabs(r.t - oracle::welch_t(a, b)) <= 1e-12);
    CHECK(r.t == doctest::Approx(1.16).epsilon(0.005));
    CHECK(r.df == doctest::Approx(58.0).epsilon(1e-9));
    CHECK_FALSE(r.significant);
    CHECK(std::fabs(r.p - oracle::permutation_p(a, b, 1'000'000, 17)) <= 0.01);
  }
  SUBCASE("a shift of 10 is significant") {
    const auto b = oracle::standardized(30, 0.5, 0.1, 3);
    const TTestResult r = one_sided_t_test(shifted(b, 10), b);
    CHECK(r.significant);
    CHECK(r.p < 1e-12);
  }
  SUBCASE("identical samples") {
    const auto a = oracle::standardized(30, 0.7, 0.02, 4);
    const TTestResult r = one_sided_t_test(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p == doctest::Approx(0.5));
    CHECK_FALSE(r.significant);
    const std::vector<double> flat{0.5, 0.5, 0.5};
    const TTestResult z = one_sided_t_test(flat, flat);
    CHECK(z.t == 0.0);
    CHECK_FALSE(z.significant);
  }
  SUBCASE("raising the treatment never lowers t") {
    const auto a = oracle::standardized(20, 0.6, 0.05, 5);
    const auto b = oracle::standardized(25, 0.62, 0.03, 6);
    double prev = -INFINITY;
    for (double c = -0.2; c <= 0.2; c += 0.01) {
      const double t = one_sided_t_test(shifted(a, c), b).t;
      CHECK(t >= prev);
      prev = t;
    }
  }
  SUBCASE("p-values agree with a permutation Monte Carlo") {
    for (const auto& f : ttest_fixtures()) {
      const double p = one_sided_t_test(f.treatment, f.baseline).p;
      const double mc = oracle::permutation_p(f.treatment, f.baseline, 1'000'000, 99);
      INFO(f.name << ": p = " << p << ", permutation = " << mc);
      CHECK(std::fabs(p - mc) <= 0.01);
    }
  }
  SUBCASE("pooled and paired variants") {
    const auto a = oracle::standardized(30, 0.720, 0.01, 1);
    const auto b = oracle::standardized(30, 0.717, 0.01, 2);
    // Equal sizes make the pooled statistic equal Welch's.
    CHECK(one_sided_t_test(a, b, 0.05, TTestKind::pooled).t == doctest::Approx(oracle::welch_t(a, b)).epsilon(1e-12));
    std::vector<double> d(30);
    for (std::size_t i = 0; i < 30; ++i) d[i] = a[i] - b[i];
    const double md = std::accumulate(d.begin(), d.end(), 0.0) / 30;
    double ss = 0;
    for (double x : d) ss += (x - md) * (x - md);
    const double tp = md / std::sqrt(ss / 29 / 30);
    const TTestResult pr = one_sided_t_test(a, b, 0.05, TTestKind::paired);
    CHECK(pr.t == doctest::Approx(tp).epsilon(1e-12));
    CHECK(pr.df == 29.0);
    CHECK_THROWS(one_sided_t_test(a, std::vector<double>(b.begin(), b.end() - 1), 0.05, TTestKind::paired));
    CHECK(parse_ttest_kind(to_string(TTestKind::pooled)) == TTestKind::pooled);
  }
  CHECK_THROWS(one_sided_t_test(std::vector<double>{1}, std::vector<double>{1, 2}));
}

#ifdef RELSIM_HAVE_BOOST_MATH
TEST_CASE("distribution functions agree with Boost.Math") {
  for (double df : {1.0, 2.5, 13.83, 29.0, 58.0, 300.0}) {
    const boost::math::students_t dist(df);
    for (double t = -6; t <= 6; t += 0.37) {
      INFO("df " << df << " t " << t);
      CHECK(std::fabs(student_t_cdf(t, df) - boost::math::cdf(dist, t)) <= 1e-10);
    }
  }
  for (double a : {0.5, 1.0, 7.25, 29.0}) {
    for (double b : {0.5, 2.0, 14.0}) {
      for (double x = 0.0; x <= 1.0; x += 0.05) CHECK(std::fabs(incomplete_beta(a, b, x) - boost::math::ibeta(a, b, x)) <= 1e-10);
    }
  }
}
#endif

TEST_CASE("compare_regimes") {
  const std::vector<RelationSpec> specs{RelationSpec::scored("SIM", 0, 4, Metric::spearman),
                                        RelationSpec::scored("REL", 0, 4, Metric::spearman)};
  const auto s1 = oracle::standardized(30, 0.7, 0.02, 10);
  const auto s2 = oracle::standardized(30, 0.6, 0.03, 11);

  SUBCASE("identical regimes: every baseline cell is marked down") {
    const auto t = compare_regimes(campaign(specs, {{"multilabel", {s1, s2}}, {"single", {s1, s2}}, {"multitask", {s1, s2}}}),
                                   specs);
    CHECK(t.regimes == std::vector<std::string>{"multilabel", "single", "multitask"});
    for (const char* rel : {"SIM", "REL"}) {
      CHECK(t.cell("multilabel", rel).annotation == Annotation::none);
      CHECK(t.cell("single", rel).annotation == Annotation::down);
      CHECK(t.cell("multitask", rel).annotation == Annotation::down);
    }
    CHECK(std::fabs(t.cell("single", "SIM").mean - 0.7) <= 1e-12);
  }

  SUBCASE("sample order does not matter") {
    auto r1 = s1;
    std::reverse(r1.begin(), r1.end());
    const auto base = shifted(s1, -0.012);
    auto rb = base;
    std::rotate(rb.begin(), rb.begin() + 7, rb.end());
    const auto a = compare_regimes(campaign(specs, {{"multilabel", {s1, s2}}, {"single", {base, s2}}}), specs);
    const auto b = compare_regimes(campaign(specs, {{"multilabel", {r1, s2}}, {"single", {rb, s2}}}), specs);
    CHECK(render_table(a) == render_table(b));
    CHECK(a.cell("single", "SIM").p_value == doctest::Approx(b.cell("single", "SIM").p_value).epsilon(1e-12));
  }

  SUBCASE("mismatched relation sets") {
    auto results = campaign(specs, {{"multilabel", {s1, s2}}, {"single", {s1, s2}}});
    results.back().metrics.erase("REL");
    results.back().metrics["MA"] = 0.5;
    CHECK_THROWS(compare_regimes(results, specs));
    auto fewer = campaign(specs, {{"multilabel", {s1, s2}}, {"single", {s1, s2}}});
    fewer.pop_back();
    CHECK_THROWS(compare_regimes(fewer, specs));
  }

  SUBCASE("single regime on one relation: one row, no annotations") {
    const std::vector<RelationSpec> one{specs[0]};
    const auto t = compare_regimes(campaign(one, {{"single", {s1}}}), one);
    const auto ls = lines(render_table(t));
    REQUIRE(ls.size() == 3);
    CHECK(ls[2] == "| Single | .700 |");
  }
}

TEST_CASE("tables in the published layout") {
  SUBCASE("activity SIM column with three-way marking") {
    const std::vector<RelationSpec> specs{RelationSpec::scored("SIM", 0, 4, Metric::spearman)};
    const auto t = compare_regimes(campaign(specs, {{"multilabel", {oracle::standardized(30, 0.720, 0.01, 1)}},
                                                    {"single", {oracle::standardized(30, 0.719, 0.01, 2)}},
                                                    {"multitask", {oracle::standardized(30, 0.683, 0.01, 3)}}}),
                                   specs, ComparisonOptions{0.05, TTestKind::welch, AnnotationPolicy::three_way});
    const auto ls = lines(render_table(t));
    REQUIRE(ls.size() == 5);
    CHECK(ls[0] == "| | SIM |");
    CHECK(ls[2] == "| MLL | .720 |");
    CHECK(ls[3] == "| Single | .719 |");
    CHECK(ls[4] == "| MTL | .683↑ |");
  }
  SUBCASE("three-way marks a baseline that beats multi-label") {
    const std::vector<RelationSpec> specs{RelationSpec::scored("general", 0, 5, Metric::pearson)};
    const auto t = compare_regimes(campaign(specs, {{"multilabel", {oracle::standardized(30, 0.744, 0.01, 1)}},
                                                    {"single", {oracle::standardized(30, 0.750, 0.01, 2)}}}),
                                   specs, ComparisonOptions{0.05, TTestKind::welch, AnnotationPolicy::three_way});
    CHECK(t.cell("single", "general").annotation == Annotation::down);
  }
  SUBCASE("SICK relatedness and entailment") {
    const std::vector<RelationSpec> specs{
        RelationSpec::scored("relatedness", 1, 5, Metric::pearson),
        RelationSpec::categorical("entailment", {"entailment", "contradiction", "neutral"})};
    const auto t = compare_regimes(
        campaign(specs, {{"multilabel", {oracle::standardized(30, 0.882, 0.01, 1), oracle::standardized(30, 86.7, 0.4, 4)}},
                         {"single", {oracle::standardized(30, 0.874, 0.01, 2), oracle::standardized(30, 86.4, 0.4, 5)}},
                         {"multitask", {oracle::standardized(30, 0.871, 0.01, 3), oracle::standardized(30, 86.2, 0.4, 6)}}}),
        specs);
    const auto ls = lines(render_table(t));
    REQUIRE(ls.size() == 5);
    CHECK(ls[0] == "| | relatedness | entailment |");
    CHECK(ls[2] == "| MLL | .882 | 86.7 |");
    CHECK(ls[3] == "| Single | .874↑ | 86.4↑ |");
    CHECK(ls[4] == "| MTL | .871↑ | 86.2↑ |");
  }
}

TEST_CASE("metric formatting") {
  CHECK(format_metric(0.72, Metric::spearman) == ".720");
  CHECK(format_metric(-0.12, Metric::pearson) == "-.120");
  CHECK(format_metric(1.0, Metric::pearson) == "1.000");
  CHECK(format_metric(-0.0001, Metric::pearson) == ".000");
  CHECK(format_metric(86.66, Metric::accuracy) == "86.7");
}

TEST_CASE("results CSV") {
  const std::vector<RelationSpec> specs{RelationSpec::scored("SIM", 0, 4, Metric::spearman),
                                        RelationSpec::categorical("ent", {"a", "b"})};
  const std::vector<RunResult> results{{"multilabel", 1, {{"SIM", 0.1}, {"ent", 50.0}}},
                                       {"single", 2, {{"SIM", -0.25}, {"ent", 200.0 / 3}}}};
  std::ostringstream out;
  write_results_csv(out, results, specs);
  const auto ls = lines(out.str());
  REQUIRE(ls.size() == 5);
  CHECK(ls[0] == "regime,seed,relation,metric_name,value");
  CHECK(ls[1] == "multilabel,1,SIM,spearman,0.1");
  CHECK(ls[2] == "multilabel,1,ent,accuracy,50");
  CHECK(ls[3] == "single,2,SIM,spearman,-0.25");
  CHECK(std::stod(ls[4].substr(ls[4].rfind(',') + 1)) == 200.0 / 3);
}

TEST_CASE("relation_metric treats constant predictions as zero correlation") {
  const RelationSpec s = RelationSpec::scored("SIM", 0, 4, Metric::spearman);
  CHECK(relation_metric(s, std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(relation_metric(s, std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == doctest::Approx(1.0));
}
