#include "relsim/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "relsim/autodiff.hpp"
#include "relsim/data.hpp"
#include "relsim/encoder.hpp"
#include "relsim/evaluation.hpp"
#include "relsim/gradcheck.hpp"
#include "relsim/heads.hpp"
#include "relsim/regimes.hpp"
#include "relsim/rng.hpp"

namespace relsim {

namespace {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

// Relative error bound of the gradient checks. Elements whose analytic and
// numeric values are both below the floor count as agreeing (both are zero
// up to rounding in the difference quotient).
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsFloor = 1e-8;

std::vector<double> uniform_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Magnitudes in [0.1, 1.5] with random signs: away from the kink of |x|.
std::vector<double> signed_away_from_zero(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(0.1, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return v;
}

// Each column a shuffled ladder with spacing 0.3 and jitter below 0.1, so
// the maximum is unique by a margin.
std::vector<double> separated_columns(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> v(rows * cols);
  for (std::size_t c = 0; c < cols; ++c) {
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t r = 0; r < rows; ++r) v[r * cols + c] = 0.3 * static_cast<double>(order[r]) + rng.uniform(0.0, 0.1);
  }
  return v;
}

// Scalar readout sum(w * t) with fixed random weights.
Tensor readout(Tape& tape, Tensor t, const std::vector<double>& w) {
  return ad::sum(ad::mul_elementwise(t, tape.constant(t.shape(), w)));
}

struct GradCase {
  std::shared_ptr<void> owner;  // keeps the checked parameters alive
  std::vector<Parameter*> params;
  LossBuilder loss;
};

using CaseFactory = std::function<GradCase(Rng&)>;

CheckOutcome gradient_check(const CaseFactory& factory, const CheckOptions& options, std::uint64_t salt) {
  Rng rng(mix_seed(options.seed, salt));
  GradCheckOptions go;
  go.rel_tol = kGradRelTol;
  go.abs_tol = kGradAbsFloor;
  double worst = 0.0;
  std::size_t elements = 0;
  for (std::size_t point = 0; point < options.points; ++point) {
    const GradCase c = factory(rng);
    const GradCheckResult r = check_gradients(c.loss, c.params, go);
    elements += r.checked;
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) {
      std::ostringstream s;
      s << "point " << point + 1 << ": " << r.worst << " (relative error " << r.max_rel_error << ")";
      return {false, s.str()};
    }
  }
  std::ostringstream s;
  s << options.points << " points, " << elements << " elements, max relative error " << worst;
  return {true, s.str()};
}

using Draw = std::function<std::vector<double>(Rng&, Shape)>;

// Op applied to freshly drawn leaves, read out with random weights.
CaseFactory op_case(std::vector<Shape> shapes, std::function<Tensor(std::span<const Tensor>)> op, Draw draw = {}) {
  return [=](Rng& rng) {
    auto leaves = std::make_shared<std::vector<Parameter>>();
    leaves->reserve(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      leaves->emplace_back("x" + std::to_string(i), shapes[i],
                           draw ? draw(rng, shapes[i]) : uniform_values(rng, shapes[i].size()));
    }
    auto build = [leaves, op](Tape& tape) {
      std::vector<Tensor> xs;
      for (const auto& p : *leaves) xs.push_back(tape.param(p));
      return op(xs);
    };
    Tape probe;
    const auto w = uniform_values(rng, build(probe).shape().size());
    GradCase c;
    c.owner = leaves;
    for (auto& p : *leaves) c.params.push_back(&p);
    c.loss = [build, w](Tape& tape) { return readout(tape, build(tape), w); };
    return c;
  };
}

CaseFactory unary_case(Shape shape, Tensor (*op)(Tensor), Draw draw = {}) {
  return op_case({shape}, [op](std::span<const Tensor> x) { return op(x[0]); }, std::move(draw));
}

CaseFactory binary_case(Shape sa, Shape sb, std::function<Tensor(Tensor, Tensor)> op) {
  return op_case({sa, sb}, [op](std::span<const Tensor> x) { return op(x[0], x[1]); });
}

void randomize(std::span<Parameter* const> params, Rng& rng) {
  for (Parameter* p : params) {
    for (double& v : p->value) v = rng.uniform(-1.0, 1.0);
  }
}

GradCase lstm_case(Rng& rng) {
  struct Owned {
    LstmParams lstm;
    Parameter inputs;
  };
  auto o = std::make_shared<Owned>();
  Rng init(rng.next());
  o->lstm = EncoderParams::init(4, EncoderConfig{3, 2, false}, init).forward;
  o->inputs = Parameter("inputs", Shape(3, 3), uniform_values(rng, 9));
  GradCase c;
  c.params = o->lstm.params();
  randomize(c.params, rng);
  c.params.push_back(&o->inputs);
  const auto w = uniform_values(rng, 6);
  c.owner = o;
  c.loss = [o, w](Tape& tape) {
    const auto states = run_lstm(tape, tape.param(o->inputs), o->lstm);
    return readout(tape, ad::stack(states), w);
  };
  return c;
}

// Encoder h = 2, d_w = 3 through a scored head with K = 5.
GradCase end_to_end_case(Rng& rng) {
  struct Owned {
    EncoderParams encoder;
    HeadParams head;
  };
  auto o = std::make_shared<Owned>();
  Rng init(rng.next());
  const RelationSpec spec = RelationSpec::scored("rel", 0, 4, Metric::spearman);
  o->encoder = EncoderParams::init(6, EncoderConfig{3, 2, false}, init);
  o->head = HeadParams::init("rel", 8, spec.output_size(), HeadConfig{3, false}, init);
  GradCase c;
  c.params = o->encoder.trainable();
  for (Parameter* p : o->head.params()) c.params.push_back(p);
  randomize(c.params, rng);
  auto sentence = [&rng] {
    std::vector<int> s(2 + rng.index(3));
    for (int& t : s) t = static_cast<int>(rng.index(6));
    return s;
  };
  const std::vector<int> left = sentence();
  const std::vector<int> right = sentence();
  const auto target = sparse_target(rng.uniform(0.0, 4.0), spec.range());
  c.owner = o;
  c.loss = [o, left, right, target](Tape& tape) {
    auto [u, v] = encode_pair(tape, left, right, o->encoder);
    return kl_loss(target, head_forward(pair_features(u, v), o->head));
  };
  return c;
}

std::vector<Check> gradient_checks() {
  std::vector<Check> out;
  std::uint64_t salt = 1000;
  auto add = [&](std::string name, CaseFactory f) {
    const std::uint64_t s = salt++;
    out.push_back({"gradient." + name, [f, s](const CheckOptions& o) { return gradient_check(f, o, s); }});
  };
  add("add", binary_case(Shape(3, 4), Shape(3, 4), ad::add));
  add("sub", binary_case(Shape(3, 4), Shape(3, 4), ad::sub));
  add("mul_elementwise", binary_case(Shape(3, 4), Shape(3, 4), ad::mul_elementwise));
  add("scale", op_case({Shape(5)}, [](std::span<const Tensor> x) { return ad::scale(x[0], -1.7); }));
  add("abs_elementwise", unary_case(Shape(6), ad::abs_elementwise,
                                    [](Rng& r, Shape s) { return signed_away_from_zero(r, s.size()); }));
  add("matmul", binary_case(Shape(3, 4), Shape(4, 2), ad::matmul));
  add("matmul_vector", binary_case(Shape(4), Shape(4, 3), ad::matmul));
  add("concat", binary_case(Shape(3), Shape(2), [](Tensor a, Tensor b) { return ad::concat({a, b}); }));
  add("concat_rows", binary_case(Shape(2, 3), Shape(1, 3), [](Tensor a, Tensor b) { return ad::concat({a, b}, 0); }));
  add("concat_columns",
      binary_case(Shape(2, 3), Shape(2, 2), [](Tensor a, Tensor b) { return ad::concat({a, b}, 1); }));
  add("stack", binary_case(Shape(4), Shape(4), [](Tensor a, Tensor b) {
        const Tensor rows[] = {a, b, a};
        return ad::stack(rows);
      }));
  add("row", op_case({Shape(5, 3)}, [](std::span<const Tensor> x) { return ad::row(x[0], 2); }));
  add("mean", binary_case(Shape(2, 3), Shape(2, 3), [](Tensor a, Tensor b) { return ad::mean(ad::mul_elementwise(a, b)); }));
  add("sum", binary_case(Shape(4), Shape(4), [](Tensor a, Tensor b) { return ad::sum(ad::mul_elementwise(a, b)); }));
  add("sigmoid", unary_case(Shape(6), ad::sigmoid, [](Rng& r, Shape s) { return uniform_values(r, s.size(), -3, 3); }));
  add("tanh", unary_case(Shape(6), ad::tanh_act, [](Rng& r, Shape s) { return uniform_values(r, s.size(), -3, 3); }));
  add("log_softmax", unary_case(Shape(5), ad::log_softmax, [](Rng& r, Shape s) { return uniform_values(r, s.size(), -3, 3); }));
  add("log_softmax_rows", unary_case(Shape(3, 4), ad::log_softmax));
  add("max_over_time", unary_case(Shape(5, 3), ad::max_over_time,
                                  [](Rng& r, Shape s) { return separated_columns(r, s.rows(), s.cols()); }));
  add("kl_loss", [](Rng& rng) {
    const auto target = sparse_target(rng.uniform(0.0, 4.0), Scored{0.0, 4.0, 5});
    return op_case({Shape(5)}, [target](std::span<const Tensor> x) { return kl_loss(target, ad::log_softmax(x[0])); })(rng);
  });
  add("ce_loss", [](Rng& rng) {
    const std::size_t k = rng.index(3);
    return op_case({Shape(3)}, [k](std::span<const Tensor> x) { return ce_loss(k, ad::log_softmax(x[0])); })(rng);
  });
  add("pair_features", binary_case(Shape(4), Shape(4), [](Tensor u, Tensor v) { return pair_features(u, v); }));
  add("lstm", lstm_case);
  add("end_to_end", end_to_end_case);
  return out;
}

CheckOutcome round_trip(double lo, double hi) {
  const RelationSpec spec = RelationSpec::scored("r", lo, hi, Metric::spearman);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double y = lo + (hi - lo) * static_cast<double>(i) / 999.0;
    const double back = decode_score(sparse_target(y, spec.range()), spec.range());
    worst = std::max(worst, std::fabs(back - y));
  }
  std::ostringstream s;
  s << "1000 points, max deviation " << worst;
  return {worst <= 1e-9, s.str()};
}

// A small model and a labelled batch from the synthetic generator.
struct Fixture {
  ModelState state;
  std::vector<EncodedPair> data;
};

Fixture make_fixture(std::size_t relations, std::size_t pairs, std::uint64_t seed, const EncoderConfig& enc) {
  SyntheticConfig sc;
  sc.seed = seed;
  sc.n_pairs = pairs;
  sc.relations = synthetic_relations(relations);
  const DatasetBundle b = generate_synthetic(sc);
  std::vector<TokenSeq> corpus;
  for (const auto& ex : b.train) {
    corpus.push_back(ex.left);
    corpus.push_back(ex.right);
  }
  Fixture f;
  ModelConfig mc;
  mc.encoder = enc;
  f.state = ModelState::init(build_vocab(corpus), b.specs, mc, seed);
  f.data = encode_examples(b.train, f.state.vocab, b.specs);
  return f;
}

CheckOutcome gradient_identity(const CheckOptions& o) {
  Fixture f = make_fixture(2, 16, o.seed, EncoderConfig{});
  TrainConfig tc;
  tc.loss_weights = {{"rel1", 0.7}, {"rel2", 1.3}};
  ad::Gradients total;
  {
    Tape tape;
    total = tape.backward(multilabel_loss(tape, f.data, f.state, tc));
  }
  std::vector<ad::Gradients> parts;
  for (const auto& spec : f.state.relations) {
    Tape tape;
    parts.push_back(tape.backward(batch_loss(tape, f.data, spec.name, f.state)));
  }
  double worst = 0.0;
  std::size_t checked = 0;
  for (Parameter* p : f.state.encoder_params()) {
    const auto g = total.get(p->id);
    const auto g1 = parts[0].get(p->id);
    const auto g2 = parts[1].get(p->id);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double expect = 0.7 * (g1.empty() ? 0.0 : g1[i]) + 1.3 * (g2.empty() ? 0.0 : g2[i]);
      worst = std::max(worst, std::fabs((g.empty() ? 0.0 : g[i]) - expect));
      ++checked;
    }
  }
  std::ostringstream s;
  s << checked << " shared elements, max deviation " << worst;
  return {worst < 1e-10, s.str()};
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::map<std::string, std::vector<std::vector<double>>> head_snapshot(const ModelState& s) {
  std::map<std::string, std::vector<std::vector<double>>> out;
  for (const auto& [name, head] : s.heads) {
    for (const Parameter* p : head.params()) out[name].push_back(p->value);
  }
  return out;
}

CheckOutcome head_isolation(const CheckOptions& o) {
  Fixture f = make_fixture(3, 96, o.seed, EncoderConfig{16, 16, false});
  TrainConfig tc;
  tc.regime = Regime::multitask;
  tc.epochs = 1;
  tc.batch_size = 16;
  auto before = head_snapshot(f.state);
  std::size_t substeps = 0;
  std::string failure;
  tc.validate();
  for (std::size_t start = 0; start < f.data.size(); start += tc.batch_size) {
    const std::size_t end = std::min(f.data.size(), start + tc.batch_size);
    step_multitask(std::span(f.data).subspan(start, end - start), f.state, tc, nullptr,
                   [&](const std::string& rel, const ModelState& s) {
                     ++substeps;
                     auto after = head_snapshot(s);
                     for (const auto& [name, values] : after) {
                       if (name == rel) continue;
                       for (std::size_t k = 0; k < values.size(); ++k) {
                         if (!same_bits(values[k], before[name][k]) && failure.empty()) {
                           failure = "head " + name + " changed during the " + rel + " sub-step";
                         }
                       }
                     }
                     if (same_bits(after[rel].back(), before[rel].back()) && failure.empty()) {
                       failure = "head " + rel + " did not move during its own sub-step";
                     }
                     before = std::move(after);
                   });
  }
  if (!failure.empty()) return {false, failure};
  return {true, std::to_string(substeps) + " sub-steps over one epoch"};
}

CheckOutcome divergence(const CheckOptions& o) {
  Fixture f = make_fixture(2, 16, o.seed, EncoderConfig{});
  ModelState mtl = f.state;
  ModelState mll = f.state;
  TrainConfig tc;
  tc.lr = 0.5;
  step_multitask(f.data, mtl, tc);
  step_multilabel(f.data, mll, tc);
  const auto a = mtl.encoder.all();
  const auto b = mll.encoder.all();
  std::size_t differing = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k]->value.size(); ++i) differing += a[k]->value[i] != b[k]->value[i] ? 1 : 0;
  }
  return {differing > 0, std::to_string(differing) + " encoder elements differ"};
}

CheckOutcome backward_counts(const CheckOptions& o) {
  Fixture f = make_fixture(4, 16, o.seed, EncoderConfig{8, 8, false});
  TrainConfig tc;
  StepCounters mtl, mll;
  ModelState a = f.state;
  ModelState b = f.state;
  step_multitask(f.data, a, tc, &mtl);
  step_multilabel(f.data, b, tc, &mll);
  std::ostringstream s;
  s << "backward passes per batch: multitask " << mtl.backward_passes << ", multilabel " << mll.backward_passes;
  return {mtl.backward_passes == 4 && mll.backward_passes == 1, s.str()};
}

// Independent rank oracle: 1 + (number smaller) + (number equal - 1) / 2.
std::vector<double> oracle_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i] ? 1 : 0;
      equal += y == x[i] ? 1 : 0;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - sa / n) * (b[i] - sb / n);
    va += (a[i] - sa / n) * (a[i] - sa / n);
    vb += (b[i] - sb / n) * (b[i] - sb / n);
  }
  return cov / std::sqrt(va * vb);
}

CheckOutcome spearman_closed_form(const CheckOptions& o) {
  Rng rng(mix_seed(o.seed, 77));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng.index(46);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    const auto ra = oracle_ranks(a);
    const auto rb = oracle_ranks(b);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double nn = static_cast<double>(n);
    const double expect = 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
    worst = std::max(worst, std::fabs(spearman(a, b) - expect));
  }
  std::ostringstream s;
  s << "100 tie-free vectors, max deviation " << worst;
  return {worst <= 1e-12, s.str()};
}

CheckOutcome spearman_ties(const CheckOptions& o) {
  Rng rng(mix_seed(o.seed, 78));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.index(30);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.index(4));
      b[i] = static_cast<double>(rng.index(5));
    }
    const auto ra = oracle_ranks(a);
    const auto rb = oracle_ranks(b);
    const bool constant = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; }) ||
                          std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
    if (constant) continue;
    worst = std::max(worst, std::fabs(spearman(a, b) - oracle_pearson(ra, rb)));
  }
  std::ostringstream s;
  s << "tied vectors, max deviation from average-rank oracle " << worst;
  return {worst <= 1e-12, s.str()};
}

CheckOutcome pearson_fixture(const CheckOptions&) {
  const std::vector<double> a{1, 2, 3}, b{1, 3, 2};
  const double r = pearson(a, b);
  std::ostringstream s;
  s << "pearson([1,2,3],[1,3,2]) = " << r;
  return {std::fabs(r - 0.5) <= 1e-12, s.str()};
}

CheckOutcome welch_monte_carlo(const CheckOptions& o) {
  double worst = 0.0;
  std::ostringstream s;
  for (std::size_t k = 0; k < ttest_fixtures().size(); ++k) {
    const auto& f = ttest_fixtures()[k];
    const double p = one_sided_t_test(f.treatment, f.baseline).p;
    const double mc = monte_carlo_welch_p(f.treatment, f.baseline, o.mc_draws, mix_seed(o.seed, 500 + k));
    worst = std::max(worst, std::fabs(p - mc));
    s << (k ? "; " : "") << f.name << " p=" << p << " mc=" << mc;
  }
  s << "; max gap " << worst;
  return {worst <= 0.01, s.str()};
}

CheckOutcome identical_samples(const CheckOptions&) {
  const std::vector<double> a{0.71, 0.69, 0.73, 0.70, 0.72};
  const TTestResult r = one_sided_t_test(a, a);
  std::ostringstream s;
  s << "t = " << r.t << ", p = " << r.p;
  return {!r.significant, s.str()};
}

std::vector<Check> build_registry() {
  std::vector<Check> all = gradient_checks();
  all.push_back({"sparse_target.round_trip_0_4", [](const CheckOptions&) { return round_trip(0, 4); }});
  all.push_back({"sparse_target.round_trip_-2_2", [](const CheckOptions&) { return round_trip(-2, 2); }});
  all.push_back({"sparse_target.round_trip_1_5", [](const CheckOptions&) { return round_trip(1, 5); }});
  all.push_back({"multilabel.gradient_identity", gradient_identity});
  all.push_back({"multitask.head_isolation", head_isolation});
  all.push_back({"regimes.divergence", divergence});
  all.push_back({"regimes.backward_counts", backward_counts});
  all.push_back({"metrics.spearman_closed_form", spearman_closed_form});
  all.push_back({"metrics.spearman_ties", spearman_ties});
  all.push_back({"metrics.pearson_fixture", pearson_fixture});
  all.push_back({"ttest.welch_monte_carlo", welch_monte_carlo});
  all.push_back({"ttest.identical_samples", identical_samples});
  return all;
}

}  // namespace

const std::vector<Check>& check_registry() {
  static const std::vector<Check> registry = build_registry();
  return registry;
}

std::vector<CheckReport> run_checks(const CheckOptions& options, const std::string& prefix) {
  std::vector<CheckReport> out;
  for (const auto& check : check_registry()) {
    if (!check.name.starts_with(prefix)) continue;
    CheckReport r;
    r.name = check.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.outcome = check.run(options);
    } catch (const std::exception& e) {
      r.outcome = {false, std::string("exception: ") + e.what()};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

const std::vector<TTestFixture>& ttest_fixtures() {
  static const std::vector<TTestFixture> fixtures = [] {
    std::vector<TTestFixture> f;
    auto draw = [](std::uint64_t seed, std::size_t n, double mean, double sd) {
      Rng rng(seed);
      std::vector<double> v(n);
      for (double& x : v) x = mean + sd * rng.normal();
      return v;
    };
    f.push_back({"equal_spread_small_gap", draw(11, 30, 0.705, 0.02), draw(12, 30, 0.700, 0.02)});
    f.push_back({"unequal_spread", draw(21, 30, 0.72, 0.01), draw(22, 30, 0.71, 0.04)});
    f.push_back({"unequal_sizes", draw(31, 12, 0.60, 0.05), draw(32, 20, 0.57, 0.02)});
    f.push_back({"baseline_ahead", draw(41, 30, 0.68, 0.03), draw(42, 30, 0.69, 0.03)});
    f.push_back({"clear_gap", draw(51, 15, 0.75, 0.02), draw(52, 15, 0.73, 0.02)});
    return f;
  }();
  return fixtures;
}

double monte_carlo_welch_p(std::span<const double> treatment, std::span<const double> baseline, std::size_t draws,
                           std::uint64_t seed) {
  auto moments = [](std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair{m, ss / static_cast<double>(x.size() - 1)};
  };
  const auto [m1, v1] = moments(treatment);
  const auto [m2, v2] = moments(baseline);
  const double n1 = static_cast<double>(treatment.size());
  const double n2 = static_cast<double>(baseline.size());
  const double t_obs = (m1 - m2) / std::sqrt(v1 / n1 + v2 / n2);

  // Under normality the sample mean and variance are independent:
  // mean ~ N(mu, s^2 / n), variance ~ s^2 chi2(n - 1) / (n - 1).
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> z;
  std::chi_squared_distribution<double> c1(n1 - 1.0), c2(n2 - 1.0);
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    const double a = std::sqrt(v1 / n1) * z(engine);
    const double b = std::sqrt(v2 / n2) * z(engine);
    const double s1 = v1 * c1(engine) / (n1 - 1.0);
    const double s2 = v2 * c2(engine) / (n2 - 1.0);
    if ((a - b) / std::sqrt(s1 / n1 + s2 / n2) >= t_obs) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

}  // namespace relsim
