#include <doctest.h>

#include <cmath>
#include <cstring>

#include "relsim/config.hpp"
#include "relsim/error.hpp"
#include "relsim/regimes.hpp"

using namespace relsim;

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const ModelState& s) {
  Snapshot out;
  for (const ad::Parameter* p : s.encoder.all()) out.push_back(p->value);
  for (const auto& [name, head] : s.heads)
    for (const ad::Parameter* p : head.params()) out.push_back(p->value);
  return out;
}

Snapshot head_snapshot(const ModelState& s, const std::string& rel) {
  Snapshot out;
  for (const ad::Parameter* p : s.head(rel).params()) out.push_back(p->value);
  return out;
}

Snapshot encoder_snapshot(const ModelState& s) {
  Snapshot out;
  for (const ad::Parameter* p : s.encoder.all()) out.push_back(p->value);
  return out;
}

bool same_bits(const Snapshot& a, const Snapshot& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size() || std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

// Small synthetic task with a compact model.
struct Fixture {
  DatasetBundle bundle;
  Vocabulary vocab;
  std::vector<EncodedPair> train;
  ModelConfig model;

  explicit Fixture(std::size_t relations, std::size_t pairs = 48) {
    SyntheticConfig c = ExperimentConfig::default_synthetic();
    c.seed = 5;
    c.n_pairs = pairs;
    c.relations = synthetic_relations(relations);
    c.train = c.dev = c.test = 0;
    bundle = generate_synthetic(c);
    std::vector<TokenSeq> corpus;
    for (const auto& e : bundle.train) {
      corpus.push_back(e.left);
      corpus.push_back(e.right);
    }
    vocab = build_vocab(corpus, 1);
    train = encode_examples(bundle.train, vocab, bundle.specs);
    model.encoder = EncoderConfig{8, 6, false};
    model.head = HeadConfig{5, false};
  }

  ModelState state(std::uint64_t seed = 3) const { return ModelState::init(vocab, bundle.specs, model, seed); }
  ModelState state_with(std::vector<RelationSpec> rels, std::uint64_t seed = 3) const {
    return ModelState::init(vocab, std::move(rels), model, seed);
  }
  std::span<const EncodedPair> batch(std::size_t from = 0, std::size_t n = 16) const {
    return std::span<const EncodedPair>(train).subspan(from, n);
  }
};

TrainConfig config(Regime regime, double lr = 0.5) {
  TrainConfig c;
  c.regime = regime;
  c.lr = lr;
  return c;
}

double loss_of(std::span<const EncodedPair> batch, const std::string& rel, const ModelState& s) {
  ad::Tape tape;
  return batch_loss(tape, batch, rel, s).item();
}

}  // namespace

TEST_CASE("batch_loss") {
  const Fixture fx(2);
  const ModelState s = fx.state();

  SUBCASE("target equal to the prediction gives zero loss") {
    EncodedPair ex = fx.train[0];
    ad::Tape tape;
    const auto [u, v] = encode_pair(tape, ex.left, ex.right, s.encoder);
    const auto logp = head_forward(pair_features(u, v), s.head("rel1"));
    std::vector<double> p;
    for (double l : logp.values()) p.push_back(std::exp(l));
    ex.targets["rel1"] = p;
    const std::vector<EncodedPair> one{ex};
    CHECK(std::fabs(loss_of(one, "rel1", s)) <= 1e-15);
  }
  SUBCASE("duplicating the batch leaves the mean unchanged") {
    std::vector<EncodedPair> twice(fx.train.begin(), fx.train.begin() + 5);
    twice.insert(twice.end(), fx.train.begin(), fx.train.begin() + 5);
    CHECK(loss_of(twice, "rel2", s) == doctest::Approx(loss_of(fx.batch(0, 5), "rel2", s)).epsilon(1e-14));
  }
  SUBCASE("two examples average their singleton losses") {
    const double a = loss_of(fx.batch(0, 1), "rel1", s);
    const double b = loss_of(fx.batch(1, 1), "rel1", s);
    CHECK(loss_of(fx.batch(0, 2), "rel1", s) == doctest::Approx((a + b) / 2).epsilon(1e-14));
  }
  SUBCASE("missing label is reported") {
    std::vector<EncodedPair> bad(fx.train.begin(), fx.train.begin() + 3);
    bad[1].targets.erase("rel2");
    try {
      loss_of(bad, "rel2", s);
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("rel2") != std::string::npos);
    }
  }
}

TEST_CASE("step_single") {
  const Fixture fx(3);
  SUBCASE("other heads are untouched") {
    ModelState s = fx.state();
    const auto rel2 = head_snapshot(s, "rel2"), rel3 = head_snapshot(s, "rel3");
    const auto enc = encoder_snapshot(s), rel1 = head_snapshot(s, "rel1");
    step_single(fx.batch(), "rel1", s, config(Regime::single));
    CHECK(same_bits(head_snapshot(s, "rel2"), rel2));
    CHECK(same_bits(head_snapshot(s, "rel3"), rel3));
    CHECK_FALSE(same_bits(head_snapshot(s, "rel1"), rel1));
    CHECK_FALSE(same_bits(encoder_snapshot(s), enc));
  }
  SUBCASE("zero learning rate is the identity") {
    ModelState s = fx.state();
    const auto before = snapshot(s);
    step_single(fx.batch(), "rel1", s, config(Regime::single, 0.0));
    CHECK(same_bits(snapshot(s), before));
  }
  SUBCASE("a small step lowers the loss on its own example") {
    for (std::size_t i = 0; i < 10; ++i) {
      ModelState s = fx.state(100 + i);
      const auto one = fx.batch(i, 1);
      const double before = loss_of(one, "rel2", s);
      step_single(one, "rel2", s, config(Regime::single, 1e-3));
      CHECK(loss_of(one, "rel2", s) < before);
    }
  }
  SUBCASE("counters") {
    ModelState s = fx.state();
    StepCounters c;
    step_single(fx.batch(), "rel1", s, config(Regime::single), &c);
    CHECK(c == StepCounters{1, 1, 16, 1});
  }
}

TEST_CASE("step_multitask") {
  SUBCASE("each sub-step leaves the other heads bit-identical") {
    const Fixture fx(3);
    ModelState s = fx.state();
    std::map<std::string, Snapshot> heads;
    for (const auto& r : s.relations) heads[r.name] = head_snapshot(s, r.name);
    std::size_t substeps = 0;
    step_multitask(fx.batch(), s, config(Regime::multitask), nullptr, [&](const std::string& rel, const ModelState& st) {
      ++substeps;
      for (const auto& r : st.relations) {
        const auto now = head_snapshot(st, r.name);
        if (r.name == rel) {
          CHECK_FALSE(same_bits(now, heads[r.name]));
        } else {
          CHECK(same_bits(now, heads[r.name]));
        }
        heads[r.name] = now;
      }
    });
    CHECK(substeps == 3);
  }
  SUBCASE("one relation matches step_single bitwise") {
    const Fixture fx(1);
    ModelState a = fx.state(), b = fx.state();
    step_multitask(fx.batch(), a, config(Regime::multitask));
    step_single(fx.batch(), "rel1", b, config(Regime::single));
    CHECK(same_bits(snapshot(a), snapshot(b)));
  }
  SUBCASE("differs from multi-label on the same batch") {
    const Fixture fx(2);
    ModelState a = fx.state(), b = fx.state();
    step_multitask(fx.batch(), a, config(Regime::multitask));
    step_multilabel(fx.batch(), b, config(Regime::multilabel));
    CHECK_FALSE(same_bits(encoder_snapshot(a), encoder_snapshot(b)));
  }
  SUBCASE("relation order matters") {
    const Fixture fx(2);
    ModelState a = fx.state();
    ModelState b = fx.state_with({fx.bundle.specs[1], fx.bundle.specs[0]});
    CHECK(same_bits(snapshot(a), snapshot(b)));
    step_multitask(fx.batch(), a, config(Regime::multitask, 5.0));
    step_multitask(fx.batch(), b, config(Regime::multitask, 5.0));
    CHECK_FALSE(same_bits(snapshot(a), snapshot(b)));
  }
  SUBCASE("cost: N forwards, N backwards, N updates") {
    const Fixture fx(4);
    ModelState a = fx.state(), b = fx.state();
    StepCounters mt, ml;
    step_multitask(fx.batch(), a, config(Regime::multitask), &mt);
    step_multilabel(fx.batch(), b, config(Regime::multilabel), &ml);
    CHECK(mt == StepCounters{4, 4, 64, 4});
    CHECK(ml == StepCounters{4, 1, 16, 1});
  }
}

TEST_CASE("step_multilabel") {
  SUBCASE("total gradient is the weighted sum of relation gradients") {
    const Fixture fx(3);
    const ModelState s = fx.state();
    TrainConfig cfg = config(Regime::multilabel);
    cfg.loss_weights = {{"rel1", 0.7}, {"rel2", 1.3}, {"rel3", 2.0}};
    ad::Tape total_tape;
    const ad::Gradients total = total_tape.backward(multilabel_loss(total_tape, fx.batch(), s, cfg));
    double worst = 0;
    std::size_t compared = 0;
    std::map<ad::ParamId, std::vector<double>> summed;
    for (const auto& r : s.relations) {
      ad::Tape t;
      const ad::Gradients g = t.backward(batch_loss(t, fx.batch(), r.name, s));
      for (const auto& [id, grad] : g.entries()) {
        auto& acc = summed[id];
        acc.resize(grad.size(), 0.0);
        for (std::size_t i = 0; i < grad.size(); ++i) acc[i] += cfg.weight(r.name) * grad[i];
      }
    }
    for (const auto& [id, acc] : summed) {
      const auto g = total.get(id);
      REQUIRE(g.size() == acc.size());
      for (std::size_t i = 0; i < acc.size(); ++i) worst = std::max(worst, std::fabs(g[i] - acc[i]));
      compared += acc.size();
    }
    CHECK(summed.size() == total.size());
    CHECK(compared > 1000);
    CHECK(worst < 1e-10);
  }
  SUBCASE("all weights zero is the identity") {
    const Fixture fx(2);
    ModelState s = fx.state();
    const auto before = snapshot(s);
    TrainConfig cfg = config(Regime::multilabel);
    cfg.loss_weights = {{"rel1", 0.0}, {"rel2", 0.0}};
    step_multilabel(fx.batch(), s, cfg);
    CHECK(same_bits(snapshot(s), before));
  }
  SUBCASE("one relation with weight 1 matches step_single bitwise") {
    const Fixture fx(1);
    ModelState a = fx.state(), b = fx.state();
    step_multilabel(fx.batch(), a, config(Regime::multilabel));
    step_single(fx.batch(), "rel1", b, config(Regime::single));
    CHECK(same_bits(snapshot(a), snapshot(b)));
  }
}

TEST_CASE("train") {
  const Fixture fx(2, 40);
  SUBCASE("zero epochs") {
    ModelState s = fx.state();
    const auto before = snapshot(s);
    TrainConfig cfg = config(Regime::multilabel);
    cfg.epochs = 0;
    const TrainHistory h = train(fx.train, s, cfg, fx.train);
    CHECK(h.dev_metrics.empty());
    CHECK(same_bits(snapshot(s), before));
  }
  SUBCASE("same seed, same parameters") {
    for (Regime r : {Regime::multilabel, Regime::multitask}) {
      ModelState a = fx.state(), b = fx.state();
      TrainConfig cfg = config(r);
      cfg.epochs = 2;
      train(fx.train, a, cfg);
      train(fx.train, b, cfg);
      CHECK(same_bits(snapshot(a), snapshot(b)));
    }
  }
  SUBCASE("shuffle seed changes the result") {
    ModelState a = fx.state(), b = fx.state();
    TrainConfig cfg = config(Regime::multilabel);
    cfg.epochs = 1;
    train(fx.train, a, cfg);
    cfg.seed = 2;
    train(fx.train, b, cfg);
    CHECK_FALSE(same_bits(snapshot(a), snapshot(b)));
  }
  SUBCASE("counters and history") {
    ModelState s = fx.state();
    TrainConfig cfg = config(Regime::multitask);
    cfg.epochs = 2;
    StepCounters c;
    int seen = 0;
    const TrainHistory h = train(fx.train, s, cfg, fx.batch(0, 10), &c, [&](int e, const ModelState&) { CHECK(e == ++seen); });
    // 40 pairs in batches of 16: 3 batches per epoch.
    CHECK(c.updates == 2 * 3 * 2);
    CHECK(c.backward_passes == 12);
    CHECK(c.encoder_passes == 2 * 2 * 40);
    CHECK(h.dev_metrics.size() == 2);
    CHECK(h.dev_metrics[0].count("rel1") == 1);
    CHECK(seen == 2);
  }
  SUBCASE("an epoch is the same whatever the epoch budget") {
    ModelState a = fx.state(), b = fx.state();
    TrainConfig cfg = config(Regime::multilabel);
    cfg.epochs = 3;
    Snapshot after_two;
    train(fx.train, a, cfg, {}, nullptr, [&](int e, const ModelState& st) {
      if (e == 2) after_two = snapshot(st);
    });
    cfg.epochs = 2;
    train(fx.train, b, cfg);
    CHECK(same_bits(snapshot(b), after_two));
  }
  SUBCASE("invalid configurations") {
    ModelState s = fx.state();
    TrainConfig cfg = config(Regime::multilabel);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(fx.train, s, cfg), ConfigError);
    cfg = config(Regime::multilabel, -1);
    CHECK_THROWS_AS(train(fx.train, s, cfg), ConfigError);
    cfg = config(Regime::multilabel);
    CHECK_THROWS_AS(train(std::span<const EncodedPair>{}, s, cfg), DataError);
  }
}

TEST_CASE("multi-label learns the synthetic task in 10 epochs" * doctest::timeout(600)) {
  ExperimentConfig ec;
  const DatasetBundle d = generate_synthetic(ec.synthetic);
  std::vector<TokenSeq> corpus;
  for (const auto& e : d.train) {
    corpus.push_back(e.left);
    corpus.push_back(e.right);
  }
  const Vocabulary vocab = build_vocab(corpus, 1);
  const auto tr = encode_examples(d.train, vocab, d.specs);
  const auto dev = encode_examples(d.dev, vocab, d.specs);
  ModelState s = ModelState::init(vocab, d.specs, ec.model, 1);
  TrainConfig cfg = config(Regime::multilabel, 0.5);
  cfg.epochs = 10;
  const TrainHistory h = train(tr, s, cfg, dev);
  REQUIRE(h.dev_metrics.size() == 10);
  for (const auto& spec : d.specs) {
    INFO(spec.name << " dev Spearman " << h.dev_metrics.back().at(spec.name));
    CHECK(h.dev_metrics.back().at(spec.name) > 0.5);
  }
}

TEST_CASE("a diverging run stops before applying a non-finite update") {
  const Fixture fx(2);
  for (Regime r : {Regime::multilabel, Regime::multitask}) {
    ModelState s = fx.state();
    TrainConfig cfg = config(r, 1e307);
    cfg.epochs = 3;
    CHECK_THROWS_AS(train(fx.train, s, cfg), TrainingDiverged);
  }
}
