#include "relsim/regimes.hpp"

#include <cmath>
#include <numeric>

#include "relsim/error.hpp"
#include "relsim/evaluation.hpp"
#include "relsim/rng.hpp"

namespace relsim {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<ad::Parameter*> concat_params(std::vector<ad::Parameter*> a, const std::vector<ad::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::single: return kRegimeSingle;
    case Regime::multitask: return kRegimeMultitask;
    case Regime::multilabel: return kRegimeMultilabel;
  }
  return "unknown";
}

Regime parse_regime(const std::string& name) {
  if (name == kRegimeSingle) return Regime::single;
  if (name == kRegimeMultitask) return Regime::multitask;
  if (name == kRegimeMultilabel) return Regime::multilabel;
  throw ConfigError("unknown regime '" + name + "' (expected single, multitask or multilabel)");
}

ModelState ModelState::init(Vocabulary vocab, std::vector<RelationSpec> relations, const ModelConfig& config,
                            std::uint64_t seed) {
  ModelState s;
  Rng enc_rng(mix_seed(seed, 1));
  s.encoder = EncoderParams::init(vocab.size(), config.encoder, enc_rng);
  s.vocab = std::move(vocab);
  const std::size_t features = 2 * s.encoder.embedding_dim();
  for (const auto& spec : relations) {
    spec.validate();
    Rng head_rng(mix_seed(seed, fnv1a(spec.name)));
    auto [it, inserted] = s.heads.emplace(spec.name, HeadParams::init(spec.name, features, spec.output_size(), config.head, head_rng));
    if (!inserted) throw ConfigError("duplicate relation " + spec.name);
  }
  s.relations = std::move(relations);
  return s;
}

const RelationSpec& ModelState::relation(const std::string& name) const {
  for (const auto& r : relations) {
    if (r.name == name) return r;
  }
  throw ConfigError("model has no relation " + name);
}

HeadParams& ModelState::head(const std::string& name) {
  auto it = heads.find(name);
  if (it == heads.end()) throw ConfigError("model has no head for relation " + name);
  return it->second;
}

const HeadParams& ModelState::head(const std::string& name) const {
  auto it = heads.find(name);
  if (it == heads.end()) throw ConfigError("model has no head for relation " + name);
  return it->second;
}

std::vector<ad::Parameter*> ModelState::params_for(const std::string& relation) {
  return concat_params(encoder.trainable(), head(relation).params());
}

std::vector<ad::Parameter*> ModelState::all_trainable() {
  auto out = encoder.trainable();
  for (const auto& r : relations) out = concat_params(std::move(out), head(r.name).params());
  return out;
}

std::vector<EncodedPair> encode_examples(std::span<const PairExample> examples, const Vocabulary& vocab,
                                         std::span<const RelationSpec> relations) {
  std::vector<EncodedPair> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const PairExample& ex = examples[i];
    EncodedPair p;
    p.left = vocab.encode(ex.left);
    p.right = vocab.encode(ex.right);
    p.index = i;
    for (const auto& spec : relations) {
      auto it = ex.labels.find(spec.name);
      if (it == ex.labels.end()) continue;
      const std::string where = "example " + std::to_string(i + 1);
      if (spec.is_scored()) {
        const double* y = std::get_if<double>(&it->second);
        if (y == nullptr) throw DataError(where + ": relation " + spec.name + " expects a numeric score");
        p.targets.emplace(spec.name, sparse_target(*y, spec.range(), spec.name));
        p.gold.emplace(spec.name, *y);
      } else {
        const std::string* c = std::get_if<std::string>(&it->second);
        if (c == nullptr) throw DataError(where + ": relation " + spec.name + " expects a class label");
        const std::size_t k = spec.class_index(*c);
        p.targets.emplace(spec.name, k);
        p.gold.emplace(spec.name, static_cast<double>(k));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

double TrainConfig::weight(const std::string& relation) const {
  auto it = loss_weights.find(relation);
  return it == loss_weights.end() ? 1.0 : it->second;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  for (const auto& [rel, w] : loss_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weight for " + rel + " must be non-negative");
  }
}

BatchEncoding encode_batch(ad::Tape& tape, std::span<const EncodedPair> batch, const ModelState& state,
                           StepCounters* counters) {
  BatchEncoding enc;
  enc.features.reserve(batch.size());
  for (const auto& ex : batch) {
    auto [u, v] = encode_pair(tape, ex.left, ex.right, state.encoder);
    enc.features.push_back(pair_features(u, v));
  }
  if (counters != nullptr) counters->encoder_passes += batch.size();
  return enc;
}

ad::Tensor relation_loss(ad::Tape& /*tape*/, const BatchEncoding& encoding, std::span<const EncodedPair> batch,
                         const std::string& relation, const ModelState& state, StepCounters* counters) {
  if (batch.empty()) throw DataError("empty batch");
  const RelationSpec& spec = state.relation(relation);
  const HeadParams& head = state.head(relation);
  ad::Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto it = batch[i].targets.find(relation);
    if (it == batch[i].targets.end()) {
      throw DataError("example " + std::to_string(batch[i].index + 1) + " has no label for relation " + relation);
    }
    const ad::Tensor logp = head_forward(encoding.features[i], head);
    const ad::Tensor loss = spec.is_scored() ? kl_loss(std::get<std::vector<double>>(it->second), logp)
                                             : ce_loss(std::get<std::size_t>(it->second), logp);
    total = i == 0 ? loss : ad::add(total, loss);
  }
  if (counters != nullptr) ++counters->forward_passes;
  return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

ad::Tensor batch_loss(ad::Tape& tape, std::span<const EncodedPair> batch, const std::string& relation,
                      const ModelState& state, StepCounters* counters) {
  const BatchEncoding enc = encode_batch(tape, batch, state, counters);
  return relation_loss(tape, enc, batch, relation, state, counters);
}

ad::Tensor multilabel_loss(ad::Tape& tape, std::span<const EncodedPair> batch, const ModelState& state,
                           const TrainConfig& config, StepCounters* counters) {
  const BatchEncoding enc = encode_batch(tape, batch, state, counters);
  ad::Tensor total;
  for (std::size_t r = 0; r < state.relations.size(); ++r) {
    const std::string& name = state.relations[r].name;
    const ad::Tensor weighted = ad::scale(relation_loss(tape, enc, batch, name, state, counters), config.weight(name));
    total = r == 0 ? weighted : ad::add(total, weighted);
  }
  return total;
}

namespace {

void require_finite(const ad::Tensor& loss, const std::string& what) {
  const double v = loss.item();
  if (!std::isfinite(v)) throw TrainingDiverged(what + " loss is " + std::to_string(v) + "; lower the learning rate");
}

}  // namespace

void step_single(std::span<const EncodedPair> batch, const std::string& relation, ModelState& state,
                 const TrainConfig& config, StepCounters* counters) {
  ad::Tape tape;
  const ad::Tensor loss = batch_loss(tape, batch, relation, state, counters);
  require_finite(loss, relation);
  const ad::Gradients grads = tape.backward(loss);
  if (counters != nullptr) ++counters->backward_passes;
  ad::sgd_step(state.params_for(relation), grads, config.lr);
  if (counters != nullptr) ++counters->updates;
}

void step_multitask(std::span<const EncodedPair> batch, ModelState& state, const TrainConfig& config,
                    StepCounters* counters, const SubStepObserver& observer) {
  for (const auto& spec : state.relations) {
    // Fresh graph per relation: encodings are recomputed at the parameters
    // left by the previous sub-step.
    step_single(batch, spec.name, state, config, counters);
    if (observer) observer(spec.name, state);
  }
}

void step_multilabel(std::span<const EncodedPair> batch, ModelState& state, const TrainConfig& config,
                     StepCounters* counters) {
  ad::Tape tape;
  const ad::Tensor loss = multilabel_loss(tape, batch, state, config, counters);
  require_finite(loss, "multi-label");
  const ad::Gradients grads = tape.backward(loss);
  if (counters != nullptr) ++counters->backward_passes;
  ad::sgd_step(state.all_trainable(), grads, config.lr);
  if (counters != nullptr) ++counters->updates;
}

std::map<std::string, std::vector<double>> predict(const ModelState& state, std::span<const EncodedPair> examples) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& spec : state.relations) out[spec.name].reserve(examples.size());
  for (const auto& ex : examples) {
    ad::Tape tape;
    auto [u, v] = encode_pair(tape, ex.left, ex.right, state.encoder);
    const ad::Tensor features = pair_features(u, v);
    for (const auto& spec : state.relations) {
      const ad::Tensor logp = head_forward(features, state.head(spec.name), false);
      const auto lp = logp.values();
      if (spec.is_scored()) {
        std::vector<double> p(lp.size());
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(lp[j]);
        out[spec.name].push_back(decode_score(p, spec.range()));
      } else {
        out[spec.name].push_back(static_cast<double>(decode_class(lp)));
      }
    }
  }
  return out;
}

std::map<std::string, double> evaluate(const ModelState& state, std::span<const EncodedPair> examples) {
  const auto preds = predict(state, examples);
  std::map<std::string, double> out;
  for (const auto& spec : state.relations) {
    std::vector<double> gold;
    gold.reserve(examples.size());
    for (const auto& ex : examples) {
      auto it = ex.gold.find(spec.name);
      if (it == ex.gold.end()) {
        throw DataError("example " + std::to_string(ex.index + 1) + " has no label for relation " + spec.name);
      }
      gold.push_back(it->second);
    }
    out[spec.name] = relation_metric(spec, preds.at(spec.name), gold);
  }
  return out;
}

TrainHistory train(std::span<const EncodedPair> train_set, ModelState& state, const TrainConfig& config,
                   std::span<const EncodedPair> dev, StepCounters* counters, const EpochObserver& observer) {
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  std::string single = config.single_relation;
  if (config.regime == Regime::single) {
    if (single.empty()) {
      if (state.relations.size() != 1) throw ConfigError("single regime needs a relation name");
      single = state.relations.front().name;
    }
    state.relation(single);
  }

  TrainHistory history;
  Rng shuffle_rng(mix_seed(config.seed, 2));
  std::vector<std::size_t> order(train_set.size());
  std::vector<EncodedPair> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) shuffle_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      switch (config.regime) {
        case Regime::single: step_single(batch, single, state, config, counters); break;
        case Regime::multitask: step_multitask(batch, state, config, counters); break;
        case Regime::multilabel: step_multilabel(batch, state, config, counters); break;
      }
    }
    if (!dev.empty()) history.dev_metrics.push_back(evaluate(state, dev));
    if (observer) observer(epoch, state);
  }
  return history;
}

}  // namespace relsim
