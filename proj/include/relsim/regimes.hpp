#pragma once

// Training regimes over one shared encoder and one head per relation.
//
//   single      one relation, one head; other relations are ignored.
//   multitask   per batch, each relation in turn runs its own forward pass,
//               backward pass and SGD update of the encoder and its head.
//               Later relations see parameters already moved by earlier ones.
//   multilabel  per batch, all heads run on shared encodings, the weighted
//               losses are summed, and one backward pass and one update
//               cover every parameter.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "relsim/autodiff.hpp"
#include "relsim/data.hpp"
#include "relsim/encoder.hpp"
#include "relsim/heads.hpp"

namespace relsim {

enum class Regime { single, multitask, multilabel };

// A training loss became NaN or infinite; no update was applied.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_string(Regime r);
Regime parse_regime(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;
};

struct ModelState {
  Vocabulary vocab;
  EncoderParams encoder;
  std::vector<RelationSpec> relations;  // presentation order for multitask
  std::map<std::string, HeadParams> heads;

  // The encoder is drawn from the seed alone and each head from the seed and
  // its relation name, so runs that share a seed start from the same weights
  // whatever subset of relations they carry.
  static ModelState init(Vocabulary vocab, std::vector<RelationSpec> relations, const ModelConfig& config,
                         std::uint64_t seed);

  const RelationSpec& relation(const std::string& name) const;
  HeadParams& head(const std::string& name);
  const HeadParams& head(const std::string& name) const;

  std::vector<ad::Parameter*> encoder_params() { return encoder.trainable(); }
  // Trainable encoder parameters followed by the named head's parameters.
  std::vector<ad::Parameter*> params_for(const std::string& relation);
  std::vector<ad::Parameter*> all_trainable();
};

// Target of one relation for one example: a sparse distribution for scored
// relations, a class index for categorical ones.
using Target = std::variant<std::vector<double>, std::size_t>;

// A PairExample mapped through a vocabulary, with precomputed targets.
struct EncodedPair {
  std::vector<int> left;
  std::vector<int> right;
  std::map<std::string, Target> targets;
  std::map<std::string, double> gold;  // raw score, or class index
  std::size_t index = 0;               // position in the source list
};

// Relations missing from an example's labels are left out of its targets;
// batch_loss reports them.
std::vector<EncodedPair> encode_examples(std::span<const PairExample> examples, const Vocabulary& vocab,
                                         std::span<const RelationSpec> relations);

// Instrumentation for the cost comparison between regimes.
struct StepCounters {
  std::size_t forward_passes = 0;   // batch-level head forwards
  std::size_t backward_passes = 0;  // tape backward() calls
  std::size_t encoder_passes = 0;   // sentence-pair encodings
  std::size_t updates = 0;          // SGD steps

  bool operator==(const StepCounters&) const = default;
};

struct TrainConfig {
  Regime regime = Regime::multilabel;
  std::string single_relation;  // regime == single
  double lr = 0.5;
  int epochs = 10;
  std::size_t batch_size = 16;
  std::map<std::string, double> loss_weights;  // default 1.0
  std::uint64_t seed = 1;
  bool shuffle = true;

  double weight(const std::string& relation) const;
  void validate() const;
};

// Encodings of every pair in a batch, shared by all heads in one graph.
struct BatchEncoding {
  std::vector<ad::Tensor> features;
};

BatchEncoding encode_batch(ad::Tape& tape, std::span<const EncodedPair> batch, const ModelState& state,
                           StepCounters* counters = nullptr);

// Mean loss of one relation over a batch whose encodings already exist.
ad::Tensor relation_loss(ad::Tape& tape, const BatchEncoding& encoding, std::span<const EncodedPair> batch,
                         const std::string& relation, const ModelState& state, StepCounters* counters = nullptr);

// Encodes the batch and returns the mean loss of one relation.
ad::Tensor batch_loss(ad::Tape& tape, std::span<const EncodedPair> batch, const std::string& relation,
                      const ModelState& state, StepCounters* counters = nullptr);

// Weighted sum of per-relation losses over shared encodings.
ad::Tensor multilabel_loss(ad::Tape& tape, std::span<const EncodedPair> batch, const ModelState& state,
                           const TrainConfig& config, StepCounters* counters = nullptr);

void step_single(std::span<const EncodedPair> batch, const std::string& relation, ModelState& state,
                 const TrainConfig& config, StepCounters* counters = nullptr);

// Called after each multitask sub-step with the relation just applied.
using SubStepObserver = std::function<void(const std::string& relation, const ModelState& state)>;

void step_multitask(std::span<const EncodedPair> batch, ModelState& state, const TrainConfig& config,
                    StepCounters* counters = nullptr, const SubStepObserver& observer = {});

void step_multilabel(std::span<const EncodedPair> batch, ModelState& state, const TrainConfig& config,
                     StepCounters* counters = nullptr);

// Per-relation predictions: decoded scores, or class indices as doubles.
std::map<std::string, std::vector<double>> predict(const ModelState& state, std::span<const EncodedPair> examples);

// Metric per relation of the state on labelled examples.
std::map<std::string, double> evaluate(const ModelState& state, std::span<const EncodedPair> examples);

struct TrainHistory {
  std::vector<std::map<std::string, double>> dev_metrics;  // one entry per epoch
};

// Called after each epoch (1-based) with the current state.
using EpochObserver = std::function<void(int epoch, const ModelState& state)>;

// Runs config.epochs epochs of shuffled mini-batches (last short batch
// kept). Dev metrics are recorded per epoch when `dev` is nonempty. The
// shuffle for epoch e depends only on the seed and e, so the state after
// epoch e is the same whatever config.epochs is.
TrainHistory train(std::span<const EncodedPair> train_set, ModelState& state, const TrainConfig& config,
                   std::span<const EncodedPair> dev = {}, StepCounters* counters = nullptr,
                   const EpochObserver& observer = {});

}  // namespace relsim
