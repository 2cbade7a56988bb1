#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "relsim/autodiff.hpp"
#include "relsim/rng.hpp"

namespace relsim {

enum class Metric { spearman, pearson, accuracy };

std::string to_string(Metric m);
Metric parse_metric(const std::string& name);

// A real-valued score in [min, max], predicted as a distribution over
// `bins` evenly spaced points.
struct Scored {
  double min = 0.0;
  double max = 1.0;
  std::size_t bins = 2;
};

struct Categorical {
  std::vector<std::string> classes;
};

struct RelationSpec {
  std::string name;
  std::variant<Scored, Categorical> kind;
  Metric metric = Metric::spearman;

  // Scored relation with one bin per integer score in [min, max].
  static RelationSpec scored(std::string name, double min, double max, Metric metric);
  static RelationSpec categorical(std::string name, std::vector<std::string> classes, Metric metric = Metric::accuracy);

  bool is_scored() const { return std::holds_alternative<Scored>(kind); }
  const Scored& range() const { return std::get<Scored>(kind); }
  const Categorical& classes() const { return std::get<Categorical>(kind); }
  std::size_t output_size() const;

  // Throws ConfigError when min >= max, bins < 2, or classes are empty or
  // repeated.
  void validate() const;

  // Index of a class label; throws DataError naming the label otherwise.
  std::size_t class_index(const std::string& label) const;
};

struct HeadConfig {
  std::size_t hidden = 50;
  // Drop the hidden layer: features go straight to the output layer.
  bool single_layer = false;
};

struct HeadParams {
  std::optional<ad::Parameter> hidden_w;  // input x hidden
  std::optional<ad::Parameter> hidden_b;
  ad::Parameter out_w;  // hidden (or input) x outputs
  ad::Parameter out_b;

  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static HeadParams init(const std::string& relation, std::size_t input, std::size_t outputs, const HeadConfig& config,
                         Rng& rng);

  std::size_t input_size() const;
  std::vector<ad::Parameter*> params();
  std::vector<const ad::Parameter*> params() const;
};

// [ |u - v| ; u * v ]
ad::Tensor pair_features(ad::Tensor u, ad::Tensor v);

// Two-bin distribution over 1..K whose expectation is the affine image of
// y. Throws DataError naming `relation` when y is outside [min, max].
std::vector<double> sparse_target(double y, const Scored& range, const std::string& relation = "score");

// Dense layer(s) then log_softmax. The same network serves both relation
// kinds; only the loss and the decoding differ.
ad::Tensor head_forward(ad::Tensor features, const HeadParams& head, bool trainable = true);
inline ad::Tensor regression_forward(ad::Tensor features, const HeadParams& head) { return head_forward(features, head); }
inline ad::Tensor classification_forward(ad::Tensor features, const HeadParams& head) {
  return head_forward(features, head);
}

// Expected bin index mapped back to [min, max].
double decode_score(std::span<const double> distribution, const Scored& range);

// KL(target || exp(log_pred)) with 0 log 0 = 0.
ad::Tensor kl_loss(std::span<const double> target, ad::Tensor log_pred);

// -log p(true class).
ad::Tensor ce_loss(std::size_t true_class, ad::Tensor log_probs);

// Argmax, first index on ties.
std::size_t decode_class(std::span<const double> log_probs);

}  // namespace relsim
