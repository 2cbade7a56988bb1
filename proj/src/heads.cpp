#include "relsim/heads.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "relsim/error.hpp"

namespace relsim {

std::string to_string(Metric m) {
  switch (m) {
    case Metric::spearman: return "spearman";
    case Metric::pearson: return "pearson";
    case Metric::accuracy: return "accuracy";
  }
  return "unknown";
}

Metric parse_metric(const std::string& name) {
  if (name == "spearman") return Metric::spearman;
  if (name == "pearson") return Metric::pearson;
  if (name == "accuracy") return Metric::accuracy;
  throw ConfigError("unknown metric '" + name + "'");
}

RelationSpec RelationSpec::scored(std::string name, double min, double max, Metric metric) {
  RelationSpec s;
  s.name = std::move(name);
  const double span = std::floor(max) - std::ceil(min);
  const auto bins = span >= 1.0 ? static_cast<std::size_t>(span) + 1 : std::size_t{2};
  s.kind = Scored{min, max, bins};
  s.metric = metric;
  s.validate();
  return s;
}

RelationSpec RelationSpec::categorical(std::string name, std::vector<std::string> classes, Metric metric) {
  RelationSpec s;
  s.name = std::move(name);
  s.kind = Categorical{std::move(classes)};
  s.metric = metric;
  s.validate();
  return s;
}

std::size_t RelationSpec::output_size() const {
  return is_scored() ? range().bins : classes().classes.size();
}

void RelationSpec::validate() const {
  if (name.empty()) throw ConfigError("relation name must be nonempty");
  if (is_scored()) {
    const Scored& r = range();
    if (!(r.min < r.max)) throw ConfigError("relation " + name + ": min must be < max");
    if (r.bins < 2) throw ConfigError("relation " + name + ": need at least 2 bins");
    if (metric == Metric::accuracy) throw ConfigError("relation " + name + ": accuracy needs a categorical relation");
  } else {
    const auto& c = classes().classes;
    if (c.empty()) throw ConfigError("relation " + name + ": no classes");
    if (std::set<std::string>(c.begin(), c.end()).size() != c.size()) {
      throw ConfigError("relation " + name + ": duplicate class names");
    }
    if (metric != Metric::accuracy) throw ConfigError("relation " + name + ": categorical relations use accuracy");
  }
}

std::size_t RelationSpec::class_index(const std::string& label) const {
  const auto& c = classes().classes;
  auto it = std::find(c.begin(), c.end(), label);
  if (it == c.end()) throw DataError("relation " + name + ": unknown class label '" + label + "'");
  return static_cast<std::size_t>(it - c.begin());
}

HeadParams HeadParams::init(const std::string& relation, std::size_t input, std::size_t outputs,
                            const HeadConfig& config, Rng& rng) {
  auto uniform = [&](std::string name, ad::Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape.size());
    for (double& x : v) x = rng.uniform(-bound, bound);
    return ad::Parameter(std::move(name), shape, std::move(v));
  };
  HeadParams h;
  const std::string prefix = "head." + relation;
  std::size_t out_in = input;
  if (!config.single_layer) {
    h.hidden_w = uniform(prefix + ".hidden_w", ad::Shape(input, config.hidden), input);
    h.hidden_b = ad::Parameter(prefix + ".hidden_b", ad::Shape(config.hidden));
    out_in = config.hidden;
  }
  h.out_w = uniform(prefix + ".out_w", ad::Shape(out_in, outputs), out_in);
  h.out_b = ad::Parameter(prefix + ".out_b", ad::Shape(outputs));
  return h;
}

std::size_t HeadParams::input_size() const { return hidden_w ? hidden_w->shape.rows() : out_w.shape.rows(); }

std::vector<ad::Parameter*> HeadParams::params() {
  std::vector<ad::Parameter*> out;
  if (hidden_w) {
    out.push_back(&*hidden_w);
    out.push_back(&*hidden_b);
  }
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<const ad::Parameter*> HeadParams::params() const {
  std::vector<const ad::Parameter*> out;
  if (hidden_w) {
    out.push_back(&*hidden_w);
    out.push_back(&*hidden_b);
  }
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

ad::Tensor pair_features(ad::Tensor u, ad::Tensor v) {
  if (!(u.shape() == v.shape())) {
    throw ShapeError("pair_features: dimension mismatch " + u.shape().to_string() + " vs " + v.shape().to_string());
  }
  return ad::concat({ad::abs_elementwise(ad::sub(u, v)), ad::mul_elementwise(u, v)});
}

std::vector<double> sparse_target(double y, const Scored& range, const std::string& relation) {
  if (!(y >= range.min && y <= range.max)) {
    throw DataError("relation " + relation + ": score " + std::to_string(y) + " outside [" + std::to_string(range.min) +
                    ", " + std::to_string(range.max) + "]");
  }
  const std::size_t k = range.bins;
  const double t = 1.0 + (y - range.min) / (range.max - range.min) * static_cast<double>(k - 1);
  std::vector<double> p(k, 0.0);
  const double fl = std::floor(t);
  const auto lo = static_cast<std::size_t>(fl);  // 1-based bin
  if (lo >= k) {
    p[k - 1] = 1.0;
    return p;
  }
  p[lo - 1] = fl - t + 1.0;
  p[lo] = t - fl;
  return p;
}

ad::Tensor head_forward(ad::Tensor features, const HeadParams& head, bool trainable) {
  ad::Tape& tape = *features.tape();
  if (features.shape().size() != head.input_size()) {
    throw ShapeError("head: feature size " + std::to_string(features.shape().size()) + " does not match head input " +
                     std::to_string(head.input_size()));
  }
  ad::Tensor x = features;
  if (head.hidden_w) {
    x = ad::sigmoid(ad::add(ad::matmul(x, tape.param(*head.hidden_w, trainable)), tape.param(*head.hidden_b, trainable)));
  }
  return ad::log_softmax(ad::add(ad::matmul(x, tape.param(head.out_w, trainable)), tape.param(head.out_b, trainable)));
}

double decode_score(std::span<const double> distribution, const Scored& range) {
  double expected = 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < distribution.size(); ++j) {
    expected += static_cast<double>(j + 1) * distribution[j];
    total += distribution[j];
  }
  if (total > 0.0) expected /= total;
  const double y = range.min + (expected - 1.0) / static_cast<double>(range.bins - 1) * (range.max - range.min);
  return std::clamp(y, range.min, range.max);
}

ad::Tensor kl_loss(std::span<const double> target, ad::Tensor log_pred) {
  if (target.size() != log_pred.shape().size()) {
    throw ShapeError("kl_loss: target has " + std::to_string(target.size()) + " bins, prediction " +
                     log_pred.shape().to_string());
  }
  ad::Tape& tape = *log_pred.tape();
  double neg_entropy = 0.0;
  for (double p : target) {
    if (p > 0.0) neg_entropy += p * std::log(p);
  }
  const ad::Tensor p = tape.constant(log_pred.shape(), std::vector<double>(target.begin(), target.end()));
  const ad::Tensor cross = ad::sum(ad::mul_elementwise(p, log_pred));
  return ad::sub(tape.constant({neg_entropy}), cross);
}

ad::Tensor ce_loss(std::size_t true_class, ad::Tensor log_probs) {
  const std::size_t n = log_probs.shape().size();
  if (true_class >= n) {
    throw DataError("ce_loss: class index " + std::to_string(true_class) + " out of range for " + std::to_string(n) +
                    " classes");
  }
  std::vector<double> onehot(n, 0.0);
  onehot[true_class] = 1.0;
  const ad::Tensor mask = log_probs.tape()->constant(log_probs.shape(), std::move(onehot));
  return ad::scale(ad::sum(ad::mul_elementwise(mask, log_probs)), -1.0);
}

std::size_t decode_class(std::span<const double> log_probs) {
  return static_cast<std::size_t>(std::max_element(log_probs.begin(), log_probs.end()) - log_probs.begin());
}

}  // namespace relsim
