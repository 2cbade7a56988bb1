#include "relsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "relsim/error.hpp"

namespace relsim {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) { return format_score(v); }

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += sep;
    out += f(xs[i]);
  }
  return out;
}

std::string policy_name(AnnotationPolicy p) { return p == AnnotationPolicy::caption ? "caption" : "three_way"; }

}  // namespace

SyntheticConfig ExperimentConfig::default_synthetic() {
  SyntheticConfig s;
  s.seed = 1;
  s.n_pairs = 1700;
  s.correlation = 0.7;
  s.train = 1000;
  s.dev = 200;
  s.test = 500;
  s.relations = synthetic_relations(2);
  return s;
}

std::vector<RelationSpec> preset_relations(const std::string& name) {
  if (name == "activity") {
    return {RelationSpec::scored("SIM", 0, 4, Metric::spearman), RelationSpec::scored("REL", 0, 4, Metric::spearman),
            RelationSpec::scored("MA", 0, 4, Metric::spearman), RelationSpec::scored("PAC", -2, 2, Metric::spearman)};
  }
  if (name == "sick") {
    return {RelationSpec::scored("relatedness", 1, 5, Metric::pearson),
            RelationSpec::categorical("entailment", {"entailment", "contradiction", "neutral"}, Metric::accuracy)};
  }
  if (name == "typed") {
    std::vector<RelationSpec> out;
    for (const char* r : {"general", "author", "people", "time", "location", "event", "subject", "description"}) {
      out.push_back(RelationSpec::scored(r, 0, 5, Metric::pearson));
    }
    return out;
  }
  if (name == "synthetic") return synthetic_relations(2);
  throw ConfigError("unknown preset '" + name + "' (expected activity, sick, typed or synthetic)");
}

std::vector<RelationSpec> ExperimentConfig::resolved_relations() const {
  if (!relations.empty()) return relations;
  if (!preset.empty() && preset != "synthetic") return preset_relations(preset);
  return synthetic.relations;
}

std::size_t ExperimentConfig::resolved_jobs() const {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  std::vector<std::uint64_t> out(runs);
  for (std::size_t i = 0; i < runs; ++i) out[i] = train.seed + i;
  return out;
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (lr_grid.empty() || epoch_grid.empty()) throw ConfigError("hyperparameter grid is empty");
  for (double lr : lr_grid) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr grid values must be finite and non-negative");
  }
  for (int e : epoch_grid) {
    if (e < 1) throw ConfigError("epoch grid values must be positive");
  }
  if (tune_runs < 1) throw ConfigError("tune_runs must be at least 1");
  if (regimes.empty()) throw ConfigError("no regime selected");
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  if (!(comparison.alpha > 0.0 && comparison.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (model.encoder.word_dim == 0 || model.encoder.hidden == 0) throw ConfigError("encoder sizes must be positive");
  if (!model.head.single_layer && model.head.hidden == 0) throw ConfigError("head hidden size must be positive");
  train.validate();
  const auto rels = resolved_relations();
  if (rels.empty()) throw ConfigError("no relations configured");
  for (const auto& r : rels) r.validate();
  for (const auto& [name, w] : train.loss_weights) {
    if (std::none_of(rels.begin(), rels.end(), [&](const RelationSpec& r) { return r.name == name; })) {
      throw ConfigError("loss weight given for unknown relation " + name);
    }
  }
  if (dataset.empty()) {
    if (synthetic.train + synthetic.dev + synthetic.test > synthetic.n_pairs) {
      throw ConfigError("synthetic split sizes exceed synthetic.pairs");
    }
    for (const auto& r : rels) {
      if (!r.is_scored()) throw ConfigError("synthetic data supports scored relations only");
    }
  }
}

RelationSpec parse_relation(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ':')) parts.push_back(trim(cur));
  const std::string key = "relations";
  if (parts.size() != 4 || parts[0].empty()) {
    throw ConfigError(key + ": expected name:min:max:metric or name:categorical:a|b|c:metric, got '" + text + "'");
  }
  const Metric metric = parse_metric(parts[3]);
  RelationSpec spec = parts[1] == "categorical"
                          ? RelationSpec::categorical(parts[0], split_list(parts[2], '|'), metric)
                          : RelationSpec::scored(parts[0], to_double(key, parts[1]), to_double(key, parts[2]), metric);
  spec.validate();
  return spec;
}

std::string format_relation(const RelationSpec& spec) {
  if (spec.is_scored()) {
    return spec.name + ":" + fmt(spec.range().min) + ":" + fmt(spec.range().max) + ":" + to_string(spec.metric);
  }
  return spec.name + ":categorical:" + join(spec.classes().classes, [](const std::string& c) { return c; }, "|") + ":" +
         to_string(spec.metric);
}

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "dataset") c.dataset = v;
  else if (key == "preset") {
    if (!v.empty()) preset_relations(v);
    c.preset = v;
  } else if (key == "relations") {
    c.relations.clear();
    for (const auto& r : split_list(v, ',')) c.relations.push_back(parse_relation(r));
  } else if (key == "regimes") {
    c.regimes.clear();
    for (const auto& r : split_list(v, ',')) {
      const Regime g = parse_regime(r);
      if (std::find(c.regimes.begin(), c.regimes.end(), g) == c.regimes.end()) c.regimes.push_back(g);
    }
  } else if (key == "lr") c.train.lr = to_double(key, v);
  else if (key == "epochs") c.train.epochs = to_int<int>(key, v);
  else if (key == "batch_size") c.train.batch_size = to_int<std::size_t>(key, v);
  else if (key == "seed") c.train.seed = to_int<std::uint64_t>(key, v);
  else if (key == "shuffle") c.train.shuffle = to_bool(key, v);
  else if (key.starts_with("loss_weight.")) {
    const std::string rel = key.substr(std::string("loss_weight.").size());
    if (rel.empty()) throw ConfigError("loss_weight needs a relation name");
    c.train.loss_weights[rel] = to_double(key, v);
  } else if (key == "word_dim") c.model.encoder.word_dim = to_int<std::size_t>(key, v);
  else if (key == "hidden") c.model.encoder.hidden = to_int<std::size_t>(key, v);
  else if (key == "freeze_embeddings") c.model.encoder.freeze_embeddings = to_bool(key, v);
  else if (key == "head_hidden") c.model.head.hidden = to_int<std::size_t>(key, v);
  else if (key == "head_single_layer") c.model.head.single_layer = to_bool(key, v);
  else if (key == "word_vectors") c.word_vectors = v;
  else if (key == "min_count") c.min_count = to_int<int>(key, v);
  else if (key == "runs") c.runs = to_int<std::size_t>(key, v);
  else if (key == "lr_grid") {
    c.lr_grid.clear();
    for (const auto& x : split_list(v, ',')) c.lr_grid.push_back(to_double(key, x));
  } else if (key == "epoch_grid") {
    c.epoch_grid.clear();
    for (const auto& x : split_list(v, ',')) c.epoch_grid.push_back(to_int<int>(key, x));
  } else if (key == "tune_runs") c.tune_runs = to_int<std::size_t>(key, v);
  else if (key == "jobs") c.jobs = to_int<std::size_t>(key, v);
  else if (key == "out") c.out = v;
  else if (key == "alpha") c.comparison.alpha = to_double(key, v);
  else if (key == "ttest") c.comparison.test = parse_ttest_kind(v);
  else if (key == "annotation") {
    if (v == "caption") c.comparison.policy = AnnotationPolicy::caption;
    else if (v == "three_way") c.comparison.policy = AnnotationPolicy::three_way;
    else throw ConfigError("annotation: expected caption or three_way, got '" + v + "'");
  } else if (key == "synthetic.seed") c.synthetic.seed = to_int<std::uint64_t>(key, v);
  else if (key == "synthetic.pairs") c.synthetic.n_pairs = to_int<std::size_t>(key, v);
  else if (key == "synthetic.relations") {
    const auto n = to_int<std::size_t>(key, v);
    if (n == 0) throw ConfigError("synthetic.relations must be positive");
    c.synthetic.relations = synthetic_relations(n);
  } else if (key == "synthetic.correlation") c.synthetic.correlation = to_double(key, v);
  else if (key == "synthetic.vocab") c.synthetic.vocab_size = to_int<std::size_t>(key, v);
  else if (key == "synthetic.min_length") c.synthetic.min_length = to_int<std::size_t>(key, v);
  else if (key == "synthetic.max_length") c.synthetic.max_length = to_int<std::size_t>(key, v);
  else if (key == "synthetic.noise") c.synthetic.noise = to_double(key, v);
  else if (key == "synthetic.train") c.synthetic.train = to_int<std::size_t>(key, v);
  else if (key == "synthetic.dev") c.synthetic.dev = to_int<std::size_t>(key, v);
  else if (key == "synthetic.test") c.synthetic.test = to_int<std::size_t>(key, v);
  else if (key == "seeds" || key == "version") {
    // Written by manifests for the record; both follow from other keys.
  } else throw ConfigError("unknown configuration key '" + key + "'");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_setting(c, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, path);
}

void write_manifest(std::ostream& out, const ExperimentConfig& c) {
  auto kv = [&out](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  out << "# " << kVersion << " run manifest\n";
  kv("version", kVersion);
  kv("dataset", c.dataset);
  kv("preset", c.preset);
  kv("relations", join(c.resolved_relations(), format_relation));
  kv("synthetic.seed", std::to_string(c.synthetic.seed));
  kv("synthetic.pairs", std::to_string(c.synthetic.n_pairs));
  kv("synthetic.correlation", fmt(c.synthetic.correlation));
  kv("synthetic.vocab", std::to_string(c.synthetic.vocab_size));
  kv("synthetic.min_length", std::to_string(c.synthetic.min_length));
  kv("synthetic.max_length", std::to_string(c.synthetic.max_length));
  kv("synthetic.noise", fmt(c.synthetic.noise));
  kv("synthetic.train", std::to_string(c.synthetic.train));
  kv("synthetic.dev", std::to_string(c.synthetic.dev));
  kv("synthetic.test", std::to_string(c.synthetic.test));
  kv("regimes", join(c.regimes, [](Regime r) { return to_string(r); }));
  kv("lr", fmt(c.train.lr));
  kv("epochs", std::to_string(c.train.epochs));
  kv("batch_size", std::to_string(c.train.batch_size));
  kv("seed", std::to_string(c.train.seed));
  kv("shuffle", c.train.shuffle ? "true" : "false");
  for (const auto& [rel, w] : c.train.loss_weights) kv("loss_weight." + rel, fmt(w));
  kv("word_dim", std::to_string(c.model.encoder.word_dim));
  kv("hidden", std::to_string(c.model.encoder.hidden));
  kv("freeze_embeddings", c.model.encoder.freeze_embeddings ? "true" : "false");
  kv("head_hidden", std::to_string(c.model.head.hidden));
  kv("head_single_layer", c.model.head.single_layer ? "true" : "false");
  kv("word_vectors", c.word_vectors);
  kv("min_count", std::to_string(c.min_count));
  kv("runs", std::to_string(c.runs));
  kv("lr_grid", join(c.lr_grid, fmt));
  kv("epoch_grid", join(c.epoch_grid, [](int e) { return std::to_string(e); }));
  kv("tune_runs", std::to_string(c.tune_runs));
  kv("jobs", std::to_string(c.jobs));
  kv("out", c.out);
  kv("alpha", fmt(c.comparison.alpha));
  kv("ttest", to_string(c.comparison.test));
  kv("annotation", policy_name(c.comparison.policy));
  kv("seeds", join(c.seeds(), [](std::uint64_t s) { return std::to_string(s); }));
}

}  // namespace relsim
