#pragma once

// Experiment configuration: a line-oriented "key = value" file, command-line
// overrides applied through the same setter, and a manifest writer whose
// output parses back to an equal configuration.
//
//   # comment
//   dataset = data/activity        (directory with train.tsv, dev.tsv, test.tsv)
//   preset = activity
//   regimes = multilabel, single, multitask
//   lr = 0.5
//   loss_weight.SIM = 2
//   relations = SIM:0:4:spearman, entail:categorical:a|b|c:accuracy
//
// With no dataset the synthetic generator is used (keys synthetic.*).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "relsim/data.hpp"
#include "relsim/evaluation.hpp"
#include "relsim/regimes.hpp"

namespace relsim {

struct ExperimentConfig {
  std::string dataset;  // empty: synthetic
  std::string preset;   // activity | sick | typed | synthetic
  std::vector<RelationSpec> relations;  // overrides the preset when nonempty
  SyntheticConfig synthetic = default_synthetic();

  std::vector<Regime> regimes{Regime::multilabel, Regime::single, Regime::multitask};
  TrainConfig train;
  ModelConfig model;
  std::string word_vectors;
  int min_count = 1;

  std::size_t runs = 30;
  std::vector<double> lr_grid{0.1, 0.5, 1.0, 5.0};
  std::vector<int> epoch_grid{10, 20};
  std::size_t tune_runs = 1;

  std::size_t jobs = 0;  // 0: number of available processors
  std::string out = "relsim-out";
  ComparisonOptions comparison;

  static SyntheticConfig default_synthetic();

  // Relations in use: explicit list, else the preset's, else the
  // synthetic generator's.
  std::vector<RelationSpec> resolved_relations() const;
  std::size_t resolved_jobs() const;
  std::vector<std::uint64_t> seeds() const;  // train.seed + i for i < runs
  void validate() const;
};

// Relation list of a named preset; throws ConfigError for unknown names.
std::vector<RelationSpec> preset_relations(const std::string& name);

// Sets one key. Throws ConfigError naming the key on unknown keys or
// malformed values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

// "name:min:max:metric" or "name:categorical:c1|c2|...:metric".
RelationSpec parse_relation(const std::string& text);
std::string format_relation(const RelationSpec& spec);

inline constexpr const char* kVersion = "relsim 0.1.0";

// Every setting in canonical form plus the seed list and version string.
// Parsing the result reproduces the configuration.
void write_manifest(std::ostream& out, const ExperimentConfig& config);

}  // namespace relsim
