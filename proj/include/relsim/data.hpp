#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "relsim/encoder.hpp"
#include "relsim/heads.hpp"

namespace relsim {

// Float for scored relations, class name for categorical ones.
using Label = std::variant<double, std::string>;

struct PairExample {
  TokenSeq left;
  TokenSeq right;
  std::map<std::string, Label> labels;

  bool operator==(const PairExample&) const = default;
};

struct DatasetBundle {
  std::vector<RelationSpec> specs;
  std::vector<PairExample> train;
  std::vector<PairExample> dev;
  std::vector<PairExample> test;
  std::string provenance;

  const RelationSpec& spec(const std::string& name) const;

  // Throws DataError when a (left, right) pair appears in two splits or a
  // label is missing or out of range.
  void validate() const;
};

// Checks one example against the specs; `where` prefixes error messages.
void validate_example(const PairExample& ex, std::span<const RelationSpec> specs, const std::string& where);

// Canonical TSV: header "sent1\tsent2\t<rel>...", one pair per line.
std::vector<PairExample> load_pairs_tsv(const std::filesystem::path& path, std::span<const RelationSpec> specs);
std::vector<PairExample> read_pairs_tsv(std::istream& in, std::span<const RelationSpec> specs,
                                        const std::string& source = "<stream>");
void write_pairs_tsv(const std::filesystem::path& path, std::span<const PairExample> examples,
                     std::span<const RelationSpec> specs);
void write_pairs_tsv(std::ostream& out, std::span<const PairExample> examples, std::span<const RelationSpec> specs);

// Shortest decimal literal that parses back to the same double.
std::string format_score(double v);

// Seeded shuffle, then consecutive slices of the given sizes. Sizes may sum
// to less than the input; the remainder is dropped.
std::vector<std::vector<PairExample>> split_dataset(std::span<const PairExample> examples,
                                                    std::span<const std::size_t> counts, std::uint64_t seed);
// Fractions are converted to counts by flooring; the last slice absorbs the
// rounding remainder when the fractions sum to 1.
std::vector<std::vector<PairExample>> split_dataset_fractions(std::span<const PairExample> examples,
                                                              std::span<const double> fractions, std::uint64_t seed);

// Joins the nonempty fields in the order title, creator, subject,
// description, then the rest in input order, separated by ". ", with
// whitespace runs collapsed.
std::string concat_metadata(std::span<const std::pair<std::string, std::string>> fields);

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t n_pairs = 1000;
  std::vector<RelationSpec> relations;
  double correlation = 0.7;
  std::size_t vocab_size = 200;
  std::size_t min_length = 4;
  std::size_t max_length = 10;
  // Noise standard deviation as a fraction of each score range.
  double noise = 0.05;
  // Split sizes; train + dev + test must not exceed n_pairs.
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

// Noiseless scores for one generated pair, per relation, in [0, 1].
struct SyntheticScores {
  std::vector<double> overlap;   // Jaccard over each relation's token subset
  std::vector<double> noiseless; // mixed, normalized
};

// Relation r's statistic is Jaccard overlap restricted to the r-th block of
// a partition of the vocabulary. Relation 0 uses its overlap directly;
// relation r > 0 mixes it with relation 0's as
//   (rho * J_0 + sqrt(1 - rho^2) * J_r) / (rho + sqrt(1 - rho^2)).
SyntheticScores synthetic_scores(const TokenSeq& left, const TokenSeq& right, std::size_t n_relations,
                                 std::size_t vocab_size, double correlation);

std::string synthetic_token(std::size_t index);

// Random topic-word pairs whose scored labels are learnable functions of
// token overlap. With train/dev/test all zero, everything goes to train.
DatasetBundle generate_synthetic(const SyntheticConfig& config);

// Scored relations named rel1..relN over 0..4, evaluated with Spearman.
std::vector<RelationSpec> synthetic_relations(std::size_t n);

}  // namespace relsim
