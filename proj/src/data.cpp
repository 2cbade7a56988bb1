#include "relsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "relsim/error.hpp"
#include "relsim/rng.hpp"

namespace relsim {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

std::string pair_key(const PairExample& ex) { return join_tokens(ex.left) + '\t' + join_tokens(ex.right); }

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string lowercase(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace

const RelationSpec& DatasetBundle::spec(const std::string& name) const {
  for (const auto& s : specs) {
    if (s.name == name) return s;
  }
  throw ConfigError("dataset has no relation named '" + name + "'");
}

void validate_example(const PairExample& ex, std::span<const RelationSpec> specs, const std::string& where) {
  if (ex.left.empty() || ex.right.empty()) throw DataError(where + ": empty sentence");
  for (const auto& spec : specs) {
    auto it = ex.labels.find(spec.name);
    if (it == ex.labels.end()) throw DataError(where + ": missing label for relation " + spec.name);
    if (spec.is_scored()) {
      const double* y = std::get_if<double>(&it->second);
      if (y == nullptr) throw DataError(where + ": relation " + spec.name + " expects a numeric score");
      const Scored& r = spec.range();
      if (!(*y >= r.min && *y <= r.max)) {
        throw DataError(where + ": relation " + spec.name + " score " + format_score(*y) + " outside [" +
                        format_score(r.min) + ", " + format_score(r.max) + "]");
      }
    } else {
      const std::string* c = std::get_if<std::string>(&it->second);
      if (c == nullptr) throw DataError(where + ": relation " + spec.name + " expects a class label");
      try {
        spec.class_index(*c);
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
  }
}

void DatasetBundle::validate() const {
  const std::pair<const char*, const std::vector<PairExample>*> splits[] = {{"train", &train}, {"dev", &dev}, {"test", &test}};
  std::map<std::string, std::string> owner;
  for (const auto& [name, rows] : splits) {
    std::set<std::string> local;
    for (std::size_t i = 0; i < rows->size(); ++i) {
      validate_example((*rows)[i], specs, std::string(name) + " example " + std::to_string(i + 1));
      const std::string key = pair_key((*rows)[i]);
      if (!local.insert(key).second) continue;
      auto [it, inserted] = owner.emplace(key, name);
      if (!inserted) {
        throw DataError(std::string("pair appears in both ") + it->second + " and " + name + " splits: " + key);
      }
    }
  }
}

std::string format_score(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<PairExample> read_pairs_tsv(std::istream& in, std::span<const RelationSpec> specs, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header line");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_tabs(line);
  const std::size_t columns = 2 + specs.size();
  bool header_ok = header.size() == columns && header[0] == "sent1" && header[1] == "sent2";
  for (std::size_t r = 0; header_ok && r < specs.size(); ++r) header_ok = header[2 + r] == specs[r].name;
  if (!header_ok) {
    std::string expected = "sent1\tsent2";
    for (const auto& s : specs) expected += "\t" + s.name;
    throw DataError(source + ":1: header does not match relations; expected '" + expected + "'");
  }

  std::vector<PairExample> out;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cols = split_tabs(line);
    if (cols.size() != columns) {
      throw DataError(where + ": expected " + std::to_string(columns) + " columns, found " + std::to_string(cols.size()));
    }
    PairExample ex;
    ex.left = tokenize(cols[0]);
    ex.right = tokenize(cols[1]);
    for (std::size_t r = 0; r < specs.size(); ++r) {
      const RelationSpec& spec = specs[r];
      const std::string& field = cols[2 + r];
      if (spec.is_scored()) {
        double y = 0.0;
        if (!parse_double(field, y)) throw DataError(where + ": relation " + spec.name + ": malformed score '" + field + "'");
        ex.labels.emplace(spec.name, y);
      } else {
        ex.labels.emplace(spec.name, field);
      }
    }
    validate_example(ex, specs, where);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<PairExample> load_pairs_tsv(const std::filesystem::path& path, std::span<const RelationSpec> specs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_pairs_tsv(in, specs, path.string());
}

void write_pairs_tsv(std::ostream& out, std::span<const PairExample> examples, std::span<const RelationSpec> specs) {
  out << "sent1\tsent2";
  for (const auto& s : specs) out << '\t' << s.name;
  out << '\n';
  for (const auto& ex : examples) {
    out << join_tokens(ex.left) << '\t' << join_tokens(ex.right);
    for (const auto& s : specs) {
      const Label& l = ex.labels.at(s.name);
      out << '\t';
      if (const double* y = std::get_if<double>(&l)) {
        out << format_score(*y);
      } else {
        out << std::get<std::string>(l);
      }
    }
    out << '\n';
  }
}

void write_pairs_tsv(const std::filesystem::path& path, std::span<const PairExample> examples,
                     std::span<const RelationSpec> specs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_pairs_tsv(out, examples, specs);
}

std::vector<std::vector<PairExample>> split_dataset(std::span<const PairExample> examples,
                                                    std::span<const std::size_t> counts, std::uint64_t seed) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total > examples.size()) {
    throw DataError("split_dataset: requested " + std::to_string(total) + " examples but only " +
                    std::to_string(examples.size()) + " available");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<PairExample>> out;
  std::size_t pos = 0;
  for (auto c : counts) {
    auto& part = out.emplace_back();
    part.reserve(c);
    for (std::size_t i = 0; i < c; ++i) part.push_back(examples[order[pos++]]);
  }
  return out;
}

std::vector<std::vector<PairExample>> split_dataset_fractions(std::span<const PairExample> examples,
                                                              std::span<const double> fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw DataError("split_dataset: fractions must be non-negative");
    sum += f;
  }
  if (sum > 1.0 + 1e-12) throw DataError("split_dataset: fractions sum to more than 1");
  std::vector<std::size_t> counts;
  std::size_t used = 0;
  for (double f : fractions) {
    counts.push_back(static_cast<std::size_t>(std::floor(f * static_cast<double>(examples.size()))));
    used += counts.back();
  }
  if (!counts.empty() && std::fabs(sum - 1.0) <= 1e-12) counts.back() += examples.size() - used;
  return split_dataset(examples, counts, seed);
}

std::string concat_metadata(std::span<const std::pair<std::string, std::string>> fields) {
  static const char* const kOrder[] = {"title", "creator", "subject", "description"};
  std::vector<std::string> parts;
  std::vector<bool> used(fields.size(), false);
  for (const char* key : kOrder) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (used[i] || lowercase(fields[i].first) != key) continue;
      used[i] = true;
      if (auto text = collapse_whitespace(fields[i].second); !text.empty()) parts.push_back(std::move(text));
    }
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (used[i]) continue;
    if (auto text = collapse_whitespace(fields[i].second); !text.empty()) parts.push_back(std::move(text));
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += ". ";
    out += parts[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::string synthetic_token(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03zu", index);
  return buf;
}

std::vector<RelationSpec> synthetic_relations(std::size_t n) {
  std::vector<RelationSpec> out;
  for (std::size_t r = 0; r < n; ++r) out.push_back(RelationSpec::scored("rel" + std::to_string(r + 1), 0.0, 4.0, Metric::spearman));
  return out;
}

namespace {

// Block of a synthetic token, or npos for foreign tokens.
std::size_t token_block(const std::string& tok, std::size_t n_blocks, std::size_t vocab_size) {
  if (tok.size() < 2 || tok[0] != 'w') return std::string::npos;
  std::size_t idx = 0;
  auto [ptr, ec] = std::from_chars(tok.data() + 1, tok.data() + tok.size(), idx);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || idx >= vocab_size) return std::string::npos;
  return idx % n_blocks;
}

}  // namespace

SyntheticScores synthetic_scores(const TokenSeq& left, const TokenSeq& right, std::size_t n_relations,
                                 std::size_t vocab_size, double correlation) {
  std::vector<std::set<std::string>> l(n_relations), r(n_relations);
  for (const auto& t : left) {
    if (auto b = token_block(t, n_relations, vocab_size); b != std::string::npos) l[b].insert(t);
  }
  for (const auto& t : right) {
    if (auto b = token_block(t, n_relations, vocab_size); b != std::string::npos) r[b].insert(t);
  }
  SyntheticScores s;
  for (std::size_t b = 0; b < n_relations; ++b) {
    std::size_t inter = 0;
    for (const auto& t : l[b]) inter += r[b].count(t);
    const std::size_t uni = l[b].size() + r[b].size() - inter;
    s.overlap.push_back(uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
  }
  const double rho = correlation;
  const double rest = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (std::size_t b = 0; b < n_relations; ++b) {
    s.noiseless.push_back(b == 0 ? s.overlap[0] : (rho * s.overlap[0] + rest * s.overlap[b]) / (rho + rest));
  }
  return s;
}

DatasetBundle generate_synthetic(const SyntheticConfig& config) {
  if (!(config.correlation >= 0.0 && config.correlation <= 1.0)) {
    throw ConfigError("synthetic correlation must lie in [0, 1]");
  }
  if (config.relations.empty()) throw ConfigError("synthetic dataset needs at least one relation");
  for (const auto& spec : config.relations) {
    spec.validate();
    if (!spec.is_scored()) throw ConfigError("synthetic relations must be scored: " + spec.name);
  }
  const std::size_t n_rel = config.relations.size();
  if (config.vocab_size < n_rel) throw ConfigError("synthetic vocabulary smaller than relation count");
  if (config.min_length < 1 || config.min_length > config.max_length) throw ConfigError("bad synthetic sentence lengths");

  Rng rng(mix_seed(config.seed, 101));
  auto random_length = [&] { return config.min_length + rng.index(config.max_length - config.min_length + 1); };
  auto random_token = [&] { return rng.index(config.vocab_size); };
  auto random_block0_token = [&] { return rng.index((config.vocab_size + n_rel - 1) / n_rel) * n_rel; };

  std::vector<PairExample> all;
  std::unordered_set<std::string> seen;
  while (all.size() < config.n_pairs) {
    // Left sentence: at least one token from relation 0's block.
    const std::size_t len_l = random_length();
    std::vector<std::size_t> left{random_block0_token()};
    while (left.size() < len_l) left.push_back(random_token());

    // Right sentence: copy left tokens per block with block-specific rates.
    std::vector<double> keep(n_rel);
    for (double& q : keep) q = rng.uniform();
    std::vector<std::size_t> right;
    for (std::size_t t : left) {
      if (rng.uniform() < keep[t % n_rel]) right.push_back(t);
    }
    const std::size_t len_r = random_length();
    rng.shuffle(right.begin(), right.end());
    if (right.size() > len_r) right.resize(len_r);
    while (right.size() < len_r) right.push_back(random_token());
    if (std::none_of(right.begin(), right.end(), [&](std::size_t t) { return t % n_rel == 0; })) {
      right[rng.index(right.size())] = random_block0_token();
    }
    rng.shuffle(left.begin(), left.end());
    rng.shuffle(right.begin(), right.end());

    PairExample ex;
    for (auto t : left) ex.left.push_back(synthetic_token(t));
    for (auto t : right) ex.right.push_back(synthetic_token(t));
    const SyntheticScores s = synthetic_scores(ex.left, ex.right, n_rel, config.vocab_size, config.correlation);
    for (std::size_t r = 0; r < n_rel; ++r) {
      const Scored& range = config.relations[r].range();
      const double z = std::clamp(s.noiseless[r] + config.noise * rng.normal(), 0.0, 1.0);
      ex.labels.emplace(config.relations[r].name, range.min + z * (range.max - range.min));
    }
    if (!seen.insert(pair_key(ex)).second) continue;
    all.push_back(std::move(ex));
  }

  DatasetBundle bundle;
  bundle.specs = config.relations;
  std::ostringstream prov;
  prov << "synthetic(seed=" << config.seed << ", n=" << config.n_pairs << ", relations=" << n_rel
       << ", correlation=" << format_score(config.correlation) << ")";
  bundle.provenance = prov.str();
  if (config.train + config.dev + config.test == 0) {
    bundle.train = std::move(all);
  } else {
    const std::size_t counts[] = {config.train, config.dev, config.test};
    auto parts = split_dataset(all, counts, mix_seed(config.seed, 102));
    bundle.train = std::move(parts[0]);
    bundle.dev = std::move(parts[1]);
    bundle.test = std::move(parts[2]);
  }
  bundle.validate();
  return bundle;
}

}  // namespace relsim
