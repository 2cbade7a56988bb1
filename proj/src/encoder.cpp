#include "relsim/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <map>
#include <sstream>

#include "relsim/error.hpp"

namespace relsim {

namespace {

bool is_detached_punct(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '\'': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

// Length in bytes of a whitespace code point starting at s[i], or 0.
std::size_t whitespace_length(std::string_view s, std::size_t i) {
  const auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[i + k]); };
  const unsigned char c = b(0);
  if (c == ' ' || (c >= 0x09 && c <= 0x0d)) return 1;
  const std::size_t left = s.size() - i;
  if (c == 0xc2 && left >= 2 && (b(1) == 0x85 || b(1) == 0xa0)) return 2;  // NEL, NBSP
  if (c == 0xe1 && left >= 3 && b(1) == 0x9a && b(2) == 0x80) return 3;   // U+1680
  if (c == 0xe2 && left >= 3) {
    if (b(1) == 0x80 && ((b(2) >= 0x80 && b(2) <= 0x8a) || b(2) == 0xa8 || b(2) == 0xa9 || b(2) == 0xaf)) return 3;
    if (b(1) == 0x81 && b(2) == 0x9f) return 3;  // U+205F
  }
  if (c == 0xe3 && left >= 3 && b(1) == 0x80 && b(2) == 0x80) return 3;  // U+3000
  return 0;
}

double init_bound(std::size_t fan) { return 1.0 / std::sqrt(static_cast<double>(fan)); }

ad::Parameter uniform_param(std::string name, ad::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape.size());
  for (double& x : v) x = rng.uniform(-bound, bound);
  return {std::move(name), shape, std::move(v)};
}

// Random bias unless `fixed_bias` is given.
LstmGate init_gate(const std::string& name, std::size_t input, std::size_t hidden, std::optional<double> fixed_bias,
                   Rng& rng) {
  const double bound = init_bound(hidden);
  LstmGate g;
  g.input_weights = uniform_param(name + ".input_weights", ad::Shape(input, hidden), bound, rng);
  g.recurrent_weights = uniform_param(name + ".recurrent_weights", ad::Shape(hidden, hidden), bound, rng);
  g.bias = fixed_bias ? ad::Parameter(name + ".bias", ad::Shape(hidden), std::vector<double>(hidden, *fixed_bias))
                     : uniform_param(name + ".bias", ad::Shape(hidden), bound, rng);
  return g;
}

LstmParams init_lstm(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.input = init_gate(prefix + ".input", input, hidden, std::nullopt, rng);
  p.forget = init_gate(prefix + ".forget", input, hidden, 1.0, rng);
  p.output = init_gate(prefix + ".output", input, hidden, std::nullopt, rng);
  p.cell = init_gate(prefix + ".cell", input, hidden, std::nullopt, rng);
  return p;
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    if (std::size_t ws = whitespace_length(text, i); ws > 0) {
      flush();
      i += ws;
      continue;
    }
    const char c = text[i];
    if (is_detached_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      cur.push_back(c);
    }
    ++i;
  }
  flush();
  if (out.empty()) out.emplace_back(kUnkToken);
  return out;
}

Vocabulary::Vocabulary() {
  add(kUnkToken);
  add(kPadToken);
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

std::vector<int> Vocabulary::encode(const TokenSeq& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

int Vocabulary::add(std::string_view token) {
  auto [it, inserted] = index_.emplace(std::string(token), static_cast<int>(tokens_.size()));
  if (inserted) tokens_.emplace_back(token);
  return it->second;
}

Vocabulary build_vocab(std::span<const TokenSeq> corpus, int min_count) {
  if (min_count < 1) throw ConfigError("build_vocab: min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) {
      if (t == kUnkToken || t == kPadToken) continue;
      ++counts[t];
    }
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (n >= min_count) v.add(tok);
  }
  return v;
}

std::vector<ad::Parameter*> LstmParams::params() {
  std::vector<ad::Parameter*> out;
  for (LstmGate* g : {&input, &forget, &output, &cell}) {
    out.push_back(&g->input_weights);
    out.push_back(&g->recurrent_weights);
    out.push_back(&g->bias);
  }
  return out;
}

std::vector<const ad::Parameter*> LstmParams::params() const {
  std::vector<const ad::Parameter*> out;
  for (const LstmGate* g : {&input, &forget, &output, &cell}) {
    out.push_back(&g->input_weights);
    out.push_back(&g->recurrent_weights);
    out.push_back(&g->bias);
  }
  return out;
}

EncoderParams EncoderParams::init(std::size_t vocab_size, const EncoderConfig& config, Rng& rng) {
  if (config.word_dim == 0 || config.hidden == 0) throw ConfigError("encoder dimensions must be positive");
  EncoderParams p;
  p.embedding = uniform_param("encoder.embedding", ad::Shape(vocab_size, config.word_dim), 1.0, rng);
  p.forward = init_lstm("encoder.fwd", config.word_dim, config.hidden, rng);
  p.backward = init_lstm("encoder.bwd", config.word_dim, config.hidden, rng);
  p.train_embeddings = !config.freeze_embeddings;
  return p;
}

std::vector<ad::Parameter*> EncoderParams::trainable() {
  std::vector<ad::Parameter*> out;
  if (train_embeddings) out.push_back(&embedding);
  for (auto* p : forward.params()) out.push_back(p);
  for (auto* p : backward.params()) out.push_back(p);
  return out;
}

std::vector<const ad::Parameter*> EncoderParams::all() const {
  std::vector<const ad::Parameter*> out{&embedding};
  for (auto* p : forward.params()) out.push_back(p);
  for (auto* p : backward.params()) out.push_back(p);
  return out;
}

std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab, ad::Parameter& embedding) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word-vector file " + path.string());
  const std::size_t dim = embedding.shape.cols();
  std::vector<std::pair<int, std::vector<double>>> rows;
  std::size_t file_dim = 0;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> vec;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed number '" + field + "'");
      }
    }
    if (file_dim == 0) file_dim = vec.size();
    if (vec.empty() || vec.size() != file_dim) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(file_dim) +
                      " values, found " + std::to_string(vec.size()));
    }
    if (vec.size() != dim) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": vector length " + std::to_string(vec.size()) +
                      " does not match embedding width " + std::to_string(dim));
    }
    const int idx = vocab.index(token);
    if (idx == Vocabulary::kUnk || idx == Vocabulary::kPad || token != vocab.token(idx)) continue;
    rows.emplace_back(idx, std::move(vec));
  }
  // Nothing is written until the whole file parsed cleanly.
  std::vector<bool> seen(vocab.size(), false);
  std::size_t matched = 0;
  for (auto& [idx, vec] : rows) {
    std::copy(vec.begin(), vec.end(), embedding.value.begin() + static_cast<std::ptrdiff_t>(idx * dim));
    if (!seen[static_cast<std::size_t>(idx)]) {
      seen[static_cast<std::size_t>(idx)] = true;
      ++matched;
    }
  }
  return matched;
}

std::vector<ad::Tensor> run_lstm(ad::Tape& tape, ad::Tensor inputs, const LstmParams& lstm) {
  const std::size_t steps = inputs.shape().rows();
  struct Bound {
    ad::Tensor projected;  // [T x h], x_t W_x for every step
    ad::Tensor recurrent;
    ad::Tensor bias;
  };
  auto bind = [&](const LstmGate& g) {
    return Bound{ad::matmul(inputs, tape.param(g.input_weights)), tape.param(g.recurrent_weights), tape.param(g.bias)};
  };
  const Bound gi = bind(lstm.input), gf = bind(lstm.forget), go = bind(lstm.output), gc = bind(lstm.cell);

  std::vector<ad::Tensor> states;
  states.reserve(steps);
  ad::Tensor hidden, cell;
  for (std::size_t t = 0; t < steps; ++t) {
    // h_0 = c_0 = 0, so the first step has no recurrent or forget term.
    auto pre = [&](const Bound& g) {
      ad::Tensor x = ad::add(ad::row(g.projected, t), g.bias);
      return t == 0 ? x : ad::add(x, ad::matmul(hidden, g.recurrent));
    };
    const ad::Tensor i = ad::sigmoid(pre(gi));
    const ad::Tensor o = ad::sigmoid(pre(go));
    const ad::Tensor c = ad::tanh_act(pre(gc));
    if (t == 0) {
      cell = ad::mul_elementwise(i, c);
    } else {
      const ad::Tensor f = ad::sigmoid(pre(gf));
      cell = ad::add(ad::mul_elementwise(f, cell), ad::mul_elementwise(i, c));
    }
    hidden = ad::mul_elementwise(o, ad::tanh_act(cell));
    states.push_back(hidden);
  }
  return states;
}

ad::Tensor encode(ad::Tape& tape, std::span<const int> token_ids, const EncoderParams& params) {
  if (token_ids.empty()) throw ShapeError("encode: empty token sequence");
  const ad::Tensor table = tape.param(params.embedding, params.train_embeddings);
  std::vector<ad::Tensor> words;
  words.reserve(token_ids.size());
  for (int id : token_ids) words.push_back(ad::row(table, static_cast<std::size_t>(id)));

  const auto fwd = run_lstm(tape, ad::stack(words), params.forward);
  std::reverse(words.begin(), words.end());
  auto bwd = run_lstm(tape, ad::stack(words), params.backward);
  std::reverse(bwd.begin(), bwd.end());  // align backward states with positions

  std::vector<ad::Tensor> steps;
  steps.reserve(fwd.size());
  for (std::size_t t = 0; t < fwd.size(); ++t) steps.push_back(ad::concat({fwd[t], bwd[t]}));
  return ad::max_over_time(ad::stack(steps));
}

std::pair<ad::Tensor, ad::Tensor> encode_pair(ad::Tape& tape, std::span<const int> left, std::span<const int> right,
                                              const EncoderParams& params) {
  ad::Tensor u = encode(tape, left, params);
  ad::Tensor v = encode(tape, right, params);
  return {u, v};
}

}  // namespace relsim
