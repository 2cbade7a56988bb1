#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relsim/autodiff.hpp"
#include "relsim/rng.hpp"

namespace relsim {

using TokenSeq = std::vector<std::string>;

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kPadToken = "<pad>";

// Lowercases, splits on whitespace and detaches . , ! ? ; : ' " ( ) as
// separate tokens. Empty input yields {kUnkToken}.
TokenSeq tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;

  Vocabulary();

  // Index of a token; unknown tokens map to kUnk.
  int index(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;

  std::vector<int> encode(const TokenSeq& tokens) const;

  // Appends a token if absent; returns its index.
  int add(std::string_view token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens with frequency >= min_count, ordered by descending frequency then
// lexicographically, after the two special tokens.
Vocabulary build_vocab(std::span<const TokenSeq> corpus, int min_count = 1);

// One LSTM gate: pre-activation x_t W_x + h_{t-1} W_h + b.
struct LstmGate {
  ad::Parameter input_weights;      // d_w x h
  ad::Parameter recurrent_weights;  // h x h
  ad::Parameter bias;               // h
};

struct LstmParams {
  LstmGate input, forget, output, cell;

  std::size_t hidden() const { return input.bias.shape.size(); }
  std::vector<ad::Parameter*> params();
  std::vector<const ad::Parameter*> params() const;
};

struct EncoderConfig {
  std::size_t word_dim = 64;
  std::size_t hidden = 64;
  bool freeze_embeddings = false;
};

struct EncoderParams {
  ad::Parameter embedding;  // vocab size x word_dim
  LstmParams forward;
  LstmParams backward;
  bool train_embeddings = true;

  // Forget-gate biases start at 1.0; everything else in the LSTMs is
  // uniform in [-1/sqrt(h), 1/sqrt(h)]. Embedding rows are uniform in
  // [-1, 1].
  static EncoderParams init(std::size_t vocab_size, const EncoderConfig& config, Rng& rng);

  std::size_t hidden() const { return forward.hidden(); }
  std::size_t word_dim() const { return embedding.shape.cols(); }
  std::size_t embedding_dim() const { return 2 * hidden(); }

  // Parameters that receive SGD updates (embedding only when trainable).
  std::vector<ad::Parameter*> trainable();
  std::vector<const ad::Parameter*> all() const;
};

// Copies matching rows from a whitespace-separated "token v1 ... v_dw" file
// into the embedding matrix. Returns the number of vocabulary tokens matched
// (special tokens excluded). Throws DataError naming the offending line on
// inconsistent vector lengths.
std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab, ad::Parameter& embedding);

// Hidden states of a unidirectional LSTM over the rows of a [T x d_w]
// input matrix, one state per row. Input projections are computed for all
// steps at once; only the recurrent products run step by step.
std::vector<ad::Tensor> run_lstm(ad::Tape& tape, ad::Tensor inputs, const LstmParams& lstm);

// BiLSTM + max pooling over time; returns a [2h] embedding.
ad::Tensor encode(ad::Tape& tape, std::span<const int> token_ids, const EncoderParams& params);

std::pair<ad::Tensor, ad::Tensor> encode_pair(ad::Tape& tape, std::span<const int> left, std::span<const int> right,
                                              const EncoderParams& params);

}  // namespace relsim
