#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtlsent/rng.hpp"
#include "mtlsent/tensor.hpp"
#include "mtlsent/text_data.hpp"

namespace mtlsent {

// Gate order is fixed as [input, forget, cell candidate, output]; the bias
// rows of the forget gate are initialized to 1.
struct LstmParams {
  Param w_input;   // 4d x e
  Param w_hidden;  // 4d x d
  Param bias;      // 4d x 1
  int d = 0;
  int e = 0;

  static LstmParams init(int d, int e, Rng& rng);
  std::vector<Param*> params() { return {&w_input, &w_hidden, &bias}; }
};

struct EncoderParams {
  LstmParams fwd;
  LstmParams bwd;
  int d = 0;
  int e = 0;

  static EncoderParams init(int d, int e, Rng& rng);
  std::vector<Param*> params();
};

// Tape-bound view of one direction's weights.
struct BoundLstm {
  Var w_input, w_hidden, bias;
  int d = 0;
};
BoundLstm bind(Tape& tape, LstmParams& p);

// One LSTM cell step, columnwise over a batch: x is e x B, states d x B.
std::pair<Var, Var> lstm_step(Tape& tape, Var x, Var h_prev, Var c_prev, const BoundLstm& p);

// Full BiLSTM pass over a padded batch plus masked max pooling.
struct EncodeResult {
  Var pooled;               // 2d x B sentence embeddings
  std::vector<Var> hidden;  // T entries, 2d x B each; [forward; backward] rows
  Mat mask;                 // B x T
};

EncodeResult encode_batch(Tape& tape, const SentenceBatch& batch, const EmbeddingTable& table,
                          EncoderParams& params);

// Values-only per-sentence hidden-state matrices (T_i x 2d), for inspection.
std::vector<Mat> hidden_states(const EncodeResult& r, const SentenceBatch& batch);

// Embeddings without a gradient path (each column one sentence).
Mat encode_values(const SentenceBatch& batch, const EmbeddingTable& table, EncoderParams& params);

// [s1, s2, s1 - s2, s1 .* s2], stacked rows; batched over columns.
Var pair_features(Var s1, Var s2);

void save_encoder(const EncoderParams& p, const std::string& path);
EncoderParams load_encoder(const std::string& path);

}  // namespace mtlsent
