#pragma once

#include "lexprompt/common.h"
#include "lexprompt/corpus.h"
#include "lexprompt/fact_extractor.h"

#include <string>
#include <string_view>
#include <vector>

namespace lexprompt {

// Gate weights act on the stacked vector [x; h] (candidate: [x; r*h]).
struct GruDirection {
  Param w_z, w_r, w_h;  // hidden x (input + hidden)
  Param b_z, b_r, b_h;  // hidden x 1
};

struct GruParams {
  GruParams() = default;
  // Uniform(-0.1, 0.1) initialisation.
  GruParams(int input_dim, int hidden_dim, std::uint64_t seed);

  int input_dim() const { return static_cast<int>(forward.w_z.value.cols() - forward.w_z.value.rows()); }
  int hidden_dim() const { return static_cast<int>(forward.w_z.value.rows()); }

  ParamList parameters(const std::string& prefix = "gru");

  GruDirection forward;
  GruDirection backward;
};

struct GruStep {
  Vec x, h_prev, z, r, candidate, h;
};

//   z = sigmoid(W_z [x; h] + b_z)
//   r = sigmoid(W_r [x; h] + b_r)
//   c = tanh(W_h [x; r*h] + b_h)
//   h' = (1 - z) * h + z * c
// Throws std::invalid_argument on dimension mismatch.
Vec gru_cell(const Vec& x, const Vec& h_prev, const GruDirection& params, GruStep* trace = nullptr);

// Accumulates parameter gradients for one step; writes d/dx and d/dh_prev.
void gru_cell_backward(const GruStep& step, const Vec& d_h, GruDirection& params, Vec& d_x, Vec& d_h_prev);

// Elements joined with the separator, tokenized, truncated to max_fact_len.
std::vector<TokenId> fact_tokens(const FactList& facts, const Vocab& vocab, std::size_t max_fact_len,
                                 std::string_view separator = ",");

// One embedding row per fact token.
Mat facts_to_inputs(const FactList& facts, const Vocab& vocab, const Mat& embed_table,
                    std::size_t max_fact_len, std::string_view separator = ",");

struct FactEncoderTrace {
  std::vector<GruStep> forward;   // position order
  std::vector<GruStep> backward;  // position order (backward state at each t)
};

// u = [forward state after the last input; backward state at the first
// input]. Empty input gives the zero vector of size 2*hidden.
Vec encode_facts(const GruParams& params, const Mat& inputs, FactEncoderTrace* trace = nullptr);

// Backpropagation through time. Returns d(loss)/d(inputs).
Mat encode_facts_backward(GruParams& params, const FactEncoderTrace& trace, const Vec& d_u);

}  // namespace lexprompt
