#pragma once

#include "lexprompt/common.h"
#include "lexprompt/corpus.h"
#include "lexprompt/fact_encoder.h"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lexprompt {

// Hard prompt texts around the masks (prefix) and before the snippets.
struct HardTemplates {
  std::string prefix;
  std::string keywords;

  static HardTemplates english();
  static HardTemplates chinese();
};

// Token sequence [s1 | T1 | M | X | T2 | K | s2]. Soft positions hold PAD as a
// placeholder id; their embeddings come from the soft prompt matrix.
struct PromptLayout {
  std::vector<TokenId> tokens;
  std::array<std::size_t, 2> soft_positions{};
  std::vector<std::size_t> mask_positions;
  std::size_t prefix_len = 0;
  std::size_t case_len = 0;
  std::size_t keywords_len = 0;
  std::size_t snippet_len = 0;

  std::size_t size() const { return tokens.size(); }
};

// Builds the layout, truncating the case segment so the total fits cap.
// Throws std::invalid_argument when mask_count < 1 or the fixed segments
// alone exceed cap.
PromptLayout assemble_prompt(std::span<const TokenId> case_tokens, std::span<const TokenId> snippet_tokens,
                             std::span<const TokenId> prefix_tokens, std::span<const TokenId> keyword_tokens,
                             int mask_count, std::size_t cap);

struct ModelDims {
  std::size_t vocab_size = 0;
  int d_model = 32;
  int layers = 2;
  int heads = 2;
  int ff = 64;
  std::size_t max_len = 256;

  int fact_hidden() const { return d_model / 2; }
};

struct LayerTrace {
  Mat x, q, k, v;
  std::vector<Mat> attn;  // per head, rows sum to 1
  Mat o, y1, xhat1, h, g, xhat2;
  Vec inv_std1, inv_std2;
};

// Post-norm transformer block: multi-head self-attention and a GELU
// feed-forward, each followed by residual + layer normalization.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(int d_model, int heads, int ff, Rng& rng);

  Mat forward(const Mat& x, LayerTrace* trace = nullptr) const;
  Mat backward(const Mat& d_y, const LayerTrace& trace);
  void collect(ParamList& out, const std::string& prefix);

  int heads = 1;
  Param w_q, w_k, w_v, w_o, b_q, b_k, b_v, b_o;
  Param ln1_gain, ln1_bias;
  Param w_1, b_1, w_2, b_2;
  Param ln2_gain, ln2_bias;
};

struct EncoderTrace {
  std::vector<LayerTrace> layers;
};

// Bidirectional masked-LM encoder with sinusoidal positions and an output
// projection tied to the token embedding table.
class MaskedLmEncoder {
 public:
  MaskedLmEncoder() = default;
  MaskedLmEncoder(const ModelDims& dims, Rng& rng);

  const Mat& positions() const { return positions_; }
  int d_model() const { return static_cast<int>(embeddings.value.cols()); }

  // Throws NumericError on non-finite activations.
  Mat encode(const Mat& e_prime, EncoderTrace* trace = nullptr) const;
  Mat encode_backward(const Mat& d_r, const EncoderTrace& trace);

  // One logit row per mask position: r_m . embeddings^T + out_bias.
  Mat mask_logits(const Mat& r, std::span<const std::size_t> mask_positions) const;

  void collect(ParamList& out);

  Param embeddings;  // V x d
  Param out_bias;    // 1 x V
  std::vector<EncoderLayer> layers;

 private:
  Mat positions_;  // max_len x d
};

// E: soft rows from S, other rows from the embedding table; all rows get the
// positional encoding.
Mat embed(const PromptLayout& layout, const MaskedLmEncoder& encoder, const Mat& soft_prompts);

// E': E with u added to the two soft rows. Throws std::invalid_argument when
// u does not match the row width.
Mat inject_facts(const Mat& e, const PromptLayout& layout, const Vec& u);

struct ModelOutput {
  Mat logits;                  // |M| x V
  std::vector<TokenId> predicted;  // argmax per row, reserved ids excluded
};

std::vector<TokenId> argmax_tokens(const Mat& logits);
ModelOutput predict_masks(const Mat& r, const PromptLayout& layout, const MaskedLmEncoder& encoder);

// Label text tokenized, then truncated or PAD-padded to mask_count. Throws
// DataError when the label has no tokens.
std::vector<TokenId> label_targets(const Vocab& vocab, std::string_view label_text, int mask_count);

// Mean cross-entropy over the non-PAD targets.
double mlm_loss(const Mat& logits, std::span<const TokenId> targets);
// Same value; writes d(loss)/d(logits).
double mlm_loss_grad(const Mat& logits, std::span<const TokenId> targets, Mat& d_logits);

struct PromptExample {
  PromptLayout layout;
  std::vector<TokenId> fact_tokens;
  bool inject = true;  // false: u is forced to zero
  std::vector<TokenId> targets;
};

// Soft prompts, fact BiGRU and the masked-LM encoder as one trainable unit.
class PromptModel {
 public:
  PromptModel() = default;
  PromptModel(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }

  Vec fact_vector(std::span<const TokenId> fact_tokens, FactEncoderTrace* trace = nullptr,
                  Mat* inputs = nullptr) const;
  ModelOutput forward(const PromptLayout& layout, std::span<const TokenId> fact_tokens, bool inject) const;
  double loss(const PromptExample& example) const;
  // Accumulates weight * d(loss)/d(params); returns the unweighted loss.
  double loss_and_backward(const PromptExample& example, double weight = 1.0);

  ParamList parameters();

  MaskedLmEncoder encoder;
  Param soft_prompts;  // 2 x d
  GruParams fact_gru;

 private:
  ModelDims dims_;
};

struct TrainConfig {
  double lr = 1e-2;
  int batch = 8;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 1;
};

struct ValidationResult {
  double macro_f1 = 0.0;
  double loss = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_f1;
  std::vector<double> val_loss;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
};

using Validator = std::function<ValidationResult(const PromptModel&)>;

// Adam on minibatch-mean loss. After each epoch the validator scores the
// model; an epoch improves when its macro-F1 is higher, or equal with lower
// validation loss. Training stops once more than `patience` consecutive
// epochs fail to improve, and the best epoch's parameters are restored.
// Throws NumericError on a non-finite loss.
TrainHistory train_prompt_model(PromptModel& model, std::span<const PromptExample> examples,
                                const Validator& validate, const TrainConfig& config);

}  // namespace lexprompt
