#include "lexprompt/prompt_model.h"

#include "lexprompt/optim.h"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lexprompt {

HardTemplates HardTemplates::english() {
  return {"He will be charged with criminal responsibility for",
          "Keywords in the case description are as follows:"};
}

HardTemplates HardTemplates::chinese() { return {"他将被追究刑事责任，罪名为", "案件描述中的关键词如下："}; }

PromptLayout assemble_prompt(std::span<const TokenId> case_tokens, std::span<const TokenId> snippet_tokens,
                             std::span<const TokenId> prefix_tokens, std::span<const TokenId> keyword_tokens,
                             int mask_count, std::size_t cap) {
  if (mask_count < 1) throw std::invalid_argument("mask_count must be at least 1");
  const std::size_t fixed =
      2 + prefix_tokens.size() + static_cast<std::size_t>(mask_count) + keyword_tokens.size() + snippet_tokens.size();
  if (fixed > cap) {
    throw std::invalid_argument("prompt without the case already has " + std::to_string(fixed) +
                                " tokens, cap is " + std::to_string(cap));
  }
  const std::size_t case_len = std::min(case_tokens.size(), cap - fixed);

  PromptLayout layout;
  layout.prefix_len = prefix_tokens.size();
  layout.case_len = case_len;
  layout.keywords_len = keyword_tokens.size();
  layout.snippet_len = snippet_tokens.size();
  auto& t = layout.tokens;
  t.reserve(fixed + case_len);

  layout.soft_positions[0] = 0;
  t.push_back(Vocab::kPad);
  t.insert(t.end(), prefix_tokens.begin(), prefix_tokens.end());
  for (int m = 0; m < mask_count; ++m) {
    layout.mask_positions.push_back(t.size());
    t.push_back(Vocab::kMask);
  }
  t.insert(t.end(), case_tokens.begin(), case_tokens.begin() + static_cast<std::ptrdiff_t>(case_len));
  t.insert(t.end(), keyword_tokens.begin(), keyword_tokens.end());
  t.insert(t.end(), snippet_tokens.begin(), snippet_tokens.end());
  layout.soft_positions[1] = t.size();
  t.push_back(Vocab::kPad);
  return layout;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

void init_xavier(Param& p, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  p.init_uniform(rng, a);
}

Mat layer_norm(const Mat& x, const Param& gain, const Param& bias, Mat& xhat, Vec& inv_std) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  xhat.resize(n, x.cols());
  inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const RowVec centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / d;
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = centered * inv_std(i);
  }
  Mat y = xhat.array().rowwise() * gain.value.row(0).array();
  y.rowwise() += bias.value.row(0);
  return y;
}

Mat layer_norm_backward(const Mat& d_y, const Mat& xhat, const Vec& inv_std, Param& gain, Param& bias) {
  gain.grad.row(0) += (d_y.array() * xhat.array()).colwise().sum().matrix();
  bias.grad.row(0) += d_y.colwise().sum();
  const Mat d_xhat = d_y.array().rowwise() * gain.value.row(0).array();
  const double d = static_cast<double>(d_y.cols());
  Mat d_x(d_y.rows(), d_y.cols());
  for (Eigen::Index i = 0; i < d_y.rows(); ++i) {
    const double mean_d = d_xhat.row(i).sum() / d;
    const double mean_dx = d_xhat.row(i).dot(xhat.row(i)) / d;
    d_x.row(i) = inv_std(i) * (d_xhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx).matrix();
  }
  return d_x;
}

Mat gelu(const Mat& h) {
  return (0.5 * h.array() * (1.0 + (kGeluC * (h.array() + 0.044715 * h.array().cube())).tanh())).matrix();
}

Mat gelu_grad(const Mat& h) {
  const auto t = (kGeluC * (h.array() + 0.044715 * h.array().cube())).tanh();
  return (0.5 * (1.0 + t) + 0.5 * h.array() * (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * 0.044715 * h.array().square()))
      .matrix();
}

void softmax_rows(Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

Mat affine(const Mat& x, const Param& w, const Param& b) {
  Mat y = x * w.value;
  y.rowwise() += b.value.row(0);
  return y;
}

void affine_backward(const Mat& x, const Mat& d_y, Param& w, Param& b) {
  w.grad.noalias() += x.transpose() * d_y;
  b.grad.row(0) += d_y.colwise().sum();
}

}  // namespace

EncoderLayer::EncoderLayer(int d, int h, int ff, Rng& rng) : heads(h) {
  if (h <= 0 || d % h != 0) throw std::invalid_argument("d_model must be divisible by the head count");
  for (Param* w : {&w_q, &w_k, &w_v, &w_o}) {
    *w = Param(d, d);
    init_xavier(*w, rng);
  }
  for (Param* b : {&b_q, &b_k, &b_v, &b_o, &ln1_bias, &ln2_bias}) *b = Param(1, d);
  ln1_gain = Param(1, d);
  ln1_gain.value.setOnes();
  ln2_gain = Param(1, d);
  ln2_gain.value.setOnes();
  w_1 = Param(d, ff);
  init_xavier(w_1, rng);
  b_1 = Param(1, ff);
  w_2 = Param(ff, d);
  init_xavier(w_2, rng);
  b_2 = Param(1, d);
}

Mat EncoderLayer::forward(const Mat& x, LayerTrace* trace) const {
  const Eigen::Index d = x.cols();
  const Eigen::Index dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Mat q = affine(x, w_q, b_q);
  Mat k = affine(x, w_k, b_k);
  Mat v = affine(x, w_v, b_v);
  Mat o(x.rows(), d);
  std::vector<Mat> attn(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Mat& a = attn[static_cast<std::size_t>(hd)];
    a = q.middleCols(hd * dk, dk) * k.middleCols(hd * dk, dk).transpose() * scale;
    softmax_rows(a);
    o.middleCols(hd * dk, dk) = a * v.middleCols(hd * dk, dk);
  }
  const Mat r1 = x + affine(o, w_o, b_o);
  Mat xhat1;
  Vec inv1;
  Mat y1 = layer_norm(r1, ln1_gain, ln1_bias, xhat1, inv1);
  Mat hpre = affine(y1, w_1, b_1);
  Mat g = gelu(hpre);
  const Mat r2 = y1 + affine(g, w_2, b_2);
  Mat xhat2;
  Vec inv2;
  Mat y2 = layer_norm(r2, ln2_gain, ln2_bias, xhat2, inv2);
  if (trace) {
    trace->x = x;
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->attn = std::move(attn);
    trace->o = std::move(o);
    trace->y1 = std::move(y1);
    trace->xhat1 = std::move(xhat1);
    trace->inv_std1 = std::move(inv1);
    trace->h = std::move(hpre);
    trace->g = std::move(g);
    trace->xhat2 = std::move(xhat2);
    trace->inv_std2 = std::move(inv2);
  }
  return y2;
}

Mat EncoderLayer::backward(const Mat& d_y2, const LayerTrace& t) {
  const Eigen::Index d = t.x.cols();
  const Eigen::Index dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const Mat d_r2 = layer_norm_backward(d_y2, t.xhat2, t.inv_std2, ln2_gain, ln2_bias);
  affine_backward(t.g, d_r2, w_2, b_2);
  const Mat d_h = (d_r2 * w_2.value.transpose()).cwiseProduct(gelu_grad(t.h));
  affine_backward(t.y1, d_h, w_1, b_1);
  const Mat d_y1 = d_r2 + d_h * w_1.value.transpose();

  const Mat d_r1 = layer_norm_backward(d_y1, t.xhat1, t.inv_std1, ln1_gain, ln1_bias);
  affine_backward(t.o, d_r1, w_o, b_o);
  const Mat d_o = d_r1 * w_o.value.transpose();

  Mat d_q(t.x.rows(), d);
  Mat d_k(t.x.rows(), d);
  Mat d_v(t.x.rows(), d);
  for (int hd = 0; hd < heads; ++hd) {
    const Mat& a = t.attn[static_cast<std::size_t>(hd)];
    const auto d_oh = d_o.middleCols(hd * dk, dk);
    const Mat d_a = d_oh * t.v.middleCols(hd * dk, dk).transpose();
    d_v.middleCols(hd * dk, dk) = a.transpose() * d_oh;
    const Vec row_dot = (d_a.array() * a.array()).rowwise().sum();
    const Mat d_s = (a.array() * (d_a.array().colwise() - row_dot.array())).matrix() * scale;
    d_q.middleCols(hd * dk, dk) = d_s * t.k.middleCols(hd * dk, dk);
    d_k.middleCols(hd * dk, dk) = d_s.transpose() * t.q.middleCols(hd * dk, dk);
  }
  affine_backward(t.x, d_q, w_q, b_q);
  affine_backward(t.x, d_k, w_k, b_k);
  affine_backward(t.x, d_v, w_v, b_v);
  return d_r1 + d_q * w_q.value.transpose() + d_k * w_k.value.transpose() + d_v * w_v.value.transpose();
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix) {
  const std::pair<const char*, Param*> named[] = {
      {"w_q", &w_q}, {"b_q", &b_q}, {"w_k", &w_k}, {"b_k", &b_k}, {"w_v", &w_v}, {"b_v", &b_v},
      {"w_o", &w_o}, {"b_o", &b_o}, {"ln1_gain", &ln1_gain}, {"ln1_bias", &ln1_bias},
      {"w_1", &w_1}, {"b_1", &b_1}, {"w_2", &w_2}, {"b_2", &b_2}, {"ln2_gain", &ln2_gain},
      {"ln2_bias", &ln2_bias},
  };
  for (const auto& [name, p] : named) out.push_back({prefix + name, p});
}

// ---------------------------------------------------------------------------

MaskedLmEncoder::MaskedLmEncoder(const ModelDims& dims, Rng& rng)
    : embeddings(static_cast<Eigen::Index>(dims.vocab_size), dims.d_model),
      out_bias(1, static_cast<Eigen::Index>(dims.vocab_size)),
      positions_(static_cast<Eigen::Index>(dims.max_len), dims.d_model) {
  embeddings.init_uniform(rng, 0.5);
  for (int l = 0; l < dims.layers; ++l) layers.emplace_back(dims.d_model, dims.heads, dims.ff, rng);
  for (Eigen::Index p = 0; p < positions_.rows(); ++p) {
    for (Eigen::Index i = 0; i < positions_.cols(); ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dims.d_model));
      positions_(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * freq) : std::cos(static_cast<double>(p) * freq);
    }
  }
}

Mat MaskedLmEncoder::encode(const Mat& e_prime, EncoderTrace* trace) const {
  if (trace) trace->layers.assign(layers.size(), {});
  Mat x = e_prime;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = layers[l].forward(x, trace ? &trace->layers[l] : nullptr);
  }
  if (!x.allFinite()) throw NumericError("non-finite activation in masked-LM encoder");
  return x;
}

Mat MaskedLmEncoder::encode_backward(const Mat& d_r, const EncoderTrace& trace) {
  Mat d = d_r;
  for (std::size_t l = layers.size(); l-- > 0;) d = layers[l].backward(d, trace.layers[l]);
  return d;
}

Mat MaskedLmEncoder::mask_logits(const Mat& r, std::span<const std::size_t> mask_positions) const {
  Mat rm(static_cast<Eigen::Index>(mask_positions.size()), r.cols());
  for (std::size_t i = 0; i < mask_positions.size(); ++i) {
    rm.row(static_cast<Eigen::Index>(i)) = r.row(static_cast<Eigen::Index>(mask_positions[i]));
  }
  Mat logits = rm * embeddings.value.transpose();
  logits.rowwise() += out_bias.value.row(0);
  return logits;
}

void MaskedLmEncoder::collect(ParamList& out) {
  out.push_back({"embeddings", &embeddings});
  out.push_back({"out_bias", &out_bias});
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, "layer" + std::to_string(l) + ".");
}

Mat embed(const PromptLayout& layout, const MaskedLmEncoder& encoder, const Mat& soft_prompts) {
  const auto n = static_cast<Eigen::Index>(layout.size());
  if (n > encoder.positions().rows()) {
    throw std::invalid_argument("prompt of " + std::to_string(n) + " tokens exceeds the encoder's length cap");
  }
  Mat e(n, encoder.d_model());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto pos = static_cast<std::size_t>(i);
    if (pos == layout.soft_positions[0]) {
      e.row(i) = soft_prompts.row(0);
    } else if (pos == layout.soft_positions[1]) {
      e.row(i) = soft_prompts.row(1);
    } else {
      e.row(i) = encoder.embeddings.value.row(layout.tokens[pos]);
    }
  }
  return e + encoder.positions().topRows(n);
}

Mat inject_facts(const Mat& e, const PromptLayout& layout, const Vec& u) {
  if (u.size() != e.cols()) {
    throw std::invalid_argument("fact vector has " + std::to_string(u.size()) + " dims, embeddings have " +
                                std::to_string(e.cols()));
  }
  Mat out = e;
  for (std::size_t s : layout.soft_positions) out.row(static_cast<Eigen::Index>(s)) += u.transpose();
  return out;
}

std::vector<TokenId> argmax_tokens(const Mat& logits) {
  std::vector<TokenId> out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    TokenId best = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = Vocab::kFirstFree; j < logits.cols(); ++j) {
      if (logits(i, j) > best_v) {
        best_v = logits(i, j);
        best = static_cast<TokenId>(j);
      }
    }
    out.push_back(best < 0 ? Vocab::kUnk : best);
  }
  return out;
}

ModelOutput predict_masks(const Mat& r, const PromptLayout& layout, const MaskedLmEncoder& encoder) {
  ModelOutput out;
  out.logits = encoder.mask_logits(r, layout.mask_positions);
  out.predicted = argmax_tokens(out.logits);
  return out;
}

std::vector<TokenId> label_targets(const Vocab& vocab, std::string_view label_text, int mask_count) {
  auto ids = tokenize(vocab, label_text, static_cast<std::size_t>(std::max(0, mask_count)));
  if (ids.empty()) throw DataError("label text '" + std::string(label_text) + "' has no tokens");
  ids.resize(static_cast<std::size_t>(mask_count), Vocab::kPad);
  return ids;
}

double mlm_loss_grad(const Mat& logits, std::span<const TokenId> targets, Mat& d_logits) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw std::invalid_argument("mlm_loss: target count does not match mask count");
  }
  std::size_t count = 0;
  for (TokenId t : targets) count += (t != Vocab::kPad);
  if (count == 0) throw DataError("mlm_loss: all targets are padding");

  d_logits = Mat::Zero(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const TokenId target = targets[static_cast<std::size_t>(i)];
    if (target == Vocab::kPad) continue;
    const double mx = logits.row(i).maxCoeff();
    RowVec p = (logits.row(i).array() - mx).exp();
    const double z = p.sum();
    total += std::log(z) + mx - logits(i, target);
    p /= z;
    p(target) -= 1.0;
    d_logits.row(i) = p / static_cast<double>(count);
  }
  return total / static_cast<double>(count);
}

double mlm_loss(const Mat& logits, std::span<const TokenId> targets) {
  Mat unused;
  return mlm_loss_grad(logits, targets, unused);
}

// ---------------------------------------------------------------------------

PromptModel::PromptModel(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.d_model % 2 != 0) throw std::invalid_argument("d_model must be even");
  Rng rng(seed);
  encoder = MaskedLmEncoder(dims, rng);
  fact_gru = GruParams(dims.d_model, dims.fact_hidden(), rng.fork());
  // Soft prompts start from the embeddings of two reserved rows.
  soft_prompts = Param(2, dims.d_model);
  soft_prompts.value.row(0) = encoder.embeddings.value.row(Vocab::kPad);
  soft_prompts.value.row(1) = encoder.embeddings.value.row(Vocab::kUnk);
}

Vec PromptModel::fact_vector(std::span<const TokenId> fact_tokens, FactEncoderTrace* trace, Mat* inputs) const {
  Mat in(static_cast<Eigen::Index>(fact_tokens.size()), dims_.d_model);
  for (std::size_t t = 0; t < fact_tokens.size(); ++t) {
    in.row(static_cast<Eigen::Index>(t)) = encoder.embeddings.value.row(fact_tokens[t]);
  }
  Vec u = encode_facts(fact_gru, in, trace);
  if (inputs) *inputs = std::move(in);
  return u;
}

ModelOutput PromptModel::forward(const PromptLayout& layout, std::span<const TokenId> fact_tokens,
                                 bool inject) const {
  const Vec u = inject ? fact_vector(fact_tokens) : Vec::Zero(dims_.d_model);
  const Mat e = inject_facts(embed(layout, encoder, soft_prompts.value), layout, u);
  return predict_masks(encoder.encode(e), layout, encoder);
}

double PromptModel::loss(const PromptExample& ex) const {
  return mlm_loss(forward(ex.layout, ex.fact_tokens, ex.inject).logits, ex.targets);
}

double PromptModel::loss_and_backward(const PromptExample& ex, double weight) {
  FactEncoderTrace fact_trace;
  const Vec u = ex.inject ? fact_vector(ex.fact_tokens, &fact_trace) : Vec::Zero(dims_.d_model);
  const Mat e = inject_facts(embed(ex.layout, encoder, soft_prompts.value), ex.layout, u);
  EncoderTrace trace;
  const Mat r = encoder.encode(e, &trace);
  const Mat logits = encoder.mask_logits(r, ex.layout.mask_positions);

  Mat d_logits;
  const double loss = mlm_loss_grad(logits, ex.targets, d_logits);
  d_logits *= weight;

  // Tied projection: logits = r_m E^T + b.
  Mat d_r = Mat::Zero(r.rows(), r.cols());
  const Mat d_rm = d_logits * encoder.embeddings.value;
  for (std::size_t i = 0; i < ex.layout.mask_positions.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(ex.layout.mask_positions[i]);
    d_r.row(row) = d_rm.row(static_cast<Eigen::Index>(i));
    encoder.embeddings.grad.noalias() += d_logits.row(static_cast<Eigen::Index>(i)).transpose() * r.row(row);
  }
  encoder.out_bias.grad.row(0) += d_logits.colwise().sum();

  const Mat d_e = encoder.encode_backward(d_r, trace);
  const auto s0 = static_cast<Eigen::Index>(ex.layout.soft_positions[0]);
  const auto s1 = static_cast<Eigen::Index>(ex.layout.soft_positions[1]);
  soft_prompts.grad.row(0) += d_e.row(s0);
  soft_prompts.grad.row(1) += d_e.row(s1);
  for (Eigen::Index i = 0; i < d_e.rows(); ++i) {
    if (i == s0 || i == s1) continue;
    encoder.embeddings.grad.row(ex.layout.tokens[static_cast<std::size_t>(i)]) += d_e.row(i);
  }
  if (ex.inject && !ex.fact_tokens.empty()) {
    const Vec d_u = (d_e.row(s0) + d_e.row(s1)).transpose();
    const Mat d_in = encode_facts_backward(fact_gru, fact_trace, d_u);
    for (std::size_t t = 0; t < ex.fact_tokens.size(); ++t) {
      encoder.embeddings.grad.row(ex.fact_tokens[t]) += d_in.row(static_cast<Eigen::Index>(t));
    }
  }
  return loss;
}

ParamList PromptModel::parameters() {
  ParamList out;
  out.push_back({"soft_prompts", &soft_prompts});
  encoder.collect(out);
  for (auto& p : fact_gru.parameters("fact_gru")) out.push_back(p);
  return out;
}

TrainHistory train_prompt_model(PromptModel& model, std::span<const PromptExample> examples,
                                const Validator& validate, const TrainConfig& config) {
  TrainHistory history;
  if (examples.empty() || config.max_epochs <= 0) return history;
  const ParamList params = model.parameters();
  Adam optimizer(params, config.lr);
  Rng rng(config.seed);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, config.batch));

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  ValidationResult best{-1.0, std::numeric_limits<double>::infinity()};
  std::vector<Mat> best_values = snapshot(params);
  int stale = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      zero_grads(params);
      const double weight = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) total += model.loss_and_backward(examples[order[k]], weight);
      optimizer.step();
    }
    const double mean = total / static_cast<double>(examples.size());
    if (!std::isfinite(mean)) {
      throw NumericError("prompt model training produced a non-finite loss at epoch " + std::to_string(epoch));
    }
    const ValidationResult v = validate ? validate(model) : ValidationResult{0.0, mean};
    history.train_loss.push_back(mean);
    history.val_f1.push_back(v.macro_f1);
    history.val_loss.push_back(v.loss);
    spdlog::debug("epoch {} train loss {:.5f} val F1 {:.4f} val loss {:.5f}", epoch, mean, v.macro_f1, v.loss);

    const bool improved = v.macro_f1 > best.macro_f1 || (v.macro_f1 == best.macro_f1 && v.loss < best.loss);
    if (improved) {
      best = v;
      best_values = snapshot(params);
      history.best_epoch = epoch;
      stale = 0;
    } else if (++stale > config.patience) {
      break;
    }
  }
  restore(params, best_values);
  return history;
}

}  // namespace lexprompt
