#include "lexprompt/gradcheck.h"

#include "lexprompt/fact_encoder.h"
#include "lexprompt/joint_space.h"
#include "lexprompt/prompt_model.h"
#include "lexprompt/toy_corpus.h"

#include <algorithm>
#include <cmath>

namespace lexprompt {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult check_param(const std::string& family, const NamedParam& param, const Mat& analytic,
                            const std::function<double()>& loss, double eps) {
  GradCheckResult out{family, param.name, 0, 0.0};
  Mat& value = param.param->value;
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    const double saved = value.data()[i];
    value.data()[i] = saved + eps;
    const double up = loss();
    value.data()[i] = saved - eps;
    const double down = loss();
    value.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic.data()[i], numeric));
    ++out.entries;
  }
  return out;
}

namespace {

std::vector<GradCheckResult> check_all(const std::string& family, const ParamList& params,
                                       const std::function<double()>& loss) {
  std::vector<Mat> analytic;
  for (const auto& p : params) analytic.push_back(p.param->grad);
  std::vector<GradCheckResult> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(check_param(family, params[i], analytic[i], loss));
  return out;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> out(n);
  for (auto& t : out) t = static_cast<TokenId>(Vocab::kFirstFree + rng.below(vocab - Vocab::kFirstFree));
  return out;
}

}  // namespace

std::vector<GradCheckResult> gradcheck_retriever(std::uint64_t seed) {
  const Dataset data = generate_toy_corpus(default_toy_spec(3, 2), seed);
  const Vocab vocab = build_vocab(data, 1);
  const PairSet pairs = build_pairs(data, seed);
  const auto groups = pairs.groups();
  SentenceEncoder encoder(vocab.size(), 8, seed);
  // Larger than the training init so cosines stay away from the clamp.
  Rng rng(seed + 1);
  encoder.projection.init_uniform(rng, 1.0);
  constexpr double kTau = 0.5;
  constexpr std::size_t kMaxLen = 24;

  const ParamList params = encoder.parameters();
  zero_grads(params);
  group_loss_backward(encoder, vocab, data, groups.front(), kTau, kMaxLen);
  return check_all("retriever", params,
                   [&] { return group_loss(encoder, vocab, data, groups.front(), kTau, kMaxLen); });
}

std::vector<GradCheckResult> gradcheck_gru(std::uint64_t seed) {
  constexpr int kInput = 6;
  constexpr int kHidden = 5;
  GruParams gru(kInput, kHidden, seed);
  Rng rng(seed + 7);
  Mat inputs(9, kInput);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.uniform(-1.0, 1.0);
  Vec w(2 * kHidden);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1.0, 1.0);
  // Larger weights than the default init so every gate is exercised.
  ParamList params = gru.parameters("gru");
  for (const auto& p : params) p.param->init_uniform(rng, 0.8);

  zero_grads(params);
  FactEncoderTrace trace;
  encode_facts(gru, inputs, &trace);
  const Mat d_inputs = encode_facts_backward(gru, trace, w);
  auto out = check_all("gru", params, [&] { return w.dot(encode_facts(gru, inputs)); });

  Param input_param(inputs.rows(), inputs.cols());
  input_param.value = inputs;
  out.push_back(check_param("gru", {"gru.inputs", &input_param}, d_inputs,
                            [&] { return w.dot(encode_facts(gru, input_param.value)); }));
  return out;
}

std::vector<GradCheckResult> gradcheck_prompt_model(std::uint64_t seed) {
  ModelDims dims;
  dims.vocab_size = 30;
  dims.d_model = 16;
  dims.layers = 2;
  dims.heads = 2;
  dims.ff = 24;
  dims.max_len = 32;
  PromptModel model(dims, seed);
  Rng rng(seed + 3);
  // Perturb zero-initialised biases and unit gains so their gradients are
  // checked away from the symmetric starting point; widen the fact GRU so
  // its gradients clear finite-difference noise.
  for (const auto& p : model.parameters()) {
    if (p.name.starts_with("fact_gru")) {
      p.param->init_uniform(rng, 0.8);
    } else if (p.name.find("b_") != std::string::npos || p.name.find("ln") != std::string::npos ||
               p.name == "out_bias") {
      p.param->value.array() += Mat::NullaryExpr(p.param->value.rows(), p.param->value.cols(),
                                                 [&] { return rng.uniform(-0.2, 0.2); })
                                    .array();
    }
  }

  PromptExample ex;
  const auto prefix = random_tokens(rng, 3, dims.vocab_size);
  const auto keywords = random_tokens(rng, 2, dims.vocab_size);
  const auto case_tokens = random_tokens(rng, 8, dims.vocab_size);
  const auto snippets = random_tokens(rng, 4, dims.vocab_size);
  ex.layout = assemble_prompt(case_tokens, snippets, prefix, keywords, 3, 24);
  ex.fact_tokens = random_tokens(rng, 6, dims.vocab_size);
  ex.targets = random_tokens(rng, 2, dims.vocab_size);
  ex.targets.push_back(Vocab::kPad);

  const ParamList params = model.parameters();
  zero_grads(params);
  model.loss_and_backward(ex);
  return check_all("prompt_model", params, [&] { return model.loss(ex); });
}

std::vector<GradCheckResult> gradcheck_all(std::uint64_t seed) {
  auto out = gradcheck_retriever(seed);
  for (auto& r : gradcheck_gru(seed)) out.push_back(std::move(r));
  for (auto& r : gradcheck_prompt_model(seed)) out.push_back(std::move(r));
  return out;
}

}  // namespace lexprompt
