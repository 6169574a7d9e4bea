#include "lexprompt/fact_encoder.h"

#include <stdexcept>

namespace lexprompt {

namespace {

void init_direction(GruDirection& d, int input_dim, int hidden_dim, Rng& rng) {
  for (Param* w : {&d.w_z, &d.w_r, &d.w_h}) {
    *w = Param(hidden_dim, input_dim + hidden_dim);
    w->init_uniform(rng, 0.1);
  }
  for (Param* b : {&d.b_z, &d.b_r, &d.b_h}) {
    *b = Param(hidden_dim, 1);
    b->init_uniform(rng, 0.1);
  }
}

Vec sigmoid(const Vec& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

Vec stack(const Vec& top, const Vec& bottom) {
  Vec out(top.size() + bottom.size());
  out << top, bottom;
  return out;
}

}  // namespace

GruParams::GruParams(int input_dim, int hidden_dim, std::uint64_t seed) {
  Rng rng(seed);
  init_direction(forward, input_dim, hidden_dim, rng);
  init_direction(backward, input_dim, hidden_dim, rng);
}

ParamList GruParams::parameters(const std::string& prefix) {
  ParamList out;
  for (auto [name, dir] : {std::pair{"fwd", &forward}, std::pair{"bwd", &backward}}) {
    const std::string p = prefix + "." + name + ".";
    out.push_back({p + "w_z", &dir->w_z});
    out.push_back({p + "w_r", &dir->w_r});
    out.push_back({p + "w_h", &dir->w_h});
    out.push_back({p + "b_z", &dir->b_z});
    out.push_back({p + "b_r", &dir->b_r});
    out.push_back({p + "b_h", &dir->b_h});
  }
  return out;
}

Vec gru_cell(const Vec& x, const Vec& h_prev, const GruDirection& p, GruStep* trace) {
  const Eigen::Index hidden = p.w_z.value.rows();
  const Eigen::Index input = p.w_z.value.cols() - hidden;
  if (x.size() != input || h_prev.size() != hidden) {
    throw std::invalid_argument("gru_cell: expected input " + std::to_string(input) + " / hidden " +
                                std::to_string(hidden) + ", got " + std::to_string(x.size()) + " / " +
                                std::to_string(h_prev.size()));
  }
  const Vec xh = stack(x, h_prev);
  const Vec z = sigmoid(p.w_z.value * xh + p.b_z.value.col(0));
  const Vec r = sigmoid(p.w_r.value * xh + p.b_r.value.col(0));
  const Vec xrh = stack(x, r.cwiseProduct(h_prev));
  const Vec c = (p.w_h.value * xrh + p.b_h.value.col(0)).array().tanh().matrix();
  Vec h = (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(c);
  if (trace) *trace = {x, h_prev, z, r, c, h};
  return h;
}

void gru_cell_backward(const GruStep& s, const Vec& d_h, GruDirection& p, Vec& d_x, Vec& d_h_prev) {
  const Eigen::Index input = s.x.size();
  const Vec xh = stack(s.x, s.h_prev);
  const Vec rh = s.r.cwiseProduct(s.h_prev);
  const Vec xrh = stack(s.x, rh);

  const Vec d_z = d_h.cwiseProduct(s.candidate - s.h_prev);
  const Vec d_c = d_h.cwiseProduct(s.z);
  d_h_prev = d_h.cwiseProduct((1.0 - s.z.array()).matrix());

  const Vec d_ac = d_c.cwiseProduct((1.0 - s.candidate.array().square()).matrix());
  p.w_h.grad.noalias() += d_ac * xrh.transpose();
  p.b_h.grad.col(0) += d_ac;
  const Vec d_xrh = p.w_h.value.transpose() * d_ac;
  d_x = d_xrh.head(input);
  const Vec d_rh = d_xrh.tail(s.h_prev.size());
  const Vec d_r = d_rh.cwiseProduct(s.h_prev);
  d_h_prev += d_rh.cwiseProduct(s.r);

  const Vec d_az = d_z.cwiseProduct(s.z.cwiseProduct((1.0 - s.z.array()).matrix()));
  const Vec d_ar = d_r.cwiseProduct(s.r.cwiseProduct((1.0 - s.r.array()).matrix()));
  p.w_z.grad.noalias() += d_az * xh.transpose();
  p.b_z.grad.col(0) += d_az;
  p.w_r.grad.noalias() += d_ar * xh.transpose();
  p.b_r.grad.col(0) += d_ar;
  const Vec d_xh = p.w_z.value.transpose() * d_az + p.w_r.value.transpose() * d_ar;
  d_x += d_xh.head(input);
  d_h_prev += d_xh.tail(s.h_prev.size());
}

std::vector<TokenId> fact_tokens(const FactList& facts, const Vocab& vocab, std::size_t max_fact_len,
                                 std::string_view separator) {
  std::string joined;
  for (std::size_t i = 0; i < facts.elements.size(); ++i) {
    if (i > 0) joined += separator;
    joined += facts.elements[i];
  }
  return tokenize(vocab, joined, max_fact_len);
}

Mat facts_to_inputs(const FactList& facts, const Vocab& vocab, const Mat& embed_table,
                    std::size_t max_fact_len, std::string_view separator) {
  const auto ids = fact_tokens(facts, vocab, max_fact_len, separator);
  Mat inputs(static_cast<Eigen::Index>(ids.size()), embed_table.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) inputs.row(static_cast<Eigen::Index>(t)) = embed_table.row(ids[t]);
  return inputs;
}

Vec encode_facts(const GruParams& params, const Mat& inputs, FactEncoderTrace* trace) {
  const Eigen::Index hidden = params.hidden_dim();
  const Eigen::Index steps = inputs.rows();
  Vec u = Vec::Zero(2 * hidden);
  if (trace) {
    trace->forward.assign(static_cast<std::size_t>(steps), {});
    trace->backward.assign(static_cast<std::size_t>(steps), {});
  }
  if (steps == 0) return u;

  Vec h = Vec::Zero(hidden);
  for (Eigen::Index t = 0; t < steps; ++t) {
    h = gru_cell(inputs.row(t).transpose(), h, params.forward,
                 trace ? &trace->forward[static_cast<std::size_t>(t)] : nullptr);
  }
  u.head(hidden) = h;

  h.setZero();
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    h = gru_cell(inputs.row(t).transpose(), h, params.backward,
                 trace ? &trace->backward[static_cast<std::size_t>(t)] : nullptr);
  }
  u.tail(hidden) = h;
  return u;
}

Mat encode_facts_backward(GruParams& params, const FactEncoderTrace& trace, const Vec& d_u) {
  const auto steps = static_cast<Eigen::Index>(trace.forward.size());
  const Eigen::Index hidden = params.hidden_dim();
  Mat d_inputs = Mat::Zero(steps, params.input_dim());
  if (steps == 0) return d_inputs;

  Vec d_x;
  Vec d_prev;
  Vec d_h = d_u.head(hidden);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    gru_cell_backward(trace.forward[static_cast<std::size_t>(t)], d_h, params.forward, d_x, d_prev);
    d_inputs.row(t) += d_x.transpose();
    d_h = d_prev;
  }
  d_h = d_u.tail(hidden);
  for (Eigen::Index t = 0; t < steps; ++t) {
    gru_cell_backward(trace.backward[static_cast<std::size_t>(t)], d_h, params.backward, d_x, d_prev);
    d_inputs.row(t) += d_x.transpose();
    d_h = d_prev;
  }
  return d_inputs;
}

}  // namespace lexprompt
