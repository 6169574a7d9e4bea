#include "lexprompt/joint_space.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace lexprompt {

SentenceEncoder::SentenceEncoder(std::size_t vocab_size, int dim, std::uint64_t seed)
    : embeddings(static_cast<Eigen::Index>(vocab_size), dim), projection(dim, dim) {
  Rng rng(seed);
  embeddings.init_uniform(rng, 0.05);
  projection.init_uniform(rng, std::sqrt(3.0 / dim));
}

Vec SentenceEncoder::encode(std::span<const TokenId> tokens) const {
  Vec mean = Vec::Zero(dim());
  if (tokens.empty()) return mean;
  for (TokenId t : tokens) mean += embeddings.value.row(t).transpose();
  mean /= static_cast<double>(tokens.size());
  return projection.value * mean;
}

void SentenceEncoder::backward(std::span<const TokenId> tokens, const Vec& grad_out) {
  if (tokens.empty()) return;
  Vec mean = Vec::Zero(dim());
  for (TokenId t : tokens) mean += embeddings.value.row(t).transpose();
  mean /= static_cast<double>(tokens.size());
  projection.grad.noalias() += grad_out * mean.transpose();
  const Vec d_mean = projection.value.transpose() * grad_out / static_cast<double>(tokens.size());
  for (TokenId t : tokens) embeddings.grad.row(t) += d_mean.transpose();
}

ParamList SentenceEncoder::parameters() {
  return {{"retriever.embeddings", &embeddings}, {"retriever.projection", &projection}};
}

// ---------------------------------------------------------------------------

std::vector<PairSet::Group> PairSet::groups() const {
  std::vector<Group> out;
  std::map<std::size_t, std::size_t> slot;
  for (const auto& p : pairs) {
    auto [it, inserted] = slot.emplace(p.case_index, out.size());
    if (inserted) out.push_back({p.case_index, {}, {}});
    auto& g = out[it->second];
    (p.polarity == Polarity::Positive ? g.positives : g.negatives).push_back(p.article_id);
  }
  return out;
}

PairSet build_pairs(const Dataset& dataset, std::uint64_t seed) {
  Rng rng(seed);
  PairSet set;
  for (std::size_t i = 0; i < dataset.cases.size(); ++i) {
    const auto& c = dataset.cases[i];
    if (c.articles.empty()) {
      spdlog::warn("case {} has no relevant articles; skipped for contrastive pairs", c.id);
      continue;
    }
    const std::set<int> relevant(c.articles.begin(), c.articles.end());
    std::vector<int> pool;
    for (const auto& a : dataset.articles) {
      if (!relevant.contains(a.id)) pool.push_back(a.id);
    }
    if (pool.empty()) {
      spdlog::warn("case {} has no candidate negative articles; skipped", c.id);
      continue;
    }
    const std::size_t count = c.articles.size();
    for (int a : c.articles) set.pairs.push_back({i, a, Polarity::Positive});
    if (pool.size() >= count) {
      for (std::size_t k = 0; k < count; ++k) {
        std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
        set.pairs.push_back({i, pool[k], Polarity::Negative});
      }
    } else {
      for (std::size_t k = 0; k < count; ++k) {
        set.pairs.push_back({i, pool[rng.below(pool.size())], Polarity::Negative});
      }
    }
  }
  return set;
}

double cosine_sim(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_sim: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw NumericError("cosine_sim: zero-norm vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

namespace {

void check_loss_args(std::span<const double> pos, std::span<const double> neg, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
  if (pos.empty()) throw std::invalid_argument("contrastive_loss: need at least one positive");
  if (pos.size() != neg.size()) {
    throw std::invalid_argument("contrastive_loss: positive and negative counts differ");
  }
}

// Log-sum-exp of x/tau and the matching softmax weights.
double lse(std::span<const double> x, double tau, std::vector<double>* weights) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v / tau);
  double sum = 0.0;
  for (double v : x) sum += std::exp(v / tau - m);
  if (weights) {
    weights->resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) (*weights)[i] = std::exp(x[i] / tau - m) / sum;
  }
  return m + std::log(sum);
}

double softplus(double d) { return d > 0.0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d)); }

double sigmoid(double d) {
  return d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
}

}  // namespace

double contrastive_loss(std::span<const double> pos_sims, std::span<const double> neg_sims, double tau) {
  check_loss_args(pos_sims, neg_sims, tau);
  return softplus(lse(neg_sims, tau, nullptr) - lse(pos_sims, tau, nullptr));
}

ContrastiveLoss contrastive_loss_grad(std::span<const double> pos_sims,
                                      std::span<const double> neg_sims, double tau) {
  check_loss_args(pos_sims, neg_sims, tau);
  ContrastiveLoss out;
  std::vector<double> wp;
  std::vector<double> wn;
  const double d = lse(neg_sims, tau, &wn) - lse(pos_sims, tau, &wp);
  out.loss = softplus(d);
  const double s = sigmoid(d);
  out.d_pos.resize(pos_sims.size());
  out.d_neg.resize(neg_sims.size());
  for (std::size_t i = 0; i < wp.size(); ++i) out.d_pos[i] = -s * wp[i] / tau;
  for (std::size_t i = 0; i < wn.size(); ++i) out.d_neg[i] = s * wn[i] / tau;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const Article& article_by_id(const Dataset& dataset, int id) {
  const Article* a = dataset.find_article(id);
  if (!a) throw DataError("unknown article id " + std::to_string(id));
  return *a;
}

struct GroupEval {
  std::vector<TokenId> case_tokens;
  Vec case_vec;
  std::vector<std::vector<TokenId>> article_tokens;  // positives then negatives
  std::vector<Vec> article_vecs;
  std::vector<double> pos;
  std::vector<double> neg;
};

GroupEval eval_group(const SentenceEncoder& encoder, const Vocab& vocab, const Dataset& dataset,
                     const PairSet::Group& group, std::size_t max_len) {
  GroupEval g;
  g.case_tokens = tokenize(vocab, dataset.cases.at(group.case_index).text, max_len);
  g.case_vec = encoder.encode(g.case_tokens);
  auto add = [&](int id, std::vector<double>& sims) {
    g.article_tokens.push_back(tokenize(vocab, article_by_id(dataset, id).text, max_len));
    g.article_vecs.push_back(encoder.encode(g.article_tokens.back()));
    sims.push_back(cosine_sim(g.case_vec, g.article_vecs.back()));
  };
  for (int id : group.positives) add(id, g.pos);
  for (int id : group.negatives) add(id, g.neg);
  return g;
}

// d cos(u, v) / du
Vec cosine_grad(const Vec& u, const Vec& v, double sim) {
  const double nu = u.norm();
  const double nv = v.norm();
  return v / (nu * nv) - sim * u / (nu * nu);
}

}  // namespace

double group_loss(const SentenceEncoder& encoder, const Vocab& vocab, const Dataset& dataset,
                  const PairSet::Group& group, double tau, std::size_t max_len) {
  const GroupEval g = eval_group(encoder, vocab, dataset, group, max_len);
  return contrastive_loss(g.pos, g.neg, tau);
}

double group_loss_backward(SentenceEncoder& encoder, const Vocab& vocab, const Dataset& dataset,
                           const PairSet::Group& group, double tau, std::size_t max_len,
                           double weight) {
  const GroupEval g = eval_group(encoder, vocab, dataset, group, max_len);
  const ContrastiveLoss l = contrastive_loss_grad(g.pos, g.neg, tau);

  Vec d_case = Vec::Zero(encoder.dim());
  for (std::size_t k = 0; k < g.article_vecs.size(); ++k) {
    const bool positive = k < g.pos.size();
    const double sim = positive ? g.pos[k] : g.neg[k - g.pos.size()];
    const double d_sim = weight * (positive ? l.d_pos[k] : l.d_neg[k - g.pos.size()]);
    d_case += d_sim * cosine_grad(g.case_vec, g.article_vecs[k], sim);
    encoder.backward(g.article_tokens[k], d_sim * cosine_grad(g.article_vecs[k], g.case_vec, sim));
  }
  encoder.backward(g.case_tokens, d_case);
  return l.loss;
}

JointSpaceHistory train_joint_space(SentenceEncoder& encoder, const Vocab& vocab,
                                    const Dataset& dataset, const PairSet& pairs,
                                    const JointSpaceConfig& config) {
  JointSpaceHistory history;
  const auto groups = pairs.groups();
  if (groups.empty() || config.epochs <= 0) return history;
  const auto params = encoder.parameters();
  const std::size_t batch = static_cast<std::size_t>(std::max(1, config.batch));

  Rng rng(config.seed);
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      zero_grads(params);
      for (std::size_t k = start; k < end; ++k) {
        total += group_loss_backward(encoder, vocab, dataset, groups[order[k]], config.tau,
                                     config.max_len, weight);
      }
      for (const auto& p : params) p.param->value -= config.lr * p.param->grad;
    }
    const double mean = total / static_cast<double>(groups.size());
    if (!std::isfinite(mean) || !encoder.projection.value.allFinite() ||
        !encoder.embeddings.value.allFinite()) {
      throw NumericError("joint-space training diverged at epoch " + std::to_string(epoch + 1) +
                         " (mean loss " + std::to_string(mean) + ")");
    }
    history.epoch_loss.push_back(mean);
    spdlog::debug("joint space epoch {} loss {:.6f}", epoch + 1, mean);
  }
  return history;
}

ArticleIndex build_article_index(const SentenceEncoder& encoder, const Vocab& vocab,
                                 std::span<const Article> articles, std::size_t max_len) {
  ArticleIndex index;
  index.vectors = Mat::Zero(static_cast<Eigen::Index>(articles.size()), encoder.dim());
  for (std::size_t i = 0; i < articles.size(); ++i) {
    index.vectors.row(static_cast<Eigen::Index>(i)) =
        encoder.encode(tokenize(vocab, articles[i].text, max_len)).transpose();
    index.ids.push_back(articles[i].id);
  }
  return index;
}

std::vector<ScoredArticle> retrieve_top_n(const Vec& query, const ArticleIndex& index, int n) {
  if (n < 0) throw UsageError("number of retrieved articles must be non-negative");
  std::vector<ScoredArticle> scored;
  scored.reserve(index.ids.size());
  for (std::size_t i = 0; i < index.ids.size(); ++i) {
    scored.push_back({index.ids[i], index.vectors.row(static_cast<Eigen::Index>(i)).dot(query)});
  }
  const std::size_t keep = std::min(scored.size(), static_cast<std::size_t>(n));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const ScoredArticle& a, const ScoredArticle& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.id < b.id;
                    });
  scored.resize(keep);
  return scored;
}

std::vector<ScoredArticle> retrieve_top_n(const SentenceEncoder& encoder, const Vocab& vocab,
                                          std::string_view case_text, const ArticleIndex& index,
                                          int n, std::size_t max_len) {
  return retrieve_top_n(encoder.encode(tokenize(vocab, case_text, max_len)), index, n);
}

}  // namespace lexprompt
