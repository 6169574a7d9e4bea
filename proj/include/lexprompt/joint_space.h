#pragma once

#include "lexprompt/common.h"
#include "lexprompt/corpus.h"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lexprompt {

// Mean-pooled token embeddings followed by a square linear projection.
// Shared by cases and articles, so both land in one vector space.
class SentenceEncoder {
 public:
  SentenceEncoder() = default;
  SentenceEncoder(std::size_t vocab_size, int dim, std::uint64_t seed);

  int dim() const { return static_cast<int>(projection.value.rows()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(embeddings.value.rows()); }

  // Empty input encodes to the zero vector.
  Vec encode(std::span<const TokenId> tokens) const;

  // Accumulates d(loss)/d(params) given d(loss)/d(encode(tokens)).
  void backward(std::span<const TokenId> tokens, const Vec& grad_out);

  ParamList parameters();

  Param embeddings;  // V x d
  Param projection;  // d x d
};

enum class Polarity { Positive, Negative };

struct ContrastivePair {
  std::size_t case_index;
  int article_id;
  Polarity polarity;

  bool operator==(const ContrastivePair&) const = default;
};

// Positive/negative (case, article) pairs. Per case, positives and negatives
// are equal in number and every negative lies outside the case's articles.
struct PairSet {
  std::vector<ContrastivePair> pairs;

  struct Group {
    std::size_t case_index;
    std::vector<int> positives;
    std::vector<int> negatives;
  };
  // Pairs grouped by case, in first-appearance order.
  std::vector<Group> groups() const;
};

// One positive per relevant article and as many negatives, drawn uniformly
// without replacement from the remaining articles (with replacement when the
// pool is too small). Cases without relevant articles are skipped.
PairSet build_pairs(const Dataset& dataset, std::uint64_t seed);

// Throws NumericError on a zero-norm input, std::invalid_argument on a
// dimension mismatch.
double cosine_sim(const Vec& u, const Vec& v);

struct ContrastiveLoss {
  double loss = 0.0;
  std::vector<double> d_pos;
  std::vector<double> d_neg;
};

//   loss = -log( sum_c exp(pos_c/tau) / sum_c (exp(pos_c/tau) + exp(neg_c/tau)) )
// evaluated as softplus(LSE(neg/tau) - LSE(pos/tau)). Positive and negative
// counts must match and be non-zero; tau must be positive.
double contrastive_loss(std::span<const double> pos_sims, std::span<const double> neg_sims, double tau);
ContrastiveLoss contrastive_loss_grad(std::span<const double> pos_sims,
                                      std::span<const double> neg_sims, double tau);

struct JointSpaceConfig {
  double tau = 0.1;
  double lr = 0.5;
  int epochs = 30;
  int batch = 8;
  std::uint64_t seed = 1;
  std::size_t max_len = 512;
};

// Loss of one case group under the current encoder. Used by training and by
// the finite-difference checks.
double group_loss(const SentenceEncoder& encoder, const Vocab& vocab, const Dataset& dataset,
                  const PairSet::Group& group, double tau, std::size_t max_len);

// Same value as group_loss; accumulates parameter gradients scaled by weight.
double group_loss_backward(SentenceEncoder& encoder, const Vocab& vocab, const Dataset& dataset,
                           const PairSet::Group& group, double tau, std::size_t max_len,
                           double weight = 1.0);

struct JointSpaceHistory {
  std::vector<double> epoch_loss;
};

// Minibatch SGD over case groups. Throws NumericError if the loss or any
// parameter stops being finite.
JointSpaceHistory train_joint_space(SentenceEncoder& encoder, const Vocab& vocab,
                                    const Dataset& dataset, const PairSet& pairs,
                                    const JointSpaceConfig& config);

struct ArticleIndex {
  Mat vectors;          // |A| x d
  std::vector<int> ids;  // row-aligned article ids
};

ArticleIndex build_article_index(const SentenceEncoder& encoder, const Vocab& vocab,
                                 std::span<const Article> articles, std::size_t max_len);

struct ScoredArticle {
  int id;
  double score;

  bool operator==(const ScoredArticle&) const = default;
};

// Top-n by raw inner product, descending, ties by ascending id.
std::vector<ScoredArticle> retrieve_top_n(const Vec& query, const ArticleIndex& index, int n);
std::vector<ScoredArticle> retrieve_top_n(const SentenceEncoder& encoder, const Vocab& vocab,
                                          std::string_view case_text, const ArticleIndex& index,
                                          int n, std::size_t max_len);

}  // namespace lexprompt
