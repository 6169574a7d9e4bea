#pragma once

#include "lexprompt/corpus.h"

#include <set>
#include <span>
#include <string>
#include <vector>

namespace lexprompt {

// Predicted mask ids plus their cleaned character set (reserved ids dropped).
struct PredictionTokens {
  std::vector<TokenId> ids;
  std::set<std::string> chars;
};

PredictionTokens make_prediction_tokens(std::span<const TokenId> ids, const Vocab& vocab);

// |A n B| / |A u B|; 0 when both are empty.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

struct LabelMapping {
  int label = 0;
  double score = 0.0;
  bool zero_confidence = false;
  std::vector<double> scores;  // one per verbalizer label
};

// Highest-Jaccard label; ties go to the smallest id. Throws
// std::invalid_argument on an empty verbalizer.
LabelMapping map_to_label(const PredictionTokens& prediction, const Verbalizer& verbalizer);

}  // namespace lexprompt
