#include "lexprompt/label_mapper.h"

#include <algorithm>
#include <stdexcept>

namespace lexprompt {

PredictionTokens make_prediction_tokens(std::span<const TokenId> ids, const Vocab& vocab) {
  PredictionTokens out;
  out.ids.assign(ids.begin(), ids.end());
  for (TokenId id : ids) {
    if (Vocab::is_reserved(id) || id < 0 || static_cast<std::size_t>(id) >= vocab.size()) continue;
    for (auto& c : char_set(vocab.token(id))) out.chars.insert(c);
  }
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

LabelMapping map_to_label(const PredictionTokens& prediction, const Verbalizer& verbalizer) {
  if (verbalizer.empty()) throw std::invalid_argument("map_to_label: empty verbalizer");
  LabelMapping out;
  out.score = -1.0;
  for (std::size_t y = 0; y < verbalizer.size(); ++y) {
    const double s = jaccard(prediction.chars, verbalizer.token_set(static_cast<int>(y)));
    out.scores.push_back(s);
    if (s > out.score) {
      out.score = s;
      out.label = static_cast<int>(y);
    }
  }
  out.zero_confidence = out.score == 0.0;
  return out;
}

}  // namespace lexprompt
