#pragma once

#include "lexprompt/common.h"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lexprompt {

struct Case {
  std::string id;
  std::string text;
  int charge = 0;
  std::vector<int> articles;
};

struct Article {
  int id = 0;
  std::string text;
};

// Charge label texts. Label ids are dense 0..C-1 and texts distinct.
class Verbalizer {
 public:
  Verbalizer() = default;
  explicit Verbalizer(std::vector<std::pair<int, std::string>> entries);

  std::size_t size() const { return texts_.size(); }
  bool empty() const { return texts_.empty(); }
  bool contains(int label) const { return label >= 0 && label < static_cast<int>(texts_.size()); }

  const std::string& text(int label) const { return texts_.at(static_cast<std::size_t>(label)); }
  const std::vector<std::string>& texts() const { return texts_; }

  // Non-whitespace characters of the label text.
  const std::set<std::string>& token_set(int label) const {
    return token_sets_.at(static_cast<std::size_t>(label));
  }

 private:
  std::vector<std::string> texts_;
  std::vector<std::set<std::string>> token_sets_;
};

std::set<std::string> char_set(std::string_view text);

enum class TokenizerMode { Character, Whitespace };

std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kFirstFree = 3;

  explicit Vocab(TokenizerMode mode = TokenizerMode::Character);

  // Appends a corpus token; returns its id. Re-adding returns the existing id.
  TokenId add(const std::string& token);

  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(const std::string& token) const { return index_.contains(token); }
  static bool is_reserved(TokenId id) { return id >= 0 && id < kFirstFree; }

  std::size_t size() const { return tokens_.size(); }
  TokenizerMode mode() const { return mode_; }
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  TokenizerMode mode_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Dataset {
  std::vector<Case> cases;
  std::vector<Article> articles;
  Verbalizer verbalizer;

  const Article* find_article(int id) const;
  // Throws DataError on any referential-integrity violation.
  void validate() const;
  // Dataset restricted to the given case indices; articles and labels shared.
  Dataset subset(std::span<const std::size_t> case_indices) const;
};

Dataset load_dataset(const std::filesystem::path& cases_path,
                     const std::filesystem::path& articles_path,
                     const std::filesystem::path& verbalizer_path);

// Writes cases.jsonl, articles.jsonl, verbalizer.jsonl into dir.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Counts every token of case texts, article texts and label texts, plus any
// extra texts (templates, lexicon terms). Ids are assigned by descending
// frequency, ties by ascending code point sequence.
Vocab build_vocab(const Dataset& dataset, int min_freq,
                  TokenizerMode mode = TokenizerMode::Character,
                  std::span<const std::string> extra_texts = {});

// Prefix of at most max_len ids; unknown tokens become UNK.
std::vector<TokenId> tokenize(const Vocab& vocab, std::string_view text, std::size_t max_len);
std::vector<TokenId> tokenize(const Vocab& vocab, std::string_view text);

std::string detokenize(const Vocab& vocab, std::span<const TokenId> ids);

}  // namespace lexprompt
