#pragma once

#include "lexprompt/corpus.h"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lexprompt {

struct SnippetMatch {
  std::string term;
  std::size_t first_offset;  // code point index into the text

  bool operator==(const SnippetMatch&) const = default;
};

// Keyword lexicon compiled into an Aho-Corasick automaton over code points.
class Lexicon {
 public:
  Lexicon();
  // Empty and repeated terms are dropped; first occurrence keeps its slot.
  explicit Lexicon(const std::vector<std::string>& terms);

  const std::vector<std::string>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  // Each distinct term at its first occurrence; ordered by offset, longer
  // term first on equal offsets. Overlapping terms are all reported.
  std::vector<SnippetMatch> match(std::string_view text) const;

 private:
  struct Node {
    std::map<char32_t, int> next;
    int fail = 0;
    std::vector<int> outputs;  // term indices ending here, including via fail links
  };

  std::vector<std::string> terms_;
  std::vector<std::size_t> lengths_;  // in code points
  std::vector<Node> nodes_;
};

// One term per line, optionally followed by TAB and a frequency (ignored).
Lexicon load_lexicon(const std::filesystem::path& path);

std::vector<SnippetMatch> match_snippets(const Lexicon& lexicon, std::string_view text);

// Joins the matched terms with the separator and tokenizes the result.
std::vector<TokenId> snippets_to_tokens(std::span<const SnippetMatch> matches, const Vocab& vocab,
                                        std::string_view separator = ",");

}  // namespace lexprompt
