#include "lexprompt/knowledge_matcher.h"

#include "lexprompt/utf8.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>

namespace lexprompt {

Lexicon::Lexicon() : nodes_(1) {}

Lexicon::Lexicon(const std::vector<std::string>& terms) : nodes_(1) {
  std::set<std::string> seen;
  for (const auto& t : terms) {
    if (t.empty() || !seen.insert(t).second) continue;
    const std::u32string cps = utf8::decode(t);
    int state = 0;
    for (char32_t cp : cps) {
      auto it = nodes_[static_cast<std::size_t>(state)].next.find(cp);
      if (it == nodes_[static_cast<std::size_t>(state)].next.end()) {
        nodes_.emplace_back();
        const int created = static_cast<int>(nodes_.size()) - 1;
        nodes_[static_cast<std::size_t>(state)].next.emplace(cp, created);
        state = created;
      } else {
        state = it->second;
      }
    }
    nodes_[static_cast<std::size_t>(state)].outputs.push_back(static_cast<int>(terms_.size()));
    terms_.push_back(t);
    lengths_.push_back(cps.size());
  }

  // Breadth-first failure links.
  std::queue<int> queue;
  for (const auto& [cp, child] : nodes_[0].next) {
    nodes_[static_cast<std::size_t>(child)].fail = 0;
    queue.push(child);
  }
  while (!queue.empty()) {
    const int state = queue.front();
    queue.pop();
    for (const auto& [cp, child] : nodes_[static_cast<std::size_t>(state)].next) {
      int f = nodes_[static_cast<std::size_t>(state)].fail;
      while (f != 0 && !nodes_[static_cast<std::size_t>(f)].next.contains(cp)) {
        f = nodes_[static_cast<std::size_t>(f)].fail;
      }
      auto it = nodes_[static_cast<std::size_t>(f)].next.find(cp);
      const int target = (it != nodes_[static_cast<std::size_t>(f)].next.end() && it->second != child)
                             ? it->second
                             : 0;
      auto& node = nodes_[static_cast<std::size_t>(child)];
      node.fail = target;
      const auto& inherited = nodes_[static_cast<std::size_t>(target)].outputs;
      node.outputs.insert(node.outputs.end(), inherited.begin(), inherited.end());
      queue.push(child);
    }
  }
}

std::vector<SnippetMatch> Lexicon::match(std::string_view text) const {
  std::vector<SnippetMatch> out;
  if (terms_.empty()) return out;
  std::vector<bool> found(terms_.size(), false);
  const std::u32string cps = utf8::decode(text);
  int state = 0;
  for (std::size_t pos = 0; pos < cps.size(); ++pos) {
    const char32_t cp = cps[pos];
    while (state != 0 && !nodes_[static_cast<std::size_t>(state)].next.contains(cp)) {
      state = nodes_[static_cast<std::size_t>(state)].fail;
    }
    auto it = nodes_[static_cast<std::size_t>(state)].next.find(cp);
    state = it == nodes_[static_cast<std::size_t>(state)].next.end() ? 0 : it->second;
    for (int term : nodes_[static_cast<std::size_t>(state)].outputs) {
      const auto t = static_cast<std::size_t>(term);
      if (found[t]) continue;
      found[t] = true;
      out.push_back({terms_[t], pos + 1 - lengths_[t]});
    }
  }
  std::sort(out.begin(), out.end(), [&](const SnippetMatch& a, const SnippetMatch& b) {
    if (a.first_offset != b.first_offset) return a.first_offset < b.first_offset;
    const auto la = utf8::decode(a.term).size();
    const auto lb = utf8::decode(b.term).size();
    if (la != lb) return la > lb;
    return a.term < b.term;
  });
  return out;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    std::string term = utf8::trim(tab == std::string::npos ? line : line.substr(0, tab));
    if (!term.empty()) terms.push_back(std::move(term));
  }
  Lexicon lexicon(terms);
  if (lexicon.empty()) spdlog::warn("lexicon {} contains no terms", path.string());
  return lexicon;
}

std::vector<SnippetMatch> match_snippets(const Lexicon& lexicon, std::string_view text) {
  return lexicon.match(text);
}

std::vector<TokenId> snippets_to_tokens(std::span<const SnippetMatch> matches, const Vocab& vocab,
                                        std::string_view separator) {
  std::string joined;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (i > 0) joined += separator;
    joined += matches[i].term;
  }
  return tokenize(vocab, joined);
}

}  // namespace lexprompt
