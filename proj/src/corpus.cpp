#include "lexprompt/corpus.h"

#include "lexprompt/utf8.h"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lexprompt {

using nlohmann::json;

std::set<std::string> char_set(std::string_view text) {
  std::set<std::string> out;
  for (char32_t cp : utf8::decode(text)) {
    if (!utf8::is_space(cp)) out.insert(utf8::encode(cp));
  }
  return out;
}

Verbalizer::Verbalizer(std::vector<std::pair<int, std::string>> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::set<std::string> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [label, text] = entries[i];
    if (label != static_cast<int>(i)) {
      throw DataError("verbalizer label ids must be dense 0..C-1; missing or duplicate id near " +
                      std::to_string(label));
    }
    if (text.empty()) throw DataError("verbalizer label " + std::to_string(label) + " has empty text");
    if (!seen.insert(text).second) throw DataError("duplicate verbalizer text: " + text);
    texts_.push_back(text);
    token_sets_.push_back(char_set(text));
  }
}

std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode) {
  if (mode == TokenizerMode::Character) return utf8::chars(text);
  std::vector<std::string> out;
  std::u32string current;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      if (!current.empty()) out.push_back(utf8::encode(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) out.push_back(utf8::encode(current));
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(TokenizerMode mode) : mode_(mode), tokens_{"[PAD]", "[MASK]", "[UNK]"} {}

TokenId Vocab::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = fnv1a(&mode_, sizeof(mode_));
  for (const auto& t : tokens_) {
    const std::uint64_t len = t.size();
    h = fnv1a(&len, sizeof(len), h);
    h = fnv1a(t.data(), t.size(), h);
  }
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file " + path.string());
  out << json{{"mode", mode_ == TokenizerMode::Character ? "char" : "whitespace"},
              {"size", tokens_.size()}}
             .dump()
      << '\n';
  for (std::size_t i = kFirstFree; i < tokens_.size(); ++i) out << json(tokens_[i]).dump() << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty vocab file " + path.string());
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("bad vocab header: " + std::string(e.what()));
  }
  Vocab vocab(header.value("mode", "char") == "whitespace" ? TokenizerMode::Whitespace
                                                           : TokenizerMode::Character);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      vocab.add(json::parse(line).get<std::string>());
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (header.contains("size") && header["size"].get<std::size_t>() != vocab.size()) {
    throw DataError("vocab file " + path.string() + " is truncated");
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Dataset

const Article* Dataset::find_article(int id) const {
  for (const auto& a : articles) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

void Dataset::validate() const {
  std::set<int> article_ids;
  for (const auto& a : articles) {
    if (!article_ids.insert(a.id).second) throw DataError("duplicate article id " + std::to_string(a.id));
    if (a.text.empty()) throw DataError("article " + std::to_string(a.id) + " has empty text");
  }
  for (const auto& c : cases) {
    if (c.text.empty()) throw DataError("case " + c.id + " has empty text");
    if (!verbalizer.contains(c.charge)) {
      throw DataError("case " + c.id + " references unknown label " + std::to_string(c.charge));
    }
    for (int a : c.articles) {
      if (!article_ids.contains(a)) {
        throw DataError("case " + c.id + " references dangling article id " + std::to_string(a));
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> case_indices) const {
  Dataset out;
  out.articles = articles;
  out.verbalizer = verbalizer;
  out.cases.reserve(case_indices.size());
  for (std::size_t i : case_indices) out.cases.push_back(cases.at(i));
  return out;
}

namespace {

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& cases_path,
                     const std::filesystem::path& articles_path,
                     const std::filesystem::path& verbalizer_path) {
  Dataset ds;
  std::vector<std::pair<int, std::string>> labels;
  for_each_record(verbalizer_path, [&](const json& j) {
    labels.emplace_back(j.at("label").get<int>(), j.at("text").get<std::string>());
  });
  ds.verbalizer = Verbalizer(std::move(labels));

  for_each_record(articles_path, [&](const json& j) {
    ds.articles.push_back({j.at("id").get<int>(), j.at("text").get<std::string>()});
  });

  for_each_record(cases_path, [&](const json& j) {
    Case c;
    c.id = j.at("id").get<std::string>();
    c.text = j.at("fact").get<std::string>();
    c.charge = j.at("charge").get<int>();
    c.articles = j.at("articles").get<std::vector<int>>();
    ds.cases.push_back(std::move(c));
  });
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("cases.jsonl");
    for (const auto& c : dataset.cases) {
      out << json{{"id", c.id}, {"fact", c.text}, {"charge", c.charge}, {"articles", c.articles}}.dump()
          << '\n';
    }
  }
  {
    auto out = open("articles.jsonl");
    for (const auto& a : dataset.articles) out << json{{"id", a.id}, {"text", a.text}}.dump() << '\n';
  }
  {
    auto out = open("verbalizer.jsonl");
    for (std::size_t i = 0; i < dataset.verbalizer.size(); ++i) {
      out << json{{"label", i}, {"text", dataset.verbalizer.text(static_cast<int>(i))}}.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Tokenization

Vocab build_vocab(const Dataset& dataset, int min_freq, TokenizerMode mode,
                  std::span<const std::string> extra_texts) {
  std::map<std::string, std::size_t> counts;
  auto count = [&](std::string_view text) {
    for (auto& tok : split_tokens(text, mode)) ++counts[tok];
  };
  for (const auto& c : dataset.cases) count(c.text);
  for (const auto& a : dataset.articles) count(a.text);
  for (const auto& t : dataset.verbalizer.texts()) count(t);
  for (const auto& t : extra_texts) count(t);

  std::vector<std::pair<std::u32string, std::size_t>> ranked;
  for (const auto& [tok, n] : counts) {
    if (static_cast<long long>(n) >= min_freq) ranked.emplace_back(utf8::decode(tok), n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab(mode);
  for (const auto& [tok, n] : ranked) vocab.add(utf8::encode(tok));
  return vocab;
}

std::vector<TokenId> tokenize(const Vocab& vocab, std::string_view text, std::size_t max_len) {
  std::vector<TokenId> ids;
  for (const auto& tok : split_tokens(text, vocab.mode())) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.id(tok));
  }
  return ids;
}

std::vector<TokenId> tokenize(const Vocab& vocab, std::string_view text) {
  return tokenize(vocab, text, std::numeric_limits<std::size_t>::max());
}

std::string detokenize(const Vocab& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (vocab.mode() == TokenizerMode::Whitespace && i > 0) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace lexprompt
