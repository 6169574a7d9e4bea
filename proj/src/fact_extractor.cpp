#include "lexprompt/fact_extractor.h"

#include "lexprompt/utf8.h"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

namespace lexprompt {

using nlohmann::json;

namespace {

constexpr std::string_view kDefinition =
    "Factual elements in a case description refer to: specific facts used to describe and prove the "
    "circumstances of the case, including basic information such as time, location, characters, and "
    "the sequence of events.";
constexpr std::string_view kAcknowledgment =
    "That's correct. Factual elements in a case description are indeed the specific details used to "
    "outline and substantiate the circumstances of a case.";
constexpr std::string_view kInstruction =
    "Please analyze the case description in < > based on the legal articles in << >>, and list 5-10 "
    "factual elements into []";

const std::u32string kSentenceEnds = U"。.!?；;！？";

bool is_marker_char(char32_t cp) {
  return cp == U'-' || cp == U'*' || cp == U'•' || cp == U'·' || cp == U'+' || cp == U'●' ||
         cp == U'○' || cp == U'▪' || cp == U'–' || cp == U'—';
}

bool is_digit(char32_t cp) { return (cp >= U'0' && cp <= U'9') || (cp >= U'０' && cp <= U'９'); }

// Strips surrounding whitespace, bullets, "1." / "2)" / "3、" numbering and
// enclosing quotes.
std::string clean_element(std::string_view raw) {
  std::u32string s = utf8::decode(utf8::trim(raw));
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    std::size_t i = 0;
    if (is_marker_char(s[0])) {
      i = 1;
    } else if (is_digit(s[0])) {
      std::size_t j = 0;
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j < s.size() && (s[j] == U'.' || s[j] == U')' || s[j] == U'、' || s[j] == U'．' || s[j] == U'）')) {
        // "3.5 million" is content, not numbering.
        if (!(s[j] == U'.' && j + 1 < s.size() && is_digit(s[j + 1]))) i = j + 1;
      }
    }
    if (i > 0) {
      s = utf8::decode(utf8::trim(utf8::encode(std::u32string_view(s).substr(i))));
      changed = true;
    }
  }
  if (s.size() >= 2 && ((s.front() == U'"' && s.back() == U'"') || (s.front() == U'“' && s.back() == U'”'))) {
    s = utf8::decode(utf8::trim(utf8::encode(std::u32string_view(s).substr(1, s.size() - 2))));
  }
  while (!s.empty() && (s.back() == U',' || s.back() == U'，')) s.pop_back();
  return utf8::trim(utf8::encode(s));
}

std::vector<std::string> split_elements(std::string_view body, bool split_semicolons) {
  std::vector<std::string> out;
  std::u32string current;
  auto flush = [&] {
    std::string e = clean_element(utf8::encode(current));
    if (!e.empty()) out.push_back(std::move(e));
    current.clear();
  };
  for (char32_t cp : utf8::decode(body)) {
    if (cp == U'\n' || cp == U'\r' || (split_semicolons && (cp == U';' || cp == U'；'))) {
      flush();
    } else {
      current.push_back(cp);
    }
  }
  flush();
  return out;
}

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += '\n';
    out += items[i];
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

std::string_view role_name(ChatRole role) { return role == ChatRole::User ? "user" : "assistant"; }

std::string escape_brackets(std::string_view text) {
  return replace_all(replace_all(std::string(text), "<", "＜"), ">", "＞");
}

std::vector<ChatMessage> build_question(std::string_view case_text, std::span<const Article> articles) {
  if (articles.empty()) throw std::invalid_argument("build_question needs at least one article");
  std::string instruction(kInstruction);
  instruction += "\n<" + escape_brackets(case_text) + ">";
  for (const auto& a : articles) instruction += "\n<<" + escape_brackets(a.text) + ">>";
  return {
      {ChatRole::User, std::string(kDefinition)},
      {ChatRole::Assistant, std::string(kAcknowledgment)},
      {ChatRole::User, std::move(instruction)},
  };
}

FactList parse_fact_list(std::string_view response) {
  FactList facts;
  if (utf8::trim(response).empty()) {
    spdlog::info("empty response from fact extractor");
    return facts;
  }
  const auto open = response.find('[');
  const auto close = open == std::string_view::npos ? std::string_view::npos : response.find(']', open + 1);
  if (close == std::string_view::npos) {
    spdlog::warn("fact list response has no bracketed span; falling back to line split");
    facts.elements = split_elements(response, false);
    return facts;
  }
  const std::string_view body = response.substr(open + 1, close - open - 1);

  // A JSON-style array of strings is taken as is.
  if (body.find('"') != std::string_view::npos) {
    try {
      const json arr = json::parse("[" + std::string(body) + "]");
      if (arr.is_array() && std::all_of(arr.begin(), arr.end(), [](const json& j) { return j.is_string(); })) {
        for (const auto& j : arr) {
          std::string e = clean_element(j.get<std::string>());
          if (!e.empty()) facts.elements.push_back(std::move(e));
        }
        return facts;
      }
    } catch (const json::exception&) {
    }
  }
  facts.elements = split_elements(body, true);
  return facts;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::u32string current;
  auto flush = [&] {
    std::string s = utf8::trim(utf8::encode(current));
    if (!s.empty()) out.push_back(std::move(s));
    current.clear();
  };
  for (char32_t cp : utf8::decode(text)) {
    if (kSentenceEnds.find(cp) != std::u32string::npos) {
      flush();
    } else {
      current.push_back(cp);
    }
  }
  flush();
  return out;
}

std::string mock_extract(std::string_view case_text, std::span<const Article> articles,
                         const Lexicon& lexicon) {
  std::set<std::u32string> article_bigrams;
  for (const auto& a : articles) {
    const std::u32string cps = utf8::decode(a.text);
    for (std::size_t i = 0; i + 1 < cps.size(); ++i) article_bigrams.insert(cps.substr(i, 2));
  }
  const auto sentences = split_sentences(case_text);
  std::vector<std::string> picked;
  for (const auto& s : sentences) {
    if (picked.size() >= 10) break;
    bool keep = !lexicon.match(s).empty();
    if (!keep) {
      const std::u32string cps = utf8::decode(s);
      for (std::size_t i = 0; i + 1 < cps.size() && !keep; ++i) keep = article_bigrams.contains(cps.substr(i, 2));
    }
    if (keep) picked.push_back(s);
  }
  if (picked.empty() && !sentences.empty()) picked.push_back(sentences.front());
  for (auto& p : picked) p = replace_all(replace_all(p, "[", "［"), "]", "］");
  return "[" + join_lines(picked) + "]";
}

std::string MockExtractorClient::ask(std::span<const ChatMessage> messages) {
  if (messages.empty()) return "[]";
  const std::string& content = messages.back().content;
  const auto newline = content.find('\n');
  if (newline == std::string::npos) return "[]";
  const std::string_view payload = std::string_view(content).substr(newline + 1);

  std::string case_text;
  std::vector<Article> articles;
  std::size_t pos = 0;
  while (pos < payload.size()) {
    if (payload.compare(pos, 2, "<<") == 0) {
      const auto end = payload.find(">>", pos + 2);
      if (end == std::string_view::npos) break;
      articles.push_back({static_cast<int>(articles.size()), std::string(payload.substr(pos + 2, end - pos - 2))});
      pos = end + 2;
    } else if (payload[pos] == '<') {
      const auto end = payload.find('>', pos + 1);
      if (end == std::string_view::npos) break;
      case_text = std::string(payload.substr(pos + 1, end - pos - 1));
      pos = end + 1;
    } else {
      ++pos;
    }
  }
  return mock_extract(case_text, articles, lexicon_);
}

RemoteHttpClient::RemoteHttpClient(RemoteClientConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) {
    throw UsageError("llm endpoint must be an http:// URL: " + url);
  }
  const auto slash = url.find('/', scheme.size());
  scheme_host_port_ = slash == std::string::npos ? url : url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

std::string RemoteHttpClient::ask(std::span<const ChatMessage> messages) {
  json body;
  body["messages"] = json::array();
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
  }
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw TransportError("llm request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError("llm endpoint returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed llm response: ") + e.what());
  }
}

FactList extract_facts(LlmClient& client, std::string_view case_text, std::span<const Article> articles,
                       const ExtractOptions& options) {
  const auto messages = build_question(case_text, articles);
  std::size_t chars = 0;
  for (const auto& m : messages) chars += utf8::decode(m.content).size();
  if (chars > options.max_prompt_chars) {
    throw DataError("fact extraction prompt has " + std::to_string(chars) + " characters, cap is " +
                    std::to_string(options.max_prompt_chars));
  }
  for (int attempt = 0;; ++attempt) {
    try {
      return parse_fact_list(client.ask(messages));
    } catch (const TransportError& e) {
      if (attempt >= options.retries) throw;
      spdlog::warn("fact extraction transport error ({}); retrying", e.what());
    }
  }
}

}  // namespace lexprompt
