#pragma once

#include "lexprompt/corpus.h"
#include "lexprompt/knowledge_matcher.h"

#include <chrono>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lexprompt {

enum class ChatRole { User, Assistant };

struct ChatMessage {
  ChatRole role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

std::string_view role_name(ChatRole role);

struct FactList {
  std::vector<std::string> elements;

  bool operator==(const FactList&) const = default;
};

// Raised by clients when the request could not be delivered or answered.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string ask(std::span<const ChatMessage> messages) = 0;
};

// Replaces < and > with their fullwidth forms so the bracket protocol of the
// question stays unambiguous.
std::string escape_brackets(std::string_view text);

// The three-turn consultation: a definition of factual elements, an
// acknowledgment, and the instruction carrying the case in <...> and each
// article in <<...>>. Throws std::invalid_argument without articles.
std::vector<ChatMessage> build_question(std::string_view case_text, std::span<const Article> articles);

// Elements of the first [...] span, one per line, semicolon, or bullet.
// Without brackets the whole response is split on newlines.
FactList parse_fact_list(std::string_view response);

// Deterministic stand-in for the conversational model: the case sentences
// that contain a lexicon term or share a two-character substring with an
// article, capped at ten, as a bracketed list. Falls back to the first
// sentence when none qualify.
std::string mock_extract(std::string_view case_text, std::span<const Article> articles,
                         const Lexicon& lexicon);

std::vector<std::string> split_sentences(std::string_view text);

// Answers questions produced by build_question via mock_extract.
class MockExtractorClient : public LlmClient {
 public:
  explicit MockExtractorClient(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}
  std::string ask(std::span<const ChatMessage> messages) override;

 private:
  Lexicon lexicon_;
};

struct RemoteClientConfig {
  std::string endpoint;  // http://host:port/path
  std::chrono::milliseconds timeout{30000};
};

// POSTs {"messages":[{"role","content"}...]} and expects {"content": "..."}.
class RemoteHttpClient : public LlmClient {
 public:
  explicit RemoteHttpClient(RemoteClientConfig config);
  std::string ask(std::span<const ChatMessage> messages) override;

 private:
  RemoteClientConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

struct ExtractOptions {
  int retries = 1;
  std::size_t max_prompt_chars = 16000;
};

// build_question -> ask -> parse_fact_list, retrying transport failures.
FactList extract_facts(LlmClient& client, std::string_view case_text, std::span<const Article> articles,
                       const ExtractOptions& options = {});

}  // namespace lexprompt
