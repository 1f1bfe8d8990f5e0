#pragma once

#include <chrono>
#include <cstddef>
#include <istream>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "okra/errors.hpp"
#include "okra/http.hpp"
#include "okra/tokenizer.hpp"

namespace okra {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct GenerationParams {
  double temperature = 0.0;
  std::size_t max_tokens = 512;
};

struct ChatExchange {
  std::vector<ChatMessage> request;
  std::string response_text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::chrono::nanoseconds latency{0};
  std::string backend_id;
  bool usage_reported = false;  // counts came from the backend, not the tokenizer
  bool default_used = false;    // scripted mock fell through to its default
};

class GatewayError : public Error {
 public:
  enum class Kind { kNonRetryableStatus, kRetryExhausted, kResponseShape, kScripted };

  GatewayError(Kind kind, const std::string& what, int status = 0) : Error(what), kind_(kind), status_(status) {}
  Kind kind() const noexcept { return kind_; }
  int status() const noexcept { return status_; }

 private:
  Kind kind_;
  int status_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  // Throws GatewayError. Safe to call concurrently.
  virtual ChatExchange complete(std::span<const ChatMessage> messages, const GenerationParams& params) = 0;
};

// Contents joined with newlines, the text the scripted mock matches against.
std::string concatenate_contents(std::span<const ChatMessage> messages);

struct ScriptRule {
  std::string match;                  // substring; empty matches everything
  std::optional<std::regex> pattern;  // used instead of `match` when set
  std::string response;
  std::optional<std::size_t> prompt_tokens;
  std::optional<std::size_t> completion_tokens;
  bool once = false;  // consumed after its first use
  std::optional<std::string> error;
};

// Deterministic backend answering from an ordered rule list: the first rule
// whose match occurs in the concatenated messages wins.
class ScriptedBackend final : public ChatBackend {
 public:
  ScriptedBackend(std::vector<ScriptRule> rules, std::string default_response,
                  std::shared_ptr<const Tokenizer> tokenizer);

  // Line-delimited JSON. A rule is
  //   {"match": s | "pattern": re, "response": s, "usage": {"prompt_tokens": n,
  //    "completion_tokens": n}, "once": b, "error": s}
  // and {"default": s} sets the fallback response.
  static std::unique_ptr<ScriptedBackend> from_stream(std::istream& in, std::shared_ptr<const Tokenizer> tokenizer);
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path,
                                                    std::shared_ptr<const Tokenizer> tokenizer);

  std::string id() const override { return "scripted"; }
  ChatExchange complete(std::span<const ChatMessage> messages, const GenerationParams& params) override;

  std::size_t calls() const;

 private:
  std::vector<ScriptRule> rules_;
  std::vector<bool> consumed_;
  std::string default_response_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

struct RemoteChatOptions {
  std::string base_url;
  std::string model;
  std::size_t max_retries = 2;
  std::chrono::milliseconds initial_backoff{250};
  std::size_t max_in_flight = 4;
};

// OpenAI-compatible chat completions client:
// POST {base_url}/chat/completions, answer in choices[0].message.content,
// usage.prompt_tokens / usage.completion_tokens when present.
class RemoteChatBackend final : public ChatBackend {
 public:
  RemoteChatBackend(std::shared_ptr<HttpTransport> transport, RemoteChatOptions options,
                    std::shared_ptr<const Tokenizer> tokenizer);

  std::string id() const override { return "remote:" + options_.model; }
  ChatExchange complete(std::span<const ChatMessage> messages, const GenerationParams& params) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  RemoteChatOptions options_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::counting_semaphore<> in_flight_;
};

std::size_t count_tokens(const Tokenizer& tokenizer, std::string_view text);

}  // namespace okra
