#include "okra/gateway.hpp"

#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace okra {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

std::string concatenate_contents(std::span<const ChatMessage> messages) {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += '\n';
    out += m.content;
  }
  return out;
}

std::size_t count_tokens(const Tokenizer& tokenizer, std::string_view text) { return tokenizer.count(text); }

namespace {

std::size_t prompt_token_estimate(const Tokenizer& tokenizer, std::span<const ChatMessage> messages) {
  std::size_t n = 0;
  for (const auto& m : messages) n += tokenizer.count(m.content);
  return n;
}

void check_messages(std::span<const ChatMessage> messages) {
  if (messages.empty()) throw GatewayError(GatewayError::Kind::kResponseShape, "no messages to send");
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules, std::string default_response,
                                 std::shared_ptr<const Tokenizer> tokenizer)
    : rules_(std::move(rules)),
      consumed_(rules_.size(), false),
      default_response_(std::move(default_response)),
      tokenizer_(std::move(tokenizer)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_stream(std::istream& in,
                                                              std::shared_ptr<const Tokenizer> tokenizer) {
  std::vector<ScriptRule> rules;
  std::string fallback;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      if (j.contains("default")) {
        fallback = j.at("default").get<std::string>();
        continue;
      }
      ScriptRule rule;
      if (j.contains("pattern")) {
        rule.pattern.emplace(j.at("pattern").get<std::string>(), std::regex::ECMAScript);
      } else {
        rule.match = j.value("match", std::string());
      }
      rule.response = j.value("response", std::string());
      rule.once = j.value("once", false);
      if (j.contains("error")) rule.error = j.at("error").get<std::string>();
      if (auto u = j.find("usage"); u != j.end()) {
        if (u->contains("prompt_tokens")) rule.prompt_tokens = u->at("prompt_tokens").get<std::size_t>();
        if (u->contains("completion_tokens")) rule.completion_tokens = u->at("completion_tokens").get<std::size_t>();
      }
      rules.push_back(std::move(rule));
    } catch (const std::exception& e) {
      throw ConfigError("mock script line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return std::make_unique<ScriptedBackend>(std::move(rules), std::move(fallback), std::move(tokenizer));
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path,
                                                            std::shared_ptr<const Tokenizer> tokenizer) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read mock script " + path.string());
  return from_stream(in, std::move(tokenizer));
}

ChatExchange ScriptedBackend::complete(std::span<const ChatMessage> messages, const GenerationParams& /*params*/) {
  check_messages(messages);
  auto start = std::chrono::steady_clock::now();
  auto haystack = concatenate_contents(messages);

  const ScriptRule* hit = nullptr;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (consumed_[i]) continue;
      const auto& r = rules_[i];
      bool matched = r.pattern ? std::regex_search(haystack, *r.pattern) : haystack.find(r.match) != std::string::npos;
      if (!matched) continue;
      if (r.once) consumed_[i] = true;
      hit = &r;
      break;
    }
  }
  if (hit != nullptr && hit->error) throw GatewayError(GatewayError::Kind::kScripted, *hit->error);

  ChatExchange ex;
  ex.request.assign(messages.begin(), messages.end());
  ex.backend_id = id();
  ex.default_used = hit == nullptr;
  ex.response_text = hit ? hit->response : default_response_;
  ex.usage_reported = hit != nullptr && hit->prompt_tokens && hit->completion_tokens;
  ex.prompt_tokens = hit && hit->prompt_tokens ? *hit->prompt_tokens : prompt_token_estimate(*tokenizer_, messages);
  ex.completion_tokens =
      hit && hit->completion_tokens ? *hit->completion_tokens : tokenizer_->count(ex.response_text);
  ex.latency = std::chrono::steady_clock::now() - start;
  return ex;
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

RemoteChatBackend::RemoteChatBackend(std::shared_ptr<HttpTransport> transport, RemoteChatOptions options,
                                     std::shared_ptr<const Tokenizer> tokenizer)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      tokenizer_(std::move(tokenizer)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
  while (!options_.base_url.empty() && options_.base_url.back() == '/') options_.base_url.pop_back();
}

ChatExchange RemoteChatBackend::complete(std::span<const ChatMessage> messages, const GenerationParams& params) {
  check_messages(messages);

  json body{{"model", options_.model},
            {"messages", json::array()},
            {"temperature", params.temperature},
            {"max_tokens", params.max_tokens}};
  for (const auto& m : messages) body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  const auto payload = body.dump();
  const auto url = options_.base_url + "/chat/completions";
  auto headers = bearer_from_env();

  auto start = std::chrono::steady_clock::now();
  HttpResponse res;
  std::string last_failure;
  bool ok = false;
  auto backoff = options_.initial_backoff;
  for (std::size_t attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      res = transport_->post_json(url, payload, headers);
    } catch (const TransportError& e) {
      last_failure = e.what();
      continue;
    }
    if (res.status == 429 || res.status >= 500) {
      last_failure = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      throw GatewayError(GatewayError::Kind::kNonRetryableStatus,
                         "chat completion returned HTTP " + std::to_string(res.status), res.status);
    }
    ok = true;
    break;
  }
  if (!ok) {
    throw GatewayError(GatewayError::Kind::kRetryExhausted,
                       "chat completion failed after " + std::to_string(options_.max_retries + 1) +
                           " attempts: " + last_failure);
  }

  ChatExchange ex;
  ex.request.assign(messages.begin(), messages.end());
  ex.backend_id = id();
  try {
    auto j = json::parse(res.body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    ex.response_text = content.is_null() ? std::string() : content.get<std::string>();
    auto usage = j.find("usage");
    if (usage != j.end() && usage->is_object() && usage->contains("prompt_tokens") &&
        usage->contains("completion_tokens")) {
      ex.prompt_tokens = usage->at("prompt_tokens").get<std::size_t>();
      ex.completion_tokens = usage->at("completion_tokens").get<std::size_t>();
      ex.usage_reported = true;
    }
  } catch (const json::exception& e) {
    throw GatewayError(GatewayError::Kind::kResponseShape, std::string("unexpected chat response: ") + e.what(),
                       res.status);
  }
  if (!ex.usage_reported) {
    ex.prompt_tokens = prompt_token_estimate(*tokenizer_, messages);
    ex.completion_tokens = tokenizer_->count(ex.response_text);
  }
  ex.latency = std::chrono::steady_clock::now() - start;
  return ex;
}

}  // namespace okra
