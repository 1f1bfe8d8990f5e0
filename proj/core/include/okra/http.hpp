#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "okra/errors.hpp"

namespace okra {

// Connection-level failure: nothing usable came back from the peer.
class TransportError : public Error {
 public:
  using Error::Error;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& url, const std::string& body, const HttpHeaders& headers) = 0;
};

// cpp-httplib client. Accepts http:// URLs, and https:// when built with TLS.
class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::milliseconds timeout = std::chrono::seconds(60)) : timeout_(timeout) {}
  HttpResponse post_json(const std::string& url, const std::string& body, const HttpHeaders& headers) override;

 private:
  std::chrono::milliseconds timeout_;
};

// Bearer header from OKRA_API_KEY, empty when the variable is unset.
HttpHeaders bearer_from_env();

}  // namespace okra
