#pragma once

// HTTP JSON clients for hosted embedding and completion services.
// Including this header pulls in cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT
// (and link OpenSSL) to reach https endpoints.

// Eigen comes in before httplib: <resolv.h>, pulled in by httplib, defines a
// `_res` macro that collides with Eigen parameter names.
#include "semlog/embedding.hpp"
#include "semlog/errors.hpp"
#include "semlog/template_parser.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>

namespace semlog {

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path;
  std::string api_key;
  int timeout_seconds = 30;
  int retries = 2;
};

inline std::string credential_from_env(const std::string& var) {
  const char* v = var.empty() ? nullptr : std::getenv(var.c_str());
  if (!v || !*v) throw ConfigError("credential environment variable " + var + " is not set");
  return v;
}

namespace detail {

// POSTs JSON and returns the parsed body. Retries transport failures, 429
// and 5xx with a short linear backoff.
inline nlohmann::json post_json(const HttpEndpoint& ep, const httplib::Headers& headers,
                                const nlohmann::json& body) {
  const std::string payload = body.dump();
  std::string last;
  for (int attempt = 0; attempt <= ep.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200 * attempt));
    httplib::Client cli(ep.base_url);
    cli.set_connection_timeout(ep.timeout_seconds, 0);
    cli.set_read_timeout(ep.timeout_seconds, 0);
    cli.set_write_timeout(ep.timeout_seconds, 0);
    auto res = cli.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      last = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                          false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProviderError(std::string("unparseable response: ") + e.what(), false);
    }
  }
  throw ProviderError(ep.base_url + ep.path + ": " + last, true);
}

}  // namespace detail

// OpenAI-style embeddings endpoint: {"model", "input"} -> data[0].embedding.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(HttpEndpoint endpoint, std::string model, std::size_t dim)
      : ep_(std::move(endpoint)), model_(std::move(model)), dim_(dim) {
    if (ep_.path.empty()) ep_.path = "/v1/embeddings";
    if (dim_ == 0) throw ConfigError("remote provider dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }

  std::vector<double> embed(std::string_view text) const override {
    const auto body = detail::post_json(
        ep_, {{"Authorization", "Bearer " + ep_.api_key}},
        {{"model", model_}, {"input", std::string(text)}});
    try {
      return body.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("embedding response missing data[0].embedding: ") + e.what(),
                          false);
    }
  }

 private:
  HttpEndpoint ep_;
  std::string model_;
  std::size_t dim_;
};

// Anthropic-style messages endpoint: system + one user message, text reply.
class RemoteCompletionClient final : public CompletionClient {
 public:
  RemoteCompletionClient(HttpEndpoint endpoint, std::string model, int max_tokens = 1024)
      : ep_(std::move(endpoint)), model_(std::move(model)), max_tokens_(max_tokens) {
    if (ep_.path.empty()) ep_.path = "/v1/messages";
  }

  std::string complete(const Prompt& prompt, double temperature) override {
    const nlohmann::json request{
        {"model", model_},
        {"max_tokens", max_tokens_},
        {"temperature", temperature},
        {"system", prompt.system_message()},
        {"messages", {{{"role", "user"}, {"content", prompt.user_message()}}}}};
    const auto body = detail::post_json(
        ep_, {{"x-api-key", ep_.api_key}, {"anthropic-version", "2023-06-01"}}, request);
    std::string text;
    try {
      for (const auto& part : body.at("content")) {
        if (part.value("type", "text") == "text") text += part.at("text").get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("completion response missing content: ") + e.what(), false);
    }
    return text;
  }

 private:
  HttpEndpoint ep_;
  std::string model_;
  int max_tokens_;
};

}  // namespace semlog
