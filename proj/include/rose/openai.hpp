#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "rose/errors.hpp"
#include "rose/llm_gateway.hpp"

namespace rose {

struct HttpResult {
  bool delivered = false;  // false: connection-level failure, `error` says why
  int status = 0;
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post_json(const std::string& base_url, const std::string& path, const std::string& body,
                               const std::string& bearer_token, std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib backed transport. `base_url` may carry a path prefix
// ("https://host/v1"), which is prepended to `path`.
class HttplibTransport final : public HttpTransport {
 public:
  HttpResult post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::string& bearer_token, std::chrono::milliseconds timeout) override {
    const auto scheme_end = base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = base_url.find('/', host_start);
    const std::string origin = path_start == std::string::npos ? base_url : base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    HttpResult result;
    try {
      httplib::Client client(origin);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      httplib::Headers headers{{"Authorization", "Bearer " + bearer_token}};
      auto res = client.Post(prefix + path, headers, body, "application/json");
      if (!res) {
        result.error = httplib::to_string(res.error());
        return result;
      }
      result.delivered = true;
      result.status = res->status;
      result.body = res->body;
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    return result;
  }
};

// Exponential backoff: base * factor^(attempt-1), stretched by up to
// `jitter` (a fraction) of random extra delay.
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
  double jitter = 0.25;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

// JSON-over-HTTP client with retry. Connection failures, 429 and 5xx are
// retried; other statuses fail at once. Total attempts never exceed
// max_retries + 1.
class JsonApiClient {
 public:
  JsonApiClient(std::string base_url, std::string token, std::chrono::milliseconds timeout, RetryPolicy policy,
                std::shared_ptr<HttpTransport> transport, Sleeper sleeper, std::uint64_t jitter_seed)
      : base_url_(std::move(base_url)),
        token_(std::move(token)),
        timeout_(timeout),
        policy_(policy),
        transport_(std::move(transport)),
        sleeper_(std::move(sleeper)),
        rng_(jitter_seed) {}

  nlohmann::json post(const std::string& path, const nlohmann::json& payload) {
    const std::string body = payload.dump();
    const int total = policy_.max_retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= total; ++attempt) {
      HttpResult r = transport_->post_json(base_url_, path, body, token_, timeout_);
      if (r.delivered && r.status >= 200 && r.status < 300) {
        try {
          return nlohmann::json::parse(r.body);
        } catch (const nlohmann::json::parse_error& e) {
          throw ProtocolError(std::string("response body is not JSON: ") + e.what(), attempt);
        }
      }
      const bool retryable = !r.delivered || r.status == 429 || r.status >= 500;
      last_error = r.delivered ? "HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 200)
                               : "transport failure: " + r.error;
      if (!retryable) throw ProviderError(base_url_ + path + " failed with " + last_error, attempt);
      if (attempt < total) sleeper_(backoff(attempt));
    }
    throw ProviderError(base_url_ + path + " failed with " + last_error, total);
  }

  std::chrono::milliseconds backoff(int attempt) {
    double extra = 0.0;
    {
      std::lock_guard lock(rng_mu_);
      extra = static_cast<double>(rng_() >> 11) * 0x1.0p-53 * policy_.jitter;
    }
    const double ms = static_cast<double>(policy_.base.count()) * std::pow(policy_.factor, attempt - 1) * (1.0 + extra);
    return std::chrono::milliseconds(static_cast<long long>(std::llround(ms)));
  }

 private:
  std::string base_url_;
  std::string token_;
  std::chrono::milliseconds timeout_;
  RetryPolicy policy_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

struct NetworkOptions {
  std::shared_ptr<HttpTransport> transport = std::make_shared<HttplibTransport>();
  Sleeper sleeper = real_sleeper();
  std::chrono::milliseconds backoff_base{1000};
};

namespace detail {

inline JsonApiClient make_api_client(const ProviderDescriptor& d, const NetworkOptions& net) {
  validate(d);
  RetryPolicy policy;
  policy.max_retries = d.max_retries;
  policy.base = net.backoff_base;
  return JsonApiClient(d.endpoint, resolve_secret(d.auth), d.timeout, policy, net.transport, net.sleeper,
                       d.seed.value_or(0));
}

}  // namespace detail

// POST {endpoint}/chat/completions, reading choices[*].message.content.
class OpenAIChatProvider final : public ChatProvider {
 public:
  explicit OpenAIChatProvider(const ProviderDescriptor& d, NetworkOptions net = {})
      : descriptor_(d), client_(detail::make_api_client(d, net)) {}

  std::vector<std::string> complete(const ChatRequest& req) override {
    if (descriptor_.supports_n) return request(req, req.n_samples);

    // One sample per call, at most max_in_flight outstanding, order preserved.
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(req.n_samples));
    int issued = 0;
    while (issued < req.n_samples) {
      const int wave = std::min(descriptor_.max_in_flight, req.n_samples - issued);
      std::vector<std::future<std::vector<std::string>>> futures;
      for (int i = 0; i < wave; ++i) {
        futures.push_back(std::async(std::launch::async, [this, &req] { return request(req, 1); }));
      }
      for (auto& f : futures) {
        auto one = f.get();
        out.push_back(std::move(one.front()));
      }
      issued += wave;
    }
    return out;
  }

  static nlohmann::json request_body(const std::string& model, const ChatRequest& req, int n) {
    nlohmann::json body = {
        {"model", model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
        {"temperature", req.temperature},
        {"n", n},
        {"max_tokens", req.max_tokens},
    };
    if (!req.stop.empty()) body["stop"] = req.stop;
    return body;
  }

 private:
  std::vector<std::string> request(const ChatRequest& req, int n) {
    const auto response = client_.post("/chat/completions", request_body(descriptor_.model_name, req, n));
    std::vector<std::string> out;
    try {
      const auto& choices = response.at("choices");
      if (!choices.is_array()) throw ProtocolError("\"choices\" is not an array");
      for (const auto& choice : choices) {
        const auto& content = choice.at("message").at("content");
        out.push_back(content.is_null() ? std::string() : content.get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed chat completion response: ") + e.what());
    }
    if (out.size() != static_cast<std::size_t>(n)) {
      throw ProtocolError("expected " + std::to_string(n) + " choices, got " + std::to_string(out.size()));
    }
    return out;
  }

  ProviderDescriptor descriptor_;
  JsonApiClient client_;
};

// POST {endpoint}/embeddings, reading data[0].embedding.
class OpenAIEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit OpenAIEmbeddingProvider(const ProviderDescriptor& d, NetworkOptions net = {})
      : descriptor_(d), client_(detail::make_api_client(d, net)) {}

  Embedding embed_raw(std::string_view text) override {
    const nlohmann::json body = {{"model", descriptor_.model_name}, {"input", std::string(text)}};
    const auto response = client_.post("/embeddings", body);
    try {
      auto v = response.at("data").at(0).at("embedding").get<Embedding>();
      if (v.empty()) throw ProtocolError("empty embedding");
      return v;
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed embedding response: ") + e.what());
    }
  }

 private:
  ProviderDescriptor descriptor_;
  JsonApiClient client_;
};

inline std::shared_ptr<ChatProvider> make_chat_provider(const ProviderDescriptor& d, NetworkOptions net = {}) {
  validate(d);
  switch (d.kind) {
    case ProviderKind::OpenAICompatibleChat: return std::make_shared<OpenAIChatProvider>(d, std::move(net));
    case ProviderKind::MockChat: return std::make_shared<ScriptedChatProvider>(d.script);
    default: throw ConfigError("descriptor is not a chat provider");
  }
}

inline std::shared_ptr<EmbeddingProvider> make_embedding_provider(const ProviderDescriptor& d, NetworkOptions net = {}) {
  validate(d);
  switch (d.kind) {
    case ProviderKind::OpenAICompatibleEmbedding: return std::make_shared<OpenAIEmbeddingProvider>(d, std::move(net));
    case ProviderKind::MockEmbedding: return std::make_shared<HashEmbeddingProvider>(d.embedding_dim, *d.seed);
    default: throw ConfigError("descriptor is not an embedding provider");
  }
}

}  // namespace rose
