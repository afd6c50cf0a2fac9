#pragma once

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rose/errors.hpp"
#include "rose/numeric.hpp"
#include "rose/prompting.hpp"

namespace rose {

struct ChatRequest {
  std::string prompt;
  double temperature = 1.0;
  int n_samples = 1;
  int max_tokens = 512;
  std::vector<std::string> stop;
};

inline void validate(const ChatRequest& req) {
  if (!(req.temperature >= 0.0) || !std::isfinite(req.temperature)) throw ConfigError("temperature must be >= 0");
  if (req.n_samples < 1) throw ConfigError("n_samples must be at least 1");
  if (req.max_tokens < 1) throw ConfigError("max_tokens must be at least 1");
  if (req.temperature == 0.0 && req.n_samples > 1) {
    throw ConfigError("temperature 0 gives identical samples; use it only with n_samples = 1");
  }
}

// Produces raw completions. Implementations must be safe to call from
// several threads at once.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Exactly req.n_samples completions, in generation order.
  virtual std::vector<std::string> complete(const ChatRequest& req) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Raw provider vector; normalization happens in embed().
  virtual Embedding embed_raw(std::string_view text) = 0;
};

namespace detail {

inline std::string trim_trailing_whitespace(std::string s) {
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  s.erase(last == std::string::npos ? 0 : last + 1);
  return s;
}

}  // namespace detail

// Samples req.n_samples completions. Completions pass through unchanged
// apart from trimming trailing whitespace.
inline std::vector<std::string> sample_paths(ChatProvider& provider, const ChatRequest& req) {
  validate(req);
  auto completions = provider.complete(req);
  if (completions.size() != static_cast<std::size_t>(req.n_samples)) {
    throw ProtocolError("provider returned " + std::to_string(completions.size()) + " completions, expected " +
                        std::to_string(req.n_samples));
  }
  for (auto& c : completions) c = detail::trim_trailing_whitespace(std::move(c));
  return completions;
}

// Unit-length embedding of `text`, whatever the provider's own normalization.
inline Embedding embed(EmbeddingProvider& provider, std::string_view text) {
  if (text.empty()) throw DomainError("embed: text is empty");
  return l2_normalized(provider.embed_raw(text));
}

// ---------------------------------------------------------------------------
// Scripted chat mock

enum class ScriptKeyMode { Exact, Fnv1a64 };

// Canned completions per question. Keys are either the exact question text
// or the lowercase 16-digit hex FNV-1a 64 hash of it.
struct ChatScript {
  ScriptKeyMode key_mode = ScriptKeyMode::Exact;
  std::map<std::string, std::vector<std::string>> completions;
  std::optional<std::string> default_completion;
};

inline std::string fnv1a64_hex(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

// Script file layout:
//   {"key": "exact" | "fnv1a64", "default": "...", "questions": {"<key>": ["...", ...] | "..."}}
inline ChatScript chat_script_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("chat script must be a JSON object");
  ChatScript script;
  const std::string mode = j.value("key", std::string("exact"));
  if (mode == "exact") {
    script.key_mode = ScriptKeyMode::Exact;
  } else if (mode == "fnv1a64") {
    script.key_mode = ScriptKeyMode::Fnv1a64;
  } else {
    throw ParseError("chat script: unknown key mode \"" + mode + "\"");
  }
  if (auto it = j.find("default"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("chat script: \"default\" must be a string");
    script.default_completion = it->get<std::string>();
  }
  auto qs = j.find("questions");
  if (qs == j.end() || !qs->is_object()) throw ParseError("chat script: missing \"questions\" object");
  for (const auto& [key, value] : qs->items()) {
    std::vector<std::string> list;
    if (value.is_string()) {
      list.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      for (const auto& c : value) {
        if (!c.is_string()) throw ParseError("chat script: completions for \"" + key + "\" must be strings");
        list.push_back(c.get<std::string>());
      }
    } else {
      throw ParseError("chat script: completions for \"" + key + "\" must be a string or array");
    }
    if (list.empty()) throw ParseError("chat script: no completions for \"" + key + "\"");
    script.completions.emplace(key, std::move(list));
  }
  return script;
}

inline ChatScript load_chat_script(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open chat script " + path.string());
  try {
    return chat_script_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("chat script " + path.string() + ": " + e.what());
  }
}

// Replays scripted completions for the question found at the end of the
// prompt, cycling when more samples are requested than are scripted.
// Temperature is ignored, so replies are fully deterministic.
class ScriptedChatProvider final : public ChatProvider {
 public:
  explicit ScriptedChatProvider(std::shared_ptr<const ChatScript> script) : script_(std::move(script)) {
    if (!script_) throw ConfigError("scripted chat provider needs a script");
  }

  std::vector<std::string> complete(const ChatRequest& req) override {
    const std::string question = extract_test_question(req.prompt).value_or(req.prompt);
    const std::string key = script_->key_mode == ScriptKeyMode::Exact ? question : fnv1a64_hex(question);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(req.n_samples));
    if (auto it = script_->completions.find(key); it != script_->completions.end()) {
      for (int i = 0; i < req.n_samples; ++i) out.push_back(it->second[static_cast<std::size_t>(i) % it->second.size()]);
    } else if (script_->default_completion) {
      out.assign(static_cast<std::size_t>(req.n_samples), *script_->default_completion);
    } else {
      throw ScriptMissError(question);
    }
    return out;
  }

 private:
  std::shared_ptr<const ChatScript> script_;
};

// ---------------------------------------------------------------------------
// Hashed bag-of-words embedding mock

// Each lowercase alphanumeric token is hashed (with the seed) to a
// pseudo-random vector in [-1, 1)^dim and the token vectors are summed.
// Texts sharing words therefore land close together, which gives partition
// tests realistic spread. Pure integer hashing plus IEEE arithmetic keeps
// the output identical across platforms.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  HashEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
  }

  Embedding embed_raw(std::string_view text) override {
    Embedding v(dim_, 0.0);
    bool any = false;
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      accumulate(v, token);
      token.clear();
      any = true;
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    if (!any) accumulate(v, text);
    return v;
  }

  std::size_t dim() const noexcept { return dim_; }

 private:
  void accumulate(Embedding& v, std::string_view token) const {
    std::uint64_t state = fnv1a64(token) ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    for (double& x : v) {
      const std::uint64_t bits = splitmix64(state);
      x += static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
    }
  }

  std::size_t dim_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Provider descriptors

enum class ProviderKind { OpenAICompatibleChat, OpenAICompatibleEmbedding, MockChat, MockEmbedding };

struct ProviderDescriptor {
  ProviderKind kind = ProviderKind::MockChat;
  std::string endpoint;  // base URL, e.g. https://api.openai.com/v1
  std::string model_name;
  std::string auth;  // secret reference: "env:NAME" or "file:PATH"
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
  bool supports_n = true;  // endpoint accepts n > 1 in one request
  int max_in_flight = 4;   // concurrent single-sample calls when supports_n is false
  std::shared_ptr<const ChatScript> script;  // mock chat
  std::optional<std::uint64_t> seed;         // mock embedding; also seeds retry jitter
  std::size_t embedding_dim = 64;            // mock embedding
};

inline bool is_network(ProviderKind k) {
  return k == ProviderKind::OpenAICompatibleChat || k == ProviderKind::OpenAICompatibleEmbedding;
}

inline void validate(const ProviderDescriptor& d) {
  if (is_network(d.kind)) {
    if (d.endpoint.empty()) throw ConfigError("network provider needs an endpoint");
    if (d.auth.empty()) throw ConfigError("network provider needs an auth secret reference");
    if (d.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (d.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  } else if (d.kind == ProviderKind::MockChat) {
    if (!d.script) throw ConfigError("mock chat provider needs a script");
  } else {
    if (!d.seed) throw ConfigError("mock embedding provider needs a seed");
    if (d.embedding_dim == 0) throw ConfigError("embedding dimension must be positive");
  }
}

inline ProviderDescriptor mock_chat_from_script(ChatScript script) {
  ProviderDescriptor d;
  d.kind = ProviderKind::MockChat;
  d.model_name = "scripted";
  d.script = std::make_shared<const ChatScript>(std::move(script));
  return d;
}

inline ProviderDescriptor mock_embedding(std::size_t dim, std::uint64_t seed) {
  ProviderDescriptor d;
  d.kind = ProviderKind::MockEmbedding;
  d.model_name = "hash-bow";
  d.embedding_dim = dim;
  d.seed = seed;
  return d;
}

// Resolves "env:NAME" or "file:PATH". Literal secrets are not accepted.
inline std::string resolve_secret(std::string_view reference) {
  if (reference.starts_with("env:")) {
    const std::string name(reference.substr(4));
    const char* value = std::getenv(name.c_str());
    if (!value || !*value) throw ConfigError("environment variable " + name + " is not set");
    return value;
  }
  if (reference.starts_with("file:")) {
    const std::filesystem::path path(reference.substr(5));
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read secret file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    std::string s = detail::trim_trailing_whitespace(ss.str());
    if (s.empty()) throw ConfigError("secret file " + path.string() + " is empty");
    return s;
  }
  throw ConfigError("secret reference must start with env: or file:");
}

}  // namespace rose
