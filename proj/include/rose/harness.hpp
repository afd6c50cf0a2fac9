#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rose/errors.hpp"
#include "rose/io.hpp"
#include "rose/llm_gateway.hpp"
#include "rose/numeric.hpp"
#include "rose/orchestrator.hpp"
#include "rose/pool.hpp"
#include "rose/prompting.hpp"
#include "rose/scoring.hpp"

namespace rose {

enum class ErrorPolicy { Abort, Skip };
enum class BaselineMode { ZeroShot, ZeroShotSC };

struct EngineConfig {
  int k = 8;
  int m = 20;
  double temperature = 1.0;
  int max_tokens = 512;
  AnswerType answer_type = AnswerType::number();
  std::uint64_t seed = 0;
  PartitionStrategy partition = PartitionStrategy::EqualWidth;
  ThresholdMode threshold = DynamicThreshold{1.2};
  ErrorPolicy on_provider_error = ErrorPolicy::Abort;
  std::optional<std::size_t> max_pool_size;
  std::filesystem::path pool_path;  // empty: do not persist

  OrchestratorConfig orchestrator() const { return {k, threshold, partition}; }
  PoolLimits pool_limits() const { return {m, max_pool_size}; }
};

inline void validate(const EngineConfig& c) {
  validate(c.orchestrator());
  if (c.m < 1) throw ConfigError("paths (m) must be at least 1");
  if (!(c.temperature >= 0.0) || !std::isfinite(c.temperature)) throw ConfigError("temperature must be >= 0");
  if (c.temperature == 0.0 && c.m > 1) throw ConfigError("temperature 0 cannot produce diverse paths; use m = 1");
  if (c.max_tokens < 1) throw ConfigError("max_tokens must be at least 1");
  if (c.max_pool_size && *c.max_pool_size == 0) throw ConfigError("max_pool_size must be positive");
}

// Demonstration count and answer type per benchmark.
struct TaskDefaults {
  std::string_view name;
  AnswerType answer_type;
  int k;
};

inline std::optional<TaskDefaults> task_defaults(std::string_view name) {
  std::string key;
  for (unsigned char c : name) {
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  static const std::map<std::string, TaskDefaults> kTasks = {
      {"addsub", {"addsub", AnswerType::number(), 8}},
      {"aqua", {"aqua", AnswerType::multiple_choice(5), 4}},
      {"gsm8k", {"gsm8k", AnswerType::number(), 8}},
      {"singleeq", {"singleeq", AnswerType::number(), 8}},
      {"singleop", {"singleop", AnswerType::number(), 8}},
      {"svamp", {"svamp", AnswerType::number(), 8}},
      {"commonsenseqa", {"commonsenseqa", AnswerType::multiple_choice(5), 7}},
      {"csqa", {"commonsenseqa", AnswerType::multiple_choice(5), 7}},
      {"strategyqa", {"strategyqa", AnswerType::yes_no(), 6}},
      {"strategy", {"strategyqa", AnswerType::yes_no(), 6}},
      {"date", {"date", AnswerType::multiple_choice(6), 6}},
      {"dateunderstanding", {"date", AnswerType::multiple_choice(6), 6}},
  };
  if (auto it = kTasks.find(key); it != kTasks.end()) return it->second;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetItem {
  std::string question;  // with "Answer Choices: ..." appended when choices exist
  std::string gold;      // normalized
};

// Line-delimited {"question", "answer", "choices"?} records. Blank lines are skipped.
inline std::vector<DatasetItem> parse_dataset(std::string_view text, const AnswerType& type) {
  std::vector<DatasetItem> items;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed dataset record: ") + e.what(), line_no);
    }
    if (!rec.is_object()) throw ParseError("dataset record is not an object", line_no);
    auto q = rec.find("question");
    if (q == rec.end() || !q->is_string()) throw ParseError("missing string field \"question\"", line_no);
    auto a = rec.find("answer");
    if (a == rec.end() || !(a->is_string() || a->is_number() || a->is_boolean())) {
      throw ParseError("missing field \"answer\"", line_no);
    }
    std::string raw_answer;
    if (a->is_string()) {
      raw_answer = a->get<std::string>();
    } else if (a->is_boolean()) {
      raw_answer = a->get<bool>() ? "yes" : "no";
    } else {
      raw_answer = a->dump();
    }

    std::vector<std::string> choices;
    if (auto c = rec.find("choices"); c != rec.end() && !c->is_null()) {
      if (!c->is_array()) throw ParseError("\"choices\" must be an array of strings", line_no);
      for (const auto& choice : *c) {
        if (!choice.is_string()) throw ParseError("\"choices\" must be an array of strings", line_no);
        choices.push_back(choice.get<std::string>());
      }
    }
    auto gold = try_normalize_answer(raw_answer, type);
    if (!gold) {
      throw ValidationError("line " + std::to_string(line_no) + ": gold answer \"" + raw_answer +
                            "\" does not fit the answer type");
    }
    items.push_back({question_with_choices(q->get<std::string>(), choices), std::move(*gold)});
  }
  return items;
}

inline std::vector<DatasetItem> load_dataset(const std::filesystem::path& path, const AnswerType& type) {
  return parse_dataset(read_file(path), type);
}

// Largest "choices" length in a dataset file, or 0 when no record has choices.
inline int max_choice_count(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::size_t best = 0;
  for (std::string line; std::getline(in, line);) {
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_object()) {
      if (auto c = rec.find("choices"); c != rec.end() && c->is_array()) best = std::max(best, c->size());
    }
  }
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Orders and sampling. std::shuffle is avoided: its output differs between
// standard libraries, and runs must reproduce across platforms.

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded_uniform(rng, i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

// Permutation 0 is the identity; the rest are seeded Fisher-Yates shuffles.
inline std::vector<std::vector<std::size_t>> shuffle_orders(std::size_t n_items, int n_orders, std::uint64_t seed) {
  if (n_orders < 1) throw ConfigError("orders must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> orders;
  std::vector<std::size_t> identity(n_items);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  orders.push_back(std::move(identity));
  for (int i = 1; i < n_orders; ++i) orders.push_back(seeded_permutation(n_items, rng));
  return orders;
}

// `n` items chosen at random, kept in file order.
inline std::vector<DatasetItem> subsample(const std::vector<DatasetItem>& items, std::size_t n, std::uint64_t seed) {
  if (n >= items.size()) return items;
  std::mt19937_64 rng(seed ^ 0x5a17c0de5a17c0deULL);
  auto perm = seeded_permutation(items.size(), rng);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  std::vector<DatasetItem> out;
  for (auto i : perm) out.push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Answering

struct EvalRecord {
  std::size_t question_index = 0;  // position in the stream as run
  std::size_t source_index = 0;    // position in the dataset
  std::string question;
  std::string gold_answer;
  std::optional<std::string> predicted;
  bool correct = false;
  std::optional<double> uncertainty;
  std::optional<double> complexity;
  std::vector<std::uint64_t> demos_used;
  std::optional<std::uint64_t> appended_id;  // pool id of the experience this question produced
  std::chrono::milliseconds latency{0};
  std::optional<std::string> error;
};

using Clock = std::function<std::chrono::steady_clock::time_point()>;

inline Clock system_clock_source() { return [] { return std::chrono::steady_clock::now(); }; }
// Every reading is the same instant, so latencies are zero and logs are reproducible.
inline Clock frozen_clock() { return [] { return std::chrono::steady_clock::time_point{}; }; }

struct Engine {
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<EmbeddingProvider> embedder;  // unused by baselines
  Clock clock = system_clock_source();
};

// Exact match after normalization; numbers also match within 1e-6.
inline bool grade(const std::optional<std::string>& predicted, const std::string& gold, const AnswerType& type) {
  if (!predicted) return false;
  if (*predicted == gold) return true;
  if (type.kind != AnswerType::Kind::Number) return false;
  char* end_p = nullptr;
  char* end_g = nullptr;
  const double p = std::strtod(predicted->c_str(), &end_p);
  const double g = std::strtod(gold.c_str(), &end_g);
  if (*end_p != '\0' || *end_g != '\0') return false;
  return std::abs(p - g) <= 1e-6;
}

struct AnswerResult {
  EvalRecord record;  // question_index, source_index and gold are left for the caller
  std::optional<Experience> experience;
};

namespace detail {

inline std::vector<SampledPath> parse_paths(const std::vector<std::string>& completions, const AnswerType& type) {
  std::vector<SampledPath> paths;
  paths.reserve(completions.size());
  for (const auto& c : completions) {
    if (auto parsed = parse_answer(c, type)) {
      paths.push_back({std::move(parsed->rationale), std::move(parsed->answer)});
    } else {
      paths.push_back({c, std::nullopt});
    }
  }
  return paths;
}

}  // namespace detail

// One step of the streaming procedure: embed, orchestrate against the pool
// snapshot, prompt, sample m paths, parse and score. The returned experience
// is what the caller should append; it is absent when no path parsed.
inline AnswerResult answer_question(const std::string& question, const ExperiencePool& pool,
                                    const EngineConfig& config, Engine& engine) {
  const auto started = engine.clock();
  AnswerResult out;
  out.record.question = question;

  Embedding embedding = embed(*engine.embedder, question);
  const auto orchestration = orchestrate(question, embedding, pool, config.orchestrator());
  for (const auto& d : orchestration.demonstrations) out.record.demos_used.push_back(d.id);

  ChatRequest req;
  req.prompt = build_prompt(orchestration.demonstrations, question);
  req.temperature = config.temperature;
  req.n_samples = config.m;
  req.max_tokens = config.max_tokens;
  const auto completions = sample_paths(*engine.chat, req);

  try {
    auto outcome = score_outcome(question, detail::parse_paths(completions, config.answer_type), config.m);
    out.record.predicted = outcome.majority_answer;
    out.record.uncertainty = round_significant(outcome.uncertainty);
    out.record.complexity = round_significant(outcome.complexity);
    Experience exp;
    exp.question = question;
    exp.rationale = outcome.representative_rationale();
    exp.answer = outcome.majority_answer;
    exp.uncertainty = outcome.uncertainty;
    exp.complexity = outcome.complexity;
    exp.embedding = std::move(embedding);
    out.experience = std::move(exp);
  } catch (const UnanswerableError&) {
    // No majority answer: the question counts as wrong and adds nothing to the pool.
  }
  out.record.latency = std::chrono::duration_cast<std::chrono::milliseconds>(engine.clock() - started);
  return out;
}

struct StreamResult {
  std::vector<EvalRecord> records;
  ExperiencePool pool;
  std::vector<std::size_t> order;  // dataset index of each stream position
  bool aborted = false;
};

// Answers the items strictly in `order`, appending each produced experience
// before the next question is orchestrated. With ErrorPolicy::Abort a provider
// failure ends the run; the failed question is still recorded. The pool is
// persisted to config.pool_path (when set) either way.
inline StreamResult run_stream(const std::vector<DatasetItem>& dataset, const EngineConfig& config, Engine& engine,
                               std::vector<std::size_t> order = {}) {
  validate(config);
  if (order.empty()) {
    order.resize(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  StreamResult result;
  result.order = order;
  StreamingPool pool(ExperiencePool(config.pool_limits()));

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const DatasetItem& item = dataset.at(order[pos]);
    EvalRecord record;
    try {
      const ExperiencePool snapshot = pool.snapshot();
      AnswerResult answer = answer_question(item.question, snapshot, config, engine);
      record = std::move(answer.record);
      if (answer.experience) record.appended_id = pool.append(std::move(*answer.experience)).id;
    } catch (const ProviderError& e) {
      record.question = item.question;
      record.error = e.what();
      if (config.on_provider_error == ErrorPolicy::Abort) result.aborted = true;
    }
    record.question_index = pos;
    record.source_index = order[pos];
    record.gold_answer = item.gold;
    record.correct = grade(record.predicted, item.gold, config.answer_type);
    result.records.push_back(std::move(record));
    if (result.aborted) break;
  }
  result.pool = pool.snapshot();
  if (!config.pool_path.empty()) result.pool.save(config.pool_path);
  return result;
}

// Zero-shot baselines with no pool: one greedy path, or m sampled paths with
// a majority vote (self-consistency) at the configured temperature.
inline StreamResult run_baseline(const std::vector<DatasetItem>& dataset, const EngineConfig& config, Engine& engine,
                                 BaselineMode mode, std::vector<std::size_t> order = {}) {
  EngineConfig effective = config;
  if (mode == BaselineMode::ZeroShot) {
    effective.m = 1;
    effective.temperature = 0.0;
  }
  validate(effective);
  if (order.empty()) {
    order.resize(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  StreamResult result;
  result.order = order;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const DatasetItem& item = dataset.at(order[pos]);
    EvalRecord record;
    record.question = item.question;
    const auto started = engine.clock();
    try {
      ChatRequest req;
      req.prompt = build_prompt({}, item.question);
      req.temperature = effective.temperature;
      req.n_samples = effective.m;
      req.max_tokens = effective.max_tokens;
      const auto completions = sample_paths(*engine.chat, req);
      try {
        const auto outcome =
            score_outcome(item.question, detail::parse_paths(completions, effective.answer_type), effective.m);
        record.predicted = outcome.majority_answer;
        record.uncertainty = round_significant(outcome.uncertainty);
        record.complexity = round_significant(outcome.complexity);
      } catch (const UnanswerableError&) {
      }
    } catch (const ProviderError& e) {
      record.error = e.what();
      if (effective.on_provider_error == ErrorPolicy::Abort) result.aborted = true;
    }
    record.latency = std::chrono::duration_cast<std::chrono::milliseconds>(engine.clock() - started);
    record.question_index = pos;
    record.source_index = order[pos];
    record.gold_answer = item.gold;
    record.correct = grade(record.predicted, item.gold, effective.answer_type);
    result.records.push_back(std::move(record));
    if (result.aborted) break;
  }
  return result;
}

// True when every demonstration used for a question came from a question
// earlier in the same stream.
inline bool streaming_causal(const std::vector<EvalRecord>& records) {
  std::map<std::uint64_t, std::size_t> origin;
  for (const auto& r : records) {
    if (r.appended_id) origin[*r.appended_id] = r.question_index;
  }
  for (const auto& r : records) {
    for (auto id : r.demos_used) {
      auto it = origin.find(id);
      if (it == origin.end() || it->second >= r.question_index) return false;
    }
  }
  return true;
}

}  // namespace rose
