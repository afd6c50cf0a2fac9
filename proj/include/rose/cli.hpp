#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rose/errors.hpp"
#include "rose/harness.hpp"
#include "rose/llm_gateway.hpp"
#include "rose/openai.hpp"
#include "rose/report.hpp"

namespace rose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitProviderAbort = 3;

struct RunOptions {
  std::filesystem::path dataset;
  std::string task;
  std::string answer_type;
  int options = 0;
  std::optional<int> k;
  double lambda = 1.2;
  int paths = 20;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::filesystem::path pool;
  std::string provider = "openai";
  std::filesystem::path mock_script;
  std::filesystem::path report;
  std::string baseline;
  int orders = 1;
  std::string threshold_mode = "dynamic";
  std::string partition = "equal-width";
  std::optional<std::size_t> sample;
  std::size_t embed_dim = 64;
  int max_tokens = 512;
  int max_retries = 3;
  std::optional<std::size_t> max_pool_size;
  std::string on_error = "abort";
  bool no_timing = false;
  bool sequential_samples = false;
  std::string chat_model = "gpt-3.5-turbo";
  std::string embed_model = "all-mpnet-base-v2";
};

// "pool.jsonl" -> "pool.order2.jsonl"
inline std::filesystem::path order_path(const std::filesystem::path& base, std::size_t order) {
  if (order == 0 || base.empty()) return base;
  auto name = base.stem().string() + ".order" + std::to_string(order) + base.extension().string();
  return base.parent_path() / name;
}

inline AnswerType resolve_answer_type(const RunOptions& o, const std::optional<TaskDefaults>& task) {
  if (o.answer_type.empty()) {
    if (!task) throw ConfigError("--answer-type is required when the task is not recognised");
    if (task->answer_type.kind == AnswerType::Kind::MultipleChoice && o.options > 0) {
      return AnswerType::multiple_choice(o.options);
    }
    return task->answer_type;
  }
  if (o.answer_type == "number") return AnswerType::number();
  if (o.answer_type == "yesno") return AnswerType::yes_no();
  if (o.answer_type == "choice") {
    int n = o.options;
    if (n == 0) n = max_choice_count(o.dataset);
    if (n == 0 && task && task->answer_type.kind == AnswerType::Kind::MultipleChoice) n = task->answer_type.option_count;
    if (n == 0) n = 5;
    return AnswerType::multiple_choice(n);
  }
  throw ConfigError("unknown answer type: " + o.answer_type);
}

inline EngineConfig build_config(const RunOptions& o) {
  std::optional<TaskDefaults> task = o.task.empty() ? task_defaults(o.dataset.stem().string()) : task_defaults(o.task);
  if (!o.task.empty() && !task) throw ConfigError("unknown task: " + o.task);

  EngineConfig c;
  c.answer_type = resolve_answer_type(o, task);
  if (o.k) {
    c.k = *o.k;
  } else if (task) {
    c.k = task->k;
  } else {
    throw ConfigError("cannot infer k from the dataset name; pass --k or --task");
  }
  c.m = o.paths;
  c.temperature = o.temperature;
  c.max_tokens = o.max_tokens;
  c.seed = o.seed;
  c.max_pool_size = o.max_pool_size;
  c.pool_path = o.pool;

  if (o.partition == "equal-width") {
    c.partition = PartitionStrategy::EqualWidth;
  } else if (o.partition == "equal-count") {
    c.partition = PartitionStrategy::EqualCount;
  } else {
    throw ConfigError("unknown partition strategy: " + o.partition);
  }

  if (o.threshold_mode == "dynamic") {
    c.threshold = DynamicThreshold{o.lambda};
  } else if (o.threshold_mode.starts_with("fixed:")) {
    const std::string value = o.threshold_mode.substr(6);
    char* end = nullptr;
    const double x = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0') throw ConfigError("bad fixed threshold: " + value);
    c.threshold = FixedThreshold{x};
  } else {
    throw ConfigError("threshold mode must be dynamic or fixed:X");
  }

  if (o.on_error == "abort") {
    c.on_provider_error = ErrorPolicy::Abort;
  } else if (o.on_error == "skip") {
    c.on_provider_error = ErrorPolicy::Skip;
  } else {
    throw ConfigError("--on-error must be abort or skip");
  }
  if (o.orders < 1) throw ConfigError("--orders must be at least 1");
  return c;
}

inline Engine build_engine(const RunOptions& o, const EngineConfig& c) {
  Engine engine;
  if (o.no_timing) engine.clock = frozen_clock();
  if (o.provider == "mock") {
    if (o.mock_script.empty()) throw ConfigError("--provider mock needs --mock-script");
    engine.chat = make_chat_provider(mock_chat_from_script(load_chat_script(o.mock_script)));
    engine.embedder = make_embedding_provider(mock_embedding(o.embed_dim, c.seed));
    return engine;
  }
  if (o.provider != "openai") throw ConfigError("unknown provider: " + o.provider);

  const char* base = std::getenv("ROSE_API_BASE");
  if (!base || !*base) throw ConfigError("ROSE_API_BASE is not set");
  const char* embed_base = std::getenv("ROSE_EMBED_API_BASE");

  ProviderDescriptor chat;
  chat.kind = ProviderKind::OpenAICompatibleChat;
  chat.endpoint = base;
  chat.model_name = o.chat_model;
  chat.auth = "env:ROSE_API_KEY";
  chat.max_retries = o.max_retries;
  chat.supports_n = !o.sequential_samples;
  chat.seed = c.seed;

  ProviderDescriptor emb = chat;
  emb.kind = ProviderKind::OpenAICompatibleEmbedding;
  emb.endpoint = embed_base && *embed_base ? embed_base : base;
  emb.model_name = o.embed_model;

  engine.chat = make_chat_provider(chat);
  engine.embedder = make_embedding_provider(emb);
  return engine;
}

inline std::optional<BaselineMode> parse_baseline(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "zero-shot") return BaselineMode::ZeroShot;
  if (s == "zero-shot-sc") return BaselineMode::ZeroShotSC;
  throw ConfigError("unknown baseline: " + s);
}

// Runs the dataset once per requested test order and writes the report.
// Returns the process exit code.
inline int execute_run(const RunOptions& o, std::ostream& out) {
  const EngineConfig config = build_config(o);
  validate(config);
  const auto baseline = parse_baseline(o.baseline);
  auto dataset = load_dataset(o.dataset, config.answer_type);
  if (o.sample) dataset = subsample(dataset, *o.sample, config.seed);
  if (dataset.empty()) throw ConfigError("dataset is empty");
  Engine engine = build_engine(o, config);

  const auto orders = shuffle_orders(dataset.size(), o.orders, config.seed);
  std::vector<StreamResult> runs;
  bool aborted = false;
  for (std::size_t i = 0; i < orders.size() && !aborted; ++i) {
    EngineConfig run_config = config;
    run_config.pool_path = order_path(config.pool_path, i);
    StreamResult run = baseline ? run_baseline(dataset, run_config, engine, *baseline, orders[i])
                                : run_stream(dataset, run_config, engine, orders[i]);
    aborted = run.aborted;
    const std::size_t correct = static_cast<std::size_t>(
        std::count_if(run.records.begin(), run.records.end(), [](const EvalRecord& r) { return r.correct; }));
    out << "order " << i << ": " << correct << "/" << run.records.size() << " correct, pool " << run.pool.size()
        << (run.aborted ? " (aborted)" : "") << "\n";
    runs.push_back(std::move(run));
  }
  if (!o.report.empty()) write_file_atomic(o.report, report_document(runs, config, baseline));
  return aborted ? kExitProviderAbort : kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Streaming experience orchestration for chain-of-thought reasoning"};
  app.require_subcommand(1);
  RunOptions o;
  auto* run_cmd = app.add_subcommand("run", "Answer a dataset as a stream (or run a zero-shot baseline)");
  run_cmd->add_option("--dataset", o.dataset, "Line-delimited {question, answer, choices?} records")->required();
  run_cmd->add_option("--task", o.task, "Benchmark name for default k and answer type (e.g. gsm8k, aqua)");
  run_cmd->add_option("--answer-type", o.answer_type, "number | choice | yesno")
      ->check(CLI::IsMember({"number", "choice", "yesno"}));
  run_cmd->add_option("--options", o.options, "Number of multiple-choice options (default: from the dataset)");
  run_cmd->add_option("--k", o.k, "Demonstrations per question");
  run_cmd->add_option("--lambda", o.lambda, "Dynamic threshold multiplier")->capture_default_str();
  run_cmd->add_option("--paths", o.paths, "Reasoning paths sampled per question")->capture_default_str();
  run_cmd->add_option("--temperature", o.temperature, "Sampling temperature")->capture_default_str();
  run_cmd->add_option("--seed", o.seed, "Seed for orders, subsampling, mock embeddings and jitter")->capture_default_str();
  run_cmd->add_option("--pool", o.pool, "Where to write the final experience pool");
  run_cmd->add_option("--provider", o.provider, "openai | mock")->check(CLI::IsMember({"openai", "mock"}))
      ->capture_default_str();
  run_cmd->add_option("--mock-script", o.mock_script, "Chat script for --provider mock");
  run_cmd->add_option("--report", o.report, "Where to write records and the summary");
  run_cmd->add_option("--baseline", o.baseline, "zero-shot | zero-shot-sc")
      ->check(CLI::IsMember({"zero-shot", "zero-shot-sc"}));
  run_cmd->add_option("--orders", o.orders, "Number of test orders (order 0 is the file order)")->capture_default_str();
  run_cmd->add_option("--threshold-mode", o.threshold_mode, "dynamic | fixed:X")->capture_default_str();
  run_cmd->add_option("--partition", o.partition, "equal-width | equal-count")->capture_default_str();
  run_cmd->add_option("--sample", o.sample, "Evaluate a seeded random subset of N questions");
  run_cmd->add_option("--embed-dim", o.embed_dim, "Mock embedding dimension")->capture_default_str();
  run_cmd->add_option("--max-tokens", o.max_tokens, "Completion token limit")->capture_default_str();
  run_cmd->add_option("--max-retries", o.max_retries, "Retries per provider call")->capture_default_str();
  run_cmd->add_option("--max-pool-size", o.max_pool_size, "Evict oldest experiences beyond this size");
  run_cmd->add_option("--on-error", o.on_error, "abort | skip on provider errors")->capture_default_str();
  run_cmd->add_flag("--no-timing", o.no_timing, "Record zero latency so logs are reproducible");
  run_cmd->add_flag("--sequential-samples", o.sequential_samples, "Endpoint lacks n > 1; request one sample per call");
  run_cmd->add_option("--chat-model", o.chat_model, "Chat model name")->capture_default_str();
  run_cmd->add_option("--embed-model", o.embed_model, "Embedding model name")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    return execute_run(o, out);
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << "\n";
    return kExitProviderAbort;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace rose::cli
