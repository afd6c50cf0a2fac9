#pragma once

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rose/errors.hpp"
#include "rose/io.hpp"
#include "rose/numeric.hpp"

namespace rose {

// One answered question as held in the experience pool.
struct Experience {
  std::uint64_t id = 0;
  std::string question;
  std::string rationale;  // the representative reasoning path
  std::string answer;     // normalized
  double uncertainty = 0.0;  // nats
  double complexity = 1.0;   // mean step count of majority paths
  Embedding embedding;

  bool operator==(const Experience&) const = default;
};

struct PoolLimits {
  // Path count m used when answering; bounds uncertainty by ln(m). Unset skips the upper bound.
  std::optional<int> path_count;
  // FIFO eviction once exceeded. Unset means unbounded.
  std::optional<std::size_t> max_size;
};

namespace detail {

inline std::string describe(const Experience& exp) { return "experience id " + std::to_string(exp.id); }

}  // namespace detail

// Checks the per-record invariants. `dim` of 0 means the dimension is not fixed yet.
inline void validate_experience(const Experience& exp, const PoolLimits& limits, std::size_t dim) {
  const auto who = detail::describe(exp);
  if (exp.embedding.empty()) throw SchemaError(who + ": embedding is empty");
  if (dim != 0 && exp.embedding.size() != dim) {
    throw SchemaError(who + ": embedding dimension " + std::to_string(exp.embedding.size()) +
                      " does not match pool dimension " + std::to_string(dim));
  }
  if (!std::isfinite(exp.uncertainty) || exp.uncertainty < 0.0) {
    throw ValidationError(who + ": uncertainty " + format_g(exp.uncertainty, 12) + " is negative or not finite");
  }
  if (limits.path_count) {
    // ln(m) itself is only representable to rounding, and stored values are rounded to 12 digits.
    const double bound = std::log(static_cast<double>(*limits.path_count)) + 1e-9;
    if (exp.uncertainty > bound) {
      throw ValidationError(who + ": uncertainty " + format_g(exp.uncertainty, 12) + " exceeds ln(" +
                            std::to_string(*limits.path_count) + ")");
    }
  }
  if (!std::isfinite(exp.complexity) || exp.complexity < 1.0) {
    throw ValidationError(who + ": complexity " + format_g(exp.complexity, 12) + " is below 1");
  }
  for (double x : exp.embedding) {
    if (!std::isfinite(x)) throw ValidationError(who + ": embedding has a non-finite component");
  }
  if (!is_unit(exp.embedding)) {
    throw ValidationError(who + ": embedding norm " + format_g(l2_norm(exp.embedding), 12) + " is not 1");
  }
  if (exp.rationale.empty()) throw ValidationError(who + ": rationale is empty");
  if (exp.answer.empty()) throw ValidationError(who + ": answer is empty");
}

// Append-only, id-ordered store of experiences.
//
// Entries are held by shared pointer, so copying a pool is cheap and a copy
// is an immutable snapshot: later appends to the source never show through.
class ExperiencePool {
  using Storage = std::vector<std::shared_ptr<const Experience>>;

 public:
  class const_iterator {
   public:
    using iterator_category = std::random_access_iterator_tag;
    using value_type = Experience;
    using difference_type = std::ptrdiff_t;
    using pointer = const Experience*;
    using reference = const Experience&;

    const_iterator() = default;
    explicit const_iterator(Storage::const_iterator it) : it_(it) {}

    reference operator*() const { return **it_; }
    pointer operator->() const { return it_->get(); }
    reference operator[](difference_type n) const { return *it_[n]; }
    const_iterator& operator++() { ++it_; return *this; }
    const_iterator operator++(int) { auto t = *this; ++it_; return t; }
    const_iterator& operator--() { --it_; return *this; }
    const_iterator operator--(int) { auto t = *this; --it_; return t; }
    const_iterator& operator+=(difference_type n) { it_ += n; return *this; }
    const_iterator& operator-=(difference_type n) { it_ -= n; return *this; }
    friend const_iterator operator+(const_iterator a, difference_type n) { return a += n; }
    friend const_iterator operator+(difference_type n, const_iterator a) { return a += n; }
    friend const_iterator operator-(const_iterator a, difference_type n) { return a -= n; }
    friend difference_type operator-(const const_iterator& a, const const_iterator& b) { return a.it_ - b.it_; }
    friend bool operator==(const const_iterator&, const const_iterator&) = default;
    friend auto operator<=>(const const_iterator& a, const const_iterator& b) { return a.it_ <=> b.it_; }

   private:
    Storage::const_iterator it_;
  };

  ExperiencePool() = default;
  explicit ExperiencePool(PoolLimits limits, std::size_t embedding_dim = 0)
      : limits_(limits), dim_(embedding_dim) {
    if (limits_.max_size && *limits_.max_size == 0) throw ConfigError("max_pool_size must be positive");
    if (limits_.path_count && *limits_.path_count < 1) throw ConfigError("path count must be positive");
  }

  // Validates `exp`, assigns the next id and stores it. Uncertainty and
  // complexity are rounded to the 12 significant digits the file format keeps.
  const Experience& append(Experience exp) {
    exp.id = next_id_;
    exp.uncertainty = round_significant(exp.uncertainty);
    exp.complexity = round_significant(exp.complexity);
    validate_experience(exp, limits_, dim_);
    if (dim_ == 0) dim_ = exp.embedding.size();
    entries_.push_back(std::make_shared<const Experience>(std::move(exp)));
    ++next_id_;
    if (limits_.max_size && entries_.size() > *limits_.max_size) {
      entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(entries_.size() - *limits_.max_size));
    }
    return *entries_.back();
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t embedding_dim() const noexcept { return dim_; }
  const PoolLimits& limits() const noexcept { return limits_; }
  std::uint64_t next_id() const noexcept { return next_id_; }

  const Experience& operator[](std::size_t i) const { return *entries_[i]; }
  const Experience& at(std::size_t i) const {
    if (i >= entries_.size()) throw DomainError("pool index out of range");
    return *entries_[i];
  }

  const_iterator begin() const { return const_iterator(entries_.cbegin()); }
  const_iterator end() const { return const_iterator(entries_.cend()); }

  friend bool operator==(const ExperiencePool& a, const ExperiencePool& b) {
    if (a.dim_ != b.dim_ || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (!(*a.entries_[i] == *b.entries_[i])) return false;
    }
    return true;
  }

  void save(const std::filesystem::path& path) const;
  static ExperiencePool load(const std::filesystem::path& path, PoolLimits limits = {});

 private:
  void restore(Experience exp) {
    if (!entries_.empty() && exp.id <= entries_.back()->id) {
      throw ValidationError(detail::describe(exp) + ": ids must be strictly increasing");
    }
    validate_experience(exp, limits_, dim_);
    next_id_ = exp.id + 1;
    entries_.push_back(std::make_shared<const Experience>(std::move(exp)));
  }

  PoolLimits limits_;
  std::size_t dim_ = 0;
  std::uint64_t next_id_ = 1;
  Storage entries_;
};

namespace detail {

inline std::string json_string(const std::string& s) {
  try {
    return nlohmann::json(s).dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("text is not valid UTF-8: ") + e.what());
  }
}

inline std::string pool_record_line(const Experience& e) {
  std::string line;
  line.reserve(64 + e.question.size() + e.rationale.size() + e.embedding.size() * 24);
  line += "{\"id\":" + std::to_string(e.id);
  line += ",\"question\":" + json_string(e.question);
  line += ",\"rationale\":" + json_string(e.rationale);
  line += ",\"answer\":" + json_string(e.answer);
  line += ",\"uncertainty\":" + format_g(e.uncertainty, 12);
  line += ",\"complexity\":" + format_g(e.complexity, 12);
  line += ",\"embedding\":[";
  for (std::size_t i = 0; i < e.embedding.size(); ++i) {
    if (i) line += ',';
    line += format_g(e.embedding[i], 17);
  }
  line += "]}";
  return line;
}

template <typename T>
T required_field(const nlohmann::json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field \"") + key + "\"", line_no);
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("field \"") + key + "\" has the wrong type", line_no);
  }
}

}  // namespace detail

// Writes the pool as line-delimited JSON: a header line, then one record per
// entry in id order. The file is written beside the target and renamed into
// place, so a failed save leaves any previous file intact.
inline void ExperiencePool::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "{\"format_version\":1,\"embedding_dim\":" << dim_ << "}\n";
  for (const auto& e : entries_) out << detail::pool_record_line(*e) << '\n';

  write_file_atomic(path, out.str());
}

inline ExperiencePool ExperiencePool::load(const std::filesystem::path& path, PoolLimits limits) {
  std::istringstream f(read_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("missing header", 1);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(lines[0]);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), 1);
  }
  if (!header.is_object() || !header.contains("format_version")) throw ParseError("missing header", 1);
  if (detail::required_field<int>(header, "format_version", 1) != 1) {
    throw ParseError("unsupported format_version", 1);
  }
  const auto dim = detail::required_field<std::int64_t>(header, "embedding_dim", 1);
  if (dim < 0) throw ParseError("embedding_dim must be non-negative", 1);

  ExperiencePool pool(limits, static_cast<std::size_t>(dim));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!rec.is_object()) throw ParseError("record is not an object", line_no);

    Experience exp;
    exp.id = detail::required_field<std::uint64_t>(rec, "id", line_no);
    exp.question = detail::required_field<std::string>(rec, "question", line_no);
    exp.rationale = detail::required_field<std::string>(rec, "rationale", line_no);
    exp.answer = detail::required_field<std::string>(rec, "answer", line_no);
    exp.uncertainty = detail::required_field<double>(rec, "uncertainty", line_no);
    exp.complexity = detail::required_field<double>(rec, "complexity", line_no);
    exp.embedding = detail::required_field<std::vector<double>>(rec, "embedding", line_no);
    if (pool.dim_ == 0) {
      throw SchemaError("line " + std::to_string(line_no) + ": header declares no embedding_dim but records follow");
    }
    try {
      pool.restore(std::move(exp));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pool;
}

// Single-writer, multi-reader wrapper. Readers take snapshots, which are
// immutable pool copies that never observe a partially applied append.
class StreamingPool {
 public:
  StreamingPool() = default;
  explicit StreamingPool(ExperiencePool initial) : pool_(std::move(initial)) {}

  Experience append(Experience exp) {
    std::lock_guard lock(mu_);
    ExperiencePool next = pool_;
    const Experience stored = next.append(std::move(exp));
    pool_ = std::move(next);
    return stored;
  }

  ExperiencePool snapshot() const {
    std::lock_guard lock(mu_);
    return pool_;
  }

 private:
  mutable std::mutex mu_;
  ExperiencePool pool_;
};

}  // namespace rose
