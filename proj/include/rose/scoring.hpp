#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rose/errors.hpp"

namespace rose {

// One sampled completion after parsing. `answer` is empty when the
// completion could not be parsed.
struct SampledPath {
  std::string rationale;
  std::optional<std::string> answer;
};

struct ReasoningOutcome {
  std::string question;
  std::vector<SampledPath> paths;
  std::string majority_answer;
  std::vector<std::size_t> majority_paths;  // indices into `paths`
  double uncertainty = 0.0;
  double complexity = 1.0;
  std::size_t representative = 0;  // index into `paths`

  const std::string& representative_rationale() const { return paths.at(representative).rationale; }
};

// Entropy (nats) of the empirical answer distribution.
//
// Evaluated as ln N - (1/N) * sum(c ln c) over the answer counts c, which
// makes the two boundary cases exact: 0 when every answer agrees and ln N
// when every answer differs. Counts are visited in key order, so the result
// does not depend on the order of `answers`.
inline double compute_uncertainty(std::span<const std::string> answers) {
  if (answers.empty()) throw DomainError("compute_uncertainty: empty answer multiset");
  std::map<std::string_view, std::size_t> counts;
  for (const auto& a : answers) ++counts[a];
  if (counts.size() == 1) return 0.0;

  const double n = static_cast<double>(answers.size());
  double weighted = 0.0;
  for (const auto& [_, c] : counts) {
    if (c > 1) weighted += static_cast<double>(c) * std::log(static_cast<double>(c));
  }
  const double h = std::log(n) - weighted / n;
  return h < 0.0 ? 0.0 : h;
}

// Number of non-blank lines; one line is one reasoning step.
inline std::size_t count_steps(std::string_view rationale) {
  std::size_t steps = 0;
  std::size_t start = 0;
  while (start <= rationale.size()) {
    std::size_t end = rationale.find('\n', start);
    if (end == std::string_view::npos) end = rationale.size();
    const auto line = rationale.substr(start, end - start);
    if (line.find_first_not_of(" \t\r\f\v") != std::string_view::npos) ++steps;
    start = end + 1;
  }
  if (steps == 0) throw DomainError("count_steps: rationale is blank");
  return steps;
}

inline double compute_complexity(std::span<const std::string> majority_paths) {
  if (majority_paths.empty()) throw DomainError("compute_complexity: no paths");
  std::size_t total = 0;
  for (const auto& r : majority_paths) total += count_steps(r);
  return static_cast<double>(total) / static_cast<double>(majority_paths.size());
}

// Mode of `answers`; ties go to the answer that was sampled first.
inline std::string majority_answer(std::span<const std::string> answers) {
  if (answers.empty()) throw DomainError("majority_answer: empty answer multiset");
  struct Tally {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::map<std::string_view, Tally> tallies;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    auto [it, inserted] = tallies.try_emplace(answers[i], Tally{0, i});
    ++it->second.count;
  }
  const Tally* best = nullptr;
  std::string_view best_answer;
  for (const auto& [answer, t] : tallies) {
    if (!best || t.count > best->count || (t.count == best->count && t.first < best->first)) {
      best = &t;
      best_answer = answer;
    }
  }
  return std::string(best_answer);
}

// Index of the path with the most steps; ties go to the earliest path.
inline std::size_t select_representative(std::span<const std::string> majority_paths) {
  if (majority_paths.empty()) throw DomainError("select_representative: no paths");
  std::size_t best = 0;
  std::size_t best_steps = count_steps(majority_paths[0]);
  for (std::size_t i = 1; i < majority_paths.size(); ++i) {
    const std::size_t s = count_steps(majority_paths[i]);
    if (s > best_steps) {
      best = i;
      best_steps = s;
    }
  }
  return best;
}

// Combines voting, uncertainty, complexity and representative selection for
// one question. Unparseable paths are left out of every statistic, so the
// entropy denominator is the number of parsed answers rather than `m`.
inline ReasoningOutcome score_outcome(std::string question, std::vector<SampledPath> paths, int m) {
  if (m < 1 || paths.size() != static_cast<std::size_t>(m)) {
    throw DomainError("score_outcome: expected " + std::to_string(m) + " paths, got " + std::to_string(paths.size()));
  }
  std::vector<std::string> answers;
  for (const auto& p : paths) {
    if (p.answer) answers.push_back(*p.answer);
  }
  if (answers.empty()) throw UnanswerableError("no sampled path produced a parseable answer for: " + question);

  ReasoningOutcome out;
  out.question = std::move(question);
  out.majority_answer = majority_answer(answers);
  out.uncertainty = compute_uncertainty(answers);

  std::vector<std::string> majority_rationales;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (paths[i].answer && *paths[i].answer == out.majority_answer) {
      out.majority_paths.push_back(i);
      majority_rationales.push_back(paths[i].rationale);
    }
  }
  out.complexity = compute_complexity(majority_rationales);
  out.representative = out.majority_paths[select_representative(majority_rationales)];
  out.paths = std::move(paths);
  return out;
}

}  // namespace rose
