#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rose/pool.hpp"

namespace rose_test {

// Unit vector whose dot product with (1, 0) is exactly `s`.
inline rose::Embedding at_similarity(double s) { return {s, std::sqrt(1.0 - s * s)}; }

inline const rose::Embedding kTestAxis = {1.0, 0.0};

inline rose::Experience experience(double similarity, double uncertainty = 0.1, double complexity = 2.0,
                                   std::string question = "q") {
  rose::Experience e;
  e.question = std::move(question);
  e.rationale = "step one\nstep two";
  e.answer = "1";
  e.uncertainty = uncertainty;
  e.complexity = complexity;
  e.embedding = at_similarity(similarity);
  return e;
}

inline rose::ExperiencePool pool_of(const std::vector<rose::Experience>& entries, int paths = 20) {
  rose::ExperiencePool pool(rose::PoolLimits{paths, std::nullopt});
  for (const auto& e : entries) pool.append(e);
  return pool;
}

}  // namespace rose_test
