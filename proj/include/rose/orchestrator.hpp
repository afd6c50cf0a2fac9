#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "rose/errors.hpp"
#include "rose/numeric.hpp"
#include "rose/pool.hpp"

namespace rose {

enum class PartitionStrategy { EqualWidth, EqualCount };

// Per-bucket cutoff of lambda times the smallest uncertainty in the bucket.
struct DynamicThreshold {
  double lambda = 1.2;
};

// One cutoff shared by every bucket. Can empty a bucket.
struct FixedThreshold {
  double value = 0.0;
};

using ThresholdMode = std::variant<DynamicThreshold, FixedThreshold>;

struct OrchestratorConfig {
  int k = 8;
  ThresholdMode threshold = DynamicThreshold{};
  PartitionStrategy partition = PartitionStrategy::EqualWidth;
};

// A pool entry scored against the test question. Points into the pool
// snapshot the orchestration ran on and is valid only while that snapshot lives.
struct BucketMember {
  const Experience* experience = nullptr;
  double similarity = 0.0;
};

struct Bucket {
  std::vector<BucketMember> members;  // ascending similarity
  double lo = 0.0;
  double hi = 0.0;
};

struct OrchestrationResult {
  std::vector<Experience> demonstrations;  // ascending similarity, most similar last
  std::vector<double> similarities;        // parallel to demonstrations
  std::size_t buckets_used = 0;
  std::vector<std::size_t> filtered_counts;  // per bucket, removed by the uncertainty filter
};

inline void validate(const OrchestratorConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("k must be at least 1");
  if (const auto* dyn = std::get_if<DynamicThreshold>(&cfg.threshold)) {
    if (!(dyn->lambda >= 1.0) || !std::isfinite(dyn->lambda)) throw ConfigError("lambda must be a finite value >= 1");
  } else if (const auto* fixed = std::get_if<FixedThreshold>(&cfg.threshold)) {
    if (!(fixed->value >= 0.0) || !std::isfinite(fixed->value)) throw ConfigError("fixed threshold must be >= 0");
  }
}

// Cosine similarity of two unit vectors, clamped against rounding.
inline double similarity(std::span<const double> a, std::span<const double> b) {
  return std::clamp(dot(a, b), -1.0, 1.0);
}

namespace detail {

inline std::vector<BucketMember> scored_ascending(std::span<const double> test_embedding, const ExperiencePool& pool) {
  std::vector<BucketMember> scored;
  scored.reserve(pool.size());
  for (const auto& e : pool) scored.push_back({&e, similarity(test_embedding, e.embedding)});
  std::sort(scored.begin(), scored.end(), [](const BucketMember& a, const BucketMember& b) {
    if (a.similarity != b.similarity) return a.similarity < b.similarity;
    return a.experience->id < b.experience->id;
  });
  return scored;
}

inline Bucket make_bucket(std::vector<BucketMember> members, double lo, double hi) {
  return Bucket{std::move(members), lo, hi};
}

inline std::vector<Bucket> equal_width_buckets(const std::vector<BucketMember>& sorted, int k) {
  const double lo = sorted.front().similarity;
  const double hi = sorted.back().similarity;
  const double width = (hi - lo) / k;

  std::vector<std::vector<BucketMember>> slots(static_cast<std::size_t>(k));
  for (const auto& m : sorted) {
    std::size_t idx = 0;
    if (width > 0.0) {
      const double pos = std::floor((m.similarity - lo) / width);
      idx = pos <= 0.0 ? 0 : std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(k - 1));
    }
    slots[idx].push_back(m);
  }

  std::vector<Bucket> buckets;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].empty()) continue;
    const double b_lo = lo + width * static_cast<double>(i);
    const double b_hi = i + 1 == slots.size() ? hi : lo + width * static_cast<double>(i + 1);
    // Interval edges are computed, so widen them to cover members exactly.
    const double cover_lo = std::min(b_lo, slots[i].front().similarity);
    const double cover_hi = std::max(b_hi, slots[i].back().similarity);
    buckets.push_back(make_bucket(std::move(slots[i]), cover_lo, cover_hi));
  }
  return buckets;
}

inline std::vector<Bucket> equal_count_buckets(const std::vector<BucketMember>& sorted, int k) {
  const std::size_t n = sorted.size();
  const std::size_t slices = std::min(n, static_cast<std::size_t>(k));
  std::vector<Bucket> buckets;
  for (std::size_t i = 0; i < slices; ++i) {
    const std::size_t begin = i * n / slices;
    const std::size_t end = (i + 1) * n / slices;
    std::vector<BucketMember> members(sorted.begin() + static_cast<std::ptrdiff_t>(begin),
                                      sorted.begin() + static_cast<std::ptrdiff_t>(end));
    const double b_lo = members.front().similarity;
    const double b_hi = members.back().similarity;
    buckets.push_back(make_bucket(std::move(members), b_lo, b_hi));
  }
  return buckets;
}

}  // namespace detail

// Sorts the pool by similarity to the test question and splits it into up
// to k buckets, lowest similarity first.
//
// Equal-width: the similarity range is cut into k equal intervals, empty
// intervals are dropped, and while fewer than k buckets remain the largest
// bucket (lowest range on ties) is halved by count, the lower half taking
// ceil(n/2) members. Equal-count: k near-equal contiguous slices.
inline std::vector<Bucket> partition(std::span<const double> test_embedding, const ExperiencePool& pool, int k,
                                     PartitionStrategy strategy = PartitionStrategy::EqualWidth) {
  if (pool.empty()) throw DomainError("partition: pool is empty");
  if (k < 1) throw ConfigError("k must be at least 1");
  const auto sorted = detail::scored_ascending(test_embedding, pool);
  if (strategy == PartitionStrategy::EqualCount) return detail::equal_count_buckets(sorted, k);

  auto buckets = detail::equal_width_buckets(sorted, k);
  while (buckets.size() < static_cast<std::size_t>(k)) {
    auto largest = buckets.begin();
    for (auto it = buckets.begin(); it != buckets.end(); ++it) {
      if (it->members.size() > largest->members.size()) largest = it;
    }
    const std::size_t n = largest->members.size();
    if (n < 2) break;
    const std::size_t lower_count = (n + 1) / 2;
    std::vector<BucketMember> lower(largest->members.begin(),
                                    largest->members.begin() + static_cast<std::ptrdiff_t>(lower_count));
    std::vector<BucketMember> upper(largest->members.begin() + static_cast<std::ptrdiff_t>(lower_count),
                                    largest->members.end());
    const double lo = largest->lo;
    const double hi = largest->hi;
    const double lower_hi = lower.back().similarity;
    const double upper_lo = upper.front().similarity;
    *largest = detail::make_bucket(std::move(upper), upper_lo, hi);
    buckets.insert(largest, detail::make_bucket(std::move(lower), lo, lower_hi));
  }
  return buckets;
}

// Keeps members whose uncertainty is at most lambda times the bucket minimum.
// The minimum itself always survives, so the result is never empty.
inline Bucket uncertainty_filter(const Bucket& bucket, double lambda) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite value >= 1");
  if (bucket.members.empty()) throw DomainError("uncertainty_filter: empty bucket");
  double u_min = bucket.members.front().experience->uncertainty;
  for (const auto& m : bucket.members) u_min = std::min(u_min, m.experience->uncertainty);
  const double threshold = lambda * u_min;

  Bucket kept{{}, bucket.lo, bucket.hi};
  for (const auto& m : bucket.members) {
    if (m.experience->uncertainty <= threshold) kept.members.push_back(m);
  }
  return kept;
}

// Keeps members whose uncertainty is at most `threshold`. May return an empty bucket.
inline Bucket fixed_threshold_filter(const Bucket& bucket, double threshold) {
  Bucket kept{{}, bucket.lo, bucket.hi};
  for (const auto& m : bucket.members) {
    if (m.experience->uncertainty <= threshold) kept.members.push_back(m);
  }
  return kept;
}

// Most complex member; ties go to higher similarity, then lower id.
inline const BucketMember& complexity_select(const Bucket& bucket) {
  if (bucket.members.empty()) throw DomainError("complexity_select: empty bucket");
  const BucketMember* best = &bucket.members.front();
  for (const auto& m : bucket.members) {
    const auto& a = *m.experience;
    const auto& b = *best->experience;
    if (a.complexity > b.complexity ||
        (a.complexity == b.complexity &&
         (m.similarity > best->similarity || (m.similarity == best->similarity && a.id < b.id)))) {
      best = &m;
    }
  }
  return *best;
}

// Picks up to k demonstrations for one test question: partition for
// diversity, filter each bucket by uncertainty, then take the most complex
// survivor of each. An empty pool yields no demonstrations.
inline OrchestrationResult orchestrate(std::string_view /*test_question*/, std::span<const double> test_embedding,
                                       const ExperiencePool& pool, const OrchestratorConfig& config) {
  validate(config);
  OrchestrationResult result;
  if (pool.empty()) return result;

  const auto buckets = partition(test_embedding, pool, config.k, config.partition);
  result.buckets_used = buckets.size();

  std::vector<BucketMember> picked;
  for (const auto& bucket : buckets) {
    const Bucket kept = std::visit(
        [&](const auto& mode) {
          using Mode = std::decay_t<decltype(mode)>;
          if constexpr (std::is_same_v<Mode, DynamicThreshold>) {
            return uncertainty_filter(bucket, mode.lambda);
          } else {
            return fixed_threshold_filter(bucket, mode.value);
          }
        },
        config.threshold);
    result.filtered_counts.push_back(bucket.members.size() - kept.members.size());
    if (!kept.members.empty()) picked.push_back(complexity_select(kept));
  }

  std::stable_sort(picked.begin(), picked.end(), [](const BucketMember& a, const BucketMember& b) {
    if (a.similarity != b.similarity) return a.similarity < b.similarity;
    return a.experience->id < b.experience->id;
  });
  for (const auto& m : picked) {
    result.demonstrations.push_back(*m.experience);
    result.similarities.push_back(m.similarity);
  }
  return result;
}

}  // namespace rose
