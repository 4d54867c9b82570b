#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "emde/lsh_codec.hpp"
#include "emde/net.hpp"
#include "emde/sketch.hpp"

namespace emde {

enum class Decode {
  mean_log,   // (1/n_sketches) sum_k ln probs(k, b_k)
  min_count,  // min_k probs(k, b_k), the count-min point query
};

inline constexpr double kProbabilityFloor = 1e-12;

// Probabilities below kProbabilityFloor are clamped before the log.
double score_item(const Sketch& probs, const Eigen::Ref<const Buckets>& buckets, Decode decode = Decode::mean_log);

struct RankedItem {
  std::string item_id;
  double score = 0.0;

  bool operator==(const RankedItem&) const = default;
};

struct Ranking {
  std::string user_id;
  std::vector<RankedItem> items;  // score descending, ties by ascending id
};

// Top-n of every candidate in `candidates` not in `exclude`.
Ranking rank_candidates(const Sketch& probs, const CodeBook& candidates,
                        const std::unordered_set<std::string>& exclude, int n, Decode decode = Decode::mean_log);

Ranking recommend(const SketchModel& model, const MultiSketch& input, const CodeBook& candidates,
                  const std::unordered_set<std::string>& exclude, int n, Decode decode = Decode::mean_log);

// Orders an item -> score map the same way as rank_candidates.
Ranking rank_scores(std::string user_id, const std::map<std::string, double>& scores,
                    const std::unordered_set<std::string>& exclude, int n);

// Mean over users of |top-n ∩ held_out| / min(n, |held_out|). Rankings whose
// user has no held-out entry are skipped.
double recall_at_n(std::span<const Ranking> rankings,
                   const std::map<std::string, std::set<std::string>>& held_out, int n);

}  // namespace emde
