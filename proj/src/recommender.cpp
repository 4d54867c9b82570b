#include "emde/recommender.hpp"

#include <algorithm>
#include <cmath>

#include "emde/error.hpp"

namespace emde {

namespace {

bool ranks_before(const RankedItem& a, const RankedItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item_id < b.item_id;
}

void keep_top(std::vector<RankedItem>& items, int n) {
  if (n < 1) throw ContractError("ranking size must be >= 1");
  if (items.empty()) throw ContractError("empty candidate pool");
  const auto keep = std::min(items.size(), static_cast<std::size_t>(n));
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(keep), items.end(), ranks_before);
  items.resize(keep);
}

}  // namespace

double score_item(const Sketch& probs, const Eigen::Ref<const Buckets>& buckets, Decode decode) {
  if (buckets.size() != probs.rows()) throw ContractError("bucket count != output rows");
  if (decode == Decode::min_count) {
    double best = probs(0, buckets(0));
    for (Eigen::Index k = 1; k < probs.rows(); ++k) best = std::min(best, probs(k, buckets(k)));
    return best;
  }
  double sum = 0.0;
  for (Eigen::Index k = 0; k < probs.rows(); ++k) sum += std::log(std::max(probs(k, buckets(k)), kProbabilityFloor));
  return sum / static_cast<double>(probs.rows());
}

Ranking rank_candidates(const Sketch& probs, const CodeBook& candidates,
                        const std::unordered_set<std::string>& exclude, int n, Decode decode) {
  Ranking r;
  r.items.reserve(static_cast<std::size_t>(candidates.size()));
  for (Eigen::Index i = 0; i < candidates.size(); ++i) {
    const auto& id = candidates.ids()[i];
    if (exclude.contains(id)) continue;
    r.items.push_back({id, score_item(probs, candidates.buckets(i), decode)});
  }
  keep_top(r.items, n);
  return r;
}

Ranking recommend(const SketchModel& model, const MultiSketch& input, const CodeBook& candidates,
                  const std::unordered_set<std::string>& exclude, int n, Decode decode) {
  const auto out = forward_one(model, input.flat());
  return rank_candidates(out.probs, candidates, exclude, n, decode);
}

Ranking rank_scores(std::string user_id, const std::map<std::string, double>& scores,
                    const std::unordered_set<std::string>& exclude, int n) {
  Ranking r;
  r.user_id = std::move(user_id);
  for (const auto& [id, s] : scores)
    if (!exclude.contains(id)) r.items.push_back({id, s});
  keep_top(r.items, n);
  return r;
}

double recall_at_n(std::span<const Ranking> rankings,
                   const std::map<std::string, std::set<std::string>>& held_out, int n) {
  double total = 0.0;
  std::size_t users = 0;
  for (const auto& r : rankings) {
    const auto it = held_out.find(r.user_id);
    if (it == held_out.end() || it->second.empty()) continue;
    std::size_t hits = 0;
    const auto top = std::min(r.items.size(), static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < top; ++i) hits += it->second.count(r.items[i].item_id);
    total += static_cast<double>(hits) / static_cast<double>(std::min<std::size_t>(n, it->second.size()));
    ++users;
  }
  return users ? total / static_cast<double>(users) : 0.0;
}

}  // namespace emde
