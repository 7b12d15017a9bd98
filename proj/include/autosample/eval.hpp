#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autosample/data.hpp"
#include "autosample/model.hpp"

namespace autosample {

struct MetricsReport {
  int k = 20;
  double recall = 0.0;
  double ndcg = 0.0;
  double precision = 0.0;
  double hit_ratio = 0.0;
  std::size_t users_evaluated = 0;
  double elapsed_ms = 0.0;  // wall-clock; not part of equality

  // Looks up "recall", "ndcg", "precision" or "hr".
  double metric(const std::string& name) const;

  friend bool operator==(const MetricsReport& a, const MetricsReport& b) {
    return a.k == b.k && a.recall == b.recall && a.ndcg == b.ndcg && a.precision == b.precision &&
           a.hit_ratio == b.hit_ratio && a.users_evaluated == b.users_evaluated;
  }
};

struct UserMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
  double precision = 0.0;
  double hit_ratio = 0.0;
};

// Top-K items by score among those not in `exclude` (sorted ids or any order),
// ties broken by lower id. Returns every candidate if fewer than K remain.
std::vector<Index> rank_topk(std::span<const double> scores, std::span<const Index> exclude, int k);
std::vector<Index> rank_topk(const PropagatedEmbeddings& emb, Index u, std::span<const Index> exclude, int k);
std::vector<Index> rank_topk(const ModelParams& params, const Graph& graph, Index u,
                             std::span<const Index> exclude, int k);

// Binary-relevance metrics; `truth` must be non-empty.
UserMetrics metrics_for_user(std::span<const Index> topk, std::span<const Index> truth, int k);

/// Full-ranking evaluation of `split` users. Items in `train` and in every
/// `also_exclude` dataset are removed from each user's candidate list.
/// Users with no items in `split` are skipped.
MetricsReport evaluate(const PropagatedEmbeddings& emb, const InteractionDataset& train,
                       const InteractionDataset& split,
                       std::span<const InteractionDataset* const> also_exclude, int k = 20);
MetricsReport evaluate(const ModelParams& params, const Graph& graph, const InteractionDataset& train,
                       const InteractionDataset& split,
                       std::span<const InteractionDataset* const> also_exclude, int k = 20);

// `with_timing` adds elapsed_ms; the default form is byte-stable across runs.
nlohmann::json to_json(const MetricsReport& report, bool with_timing = false);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace autosample
