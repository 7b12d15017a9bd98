#include "autosample/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "autosample/errors.hpp"

namespace autosample {

double MetricsReport::metric(const std::string& name) const {
  if (name == "recall") return recall;
  if (name == "ndcg") return ndcg;
  if (name == "precision") return precision;
  if (name == "hr") return hit_ratio;
  throw ConfigError("unknown metric '" + name + "' (expected recall, ndcg, precision or hr)");
}

std::vector<Index> rank_topk(std::span<const double> scores, std::span<const Index> exclude, int k) {
  if (k < 1) throw DomainError("rank_topk: K must be >= 1");
  std::vector<char> blocked(scores.size(), 0);
  for (Index e : exclude)
    if (e >= 0 && static_cast<std::size_t>(e) < scores.size()) blocked[e] = 1;
  std::vector<Index> cand;
  cand.reserve(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (!blocked[j]) cand.push_back(static_cast<Index>(j));
  if (cand.empty()) throw DomainError("rank_topk: no candidate items");
  const auto better = [&](Index a, Index b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  const std::size_t top = std::min<std::size_t>(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + top, cand.end(), better);
  cand.resize(top);
  return cand;
}

std::vector<Index> rank_topk(const PropagatedEmbeddings& emb, Index u, std::span<const Index> exclude, int k) {
  if (u < 0 || u >= emb.user_out.rows()) throw DomainError("rank_topk: user id out of range");
  const Eigen::VectorXd scores = emb.item_out * emb.user_out.row(u).transpose();
  return rank_topk(std::span<const double>(scores.data(), scores.size()), exclude, k);
}

std::vector<Index> rank_topk(const ModelParams& params, const Graph& graph, Index u,
                             std::span<const Index> exclude, int k) {
  return rank_topk(output_embeddings(params, graph), u, exclude, k);
}

UserMetrics metrics_for_user(std::span<const Index> topk, std::span<const Index> truth, int k) {
  if (truth.empty()) throw DomainError("metrics_for_user: empty truth set");
  if (k < 1) throw DomainError("metrics_for_user: K must be >= 1");
  std::vector<Index> relevant(truth.begin(), truth.end());
  std::sort(relevant.begin(), relevant.end());
  relevant.erase(std::unique(relevant.begin(), relevant.end()), relevant.end());

  double dcg = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min<std::size_t>(k, topk.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), topk[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min<std::size_t>(k, relevant.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);

  UserMetrics m;
  m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  m.precision = static_cast<double>(hits) / static_cast<double>(k);
  m.hit_ratio = hits > 0 ? 1.0 : 0.0;
  m.ndcg = dcg / idcg;
  return m;
}

namespace {

// Neumaier compensated sum.
struct CompensatedSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace

MetricsReport evaluate(const PropagatedEmbeddings& emb, const InteractionDataset& train,
                       const InteractionDataset& split,
                       std::span<const InteractionDataset* const> also_exclude, int k) {
  const auto start = std::chrono::steady_clock::now();
  if (train.num_users() != split.num_users() || train.num_items() != split.num_items())
    throw DomainError("evaluate: train and evaluation splits disagree on dimensions");
  for (const auto* ds : also_exclude)
    if (ds->num_users() != split.num_users() || ds->num_items() != split.num_items())
      throw DomainError("evaluate: exclusion split disagrees on dimensions");
  if (emb.user_out.rows() != split.num_users() || emb.item_out.rows() != split.num_items())
    throw DomainError("evaluate: embeddings disagree with dataset dimensions");

  CompensatedSum recall, ndcg, precision, hr;
  std::size_t users = 0;
  std::vector<Index> exclude;
  for (Index u = 0; u < split.num_users(); ++u) {
    const auto truth = split.user_items(u);
    if (truth.empty()) continue;
    exclude.assign(train.user_items(u).begin(), train.user_items(u).end());
    for (const auto* ds : also_exclude) exclude.insert(exclude.end(), ds->user_items(u).begin(), ds->user_items(u).end());
    const auto top = rank_topk(emb, u, exclude, k);
    const auto m = metrics_for_user(top, truth, k);
    recall.add(m.recall);
    ndcg.add(m.ndcg);
    precision.add(m.precision);
    hr.add(m.hit_ratio);
    ++users;
  }
  if (users == 0) throw DomainError("evaluate: no user has evaluation items");

  MetricsReport r;
  r.k = k;
  const double n = static_cast<double>(users);
  r.recall = recall.value() / n;
  r.ndcg = ndcg.value() / n;
  r.precision = precision.value() / n;
  r.hit_ratio = hr.value() / n;
  r.users_evaluated = users;
  r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

MetricsReport evaluate(const ModelParams& params, const Graph& graph, const InteractionDataset& train,
                       const InteractionDataset& split,
                       std::span<const InteractionDataset* const> also_exclude, int k) {
  return evaluate(output_embeddings(params, graph), train, split, also_exclude, k);
}

nlohmann::json to_json(const MetricsReport& r, bool with_timing) {
  nlohmann::json j = {
      {"k", r.k},
      {"recall", r.recall},
      {"ndcg", r.ndcg},
      {"precision", r.precision},
      {"hr", r.hit_ratio},
      {"users_evaluated", r.users_evaluated},
  };
  if (with_timing) j["elapsed_ms"] = r.elapsed_ms;
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.k = j.at("k").get<int>();
  r.recall = j.at("recall").get<double>();
  r.ndcg = j.at("ndcg").get<double>();
  r.precision = j.at("precision").get<double>();
  r.hit_ratio = j.at("hr").get<double>();
  r.users_evaluated = j.at("users_evaluated").get<std::size_t>();
  r.elapsed_ms = j.value("elapsed_ms", 0.0);
  return r;
}

}  // namespace autosample
