#include "autosample/model.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <random>

#include "autosample/errors.hpp"
#include "autosample/rng.hpp"

namespace autosample {

std::string to_string(ModelKind kind) { return kind == ModelKind::MF ? "mf" : "lightgcn"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "mf") return ModelKind::MF;
  if (text == "lightgcn") return ModelKind::LightGCN;
  throw ConfigError("unknown model kind '" + text + "' (expected mf or lightgcn)");
}

ModelParams init_params(Index num_users, Index num_items, Index dim, ModelKind kind,
                        std::uint64_t seed, int layers, double l2) {
  if (num_users < 1 || num_items < 1 || dim < 1)
    throw DomainError("init_params: dimensions must be at least 1");
  if (layers < 0) throw DomainError("init_params: LightGCN layers must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  ModelParams p;
  p.kind = kind;
  p.layers = layers;
  p.l2 = l2;
  p.user_emb.resize(num_users, dim);
  p.item_emb.resize(num_items, dim);
  // Row-major fill order so the draw sequence does not depend on storage order.
  for (Index r = 0; r < num_users; ++r)
    for (Index c = 0; c < dim; ++c) p.user_emb(r, c) = normal(rng);
  for (Index r = 0; r < num_items; ++r)
    for (Index c = 0; c < dim; ++c) p.item_emb(r, c) = normal(rng);
  return p;
}

Graph::Graph(const InteractionDataset& train)
    : num_users_(train.num_users()), num_items_(train.num_items()) {
  const Index n = num_users_ + num_items_;
  std::vector<double> deg(n, 0.0);
  for (const auto& [u, i] : train.positives()) {
    deg[u] += 1.0;
    deg[num_users_ + i] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * train.size());
  for (const auto& [u, i] : train.positives()) {
    const double w = 1.0 / std::sqrt(deg[u] * deg[num_users_ + i]);
    entries.emplace_back(u, num_users_ + i, w);
    entries.emplace_back(num_users_ + i, u, w);
  }
  adj_.resize(n, n);
  adj_.setFromTriplets(entries.begin(), entries.end());
}

namespace {

void check_graph(const ModelParams& params, const Graph& graph) {
  if (graph.num_users() != params.num_users() || graph.num_items() != params.num_items())
    throw DomainError("graph dimensions do not match the model tables");
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& users, const Eigen::MatrixXd& items) {
  Eigen::MatrixXd e(users.rows() + items.rows(), users.cols());
  e << users, items;
  return e;
}

// (1/(L+1)) sum_k A^k x. A is symmetric, so this is also the adjoint.
Eigen::MatrixXd layer_mean(const Eigen::SparseMatrix<double, Eigen::RowMajor>& adj,
                           const Eigen::MatrixXd& x, int layers) {
  Eigen::MatrixXd acc = x;
  Eigen::MatrixXd cur = x;
  for (int k = 0; k < layers; ++k) {
    cur = adj * cur;
    acc += cur;
  }
  return acc / static_cast<double>(layers + 1);
}

}  // namespace

PropagatedEmbeddings propagate_lightgcn(const ModelParams& params, const Graph& graph, int layers) {
  if (layers < 0) throw DomainError("propagate_lightgcn: layers must be >= 0");
  if (layers == 0) return {params.user_emb, params.item_emb};
  check_graph(params, graph);
  const Eigen::MatrixXd out = layer_mean(graph.adjacency(), stack(params.user_emb, params.item_emb), layers);
  return {out.topRows(params.num_users()), out.bottomRows(params.num_items())};
}

PropagatedEmbeddings output_embeddings(const ModelParams& params, const Graph& graph) {
  if (params.kind == ModelKind::MF) return {params.user_emb, params.item_emb};
  return propagate_lightgcn(params, graph, params.layers);
}

double score(const ModelParams& params, const Graph& graph, Index u, Index i) {
  if (u < 0 || u >= params.num_users() || i < 0 || i >= params.num_items())
    throw DomainError("score: id out of range");
  if (params.kind == ModelKind::MF || params.layers == 0)
    return params.user_emb.row(u).dot(params.item_emb.row(i));
  return score(output_embeddings(params, graph), u, i);
}

GradAccumulator bpr_grad(const ModelParams& params, const Graph& graph,
                         std::span<const WeightedTriple> triples) {
  return bpr_grad(params, graph, output_embeddings(params, graph), triples);
}

GradAccumulator bpr_grad(const ModelParams& params, const Graph& graph,
                         const PropagatedEmbeddings& emb, std::span<const WeightedTriple> triples,
                         std::span<double> per_triple_bpr) {
  const Index m = params.num_users();
  const Index n_items = params.num_items();
  const Index d = params.dim();
  GradAccumulator g;
  g.user_grad = Eigen::MatrixXd::Zero(m, d);
  g.item_grad = Eigen::MatrixXd::Zero(n_items, d);
  if (triples.empty()) return g;
  const double inv_n = 1.0 / static_cast<double>(triples.size());
  const bool propagated = params.kind == ModelKind::LightGCN && params.layers > 0;

  // Gradient with respect to whatever embeddings the score dots.
  Eigen::MatrixXd out_user_grad, out_item_grad;
  if (propagated) {
    out_user_grad = Eigen::MatrixXd::Zero(m, d);
    out_item_grad = Eigen::MatrixXd::Zero(n_items, d);
  }
  Eigen::MatrixXd& du = propagated ? out_user_grad : g.user_grad;
  Eigen::MatrixXd& di = propagated ? out_item_grad : g.item_grad;

  std::vector<Index> urows, irows;
  urows.reserve(triples.size());
  irows.reserve(2 * triples.size());
  Eigen::RowVectorXd diff(d);
  for (std::size_t b = 0; b < triples.size(); ++b) {
    const auto& t = triples[b];
    if (t.user < 0 || t.user >= m || t.pos < 0 || t.pos >= n_items || t.neg < 0 || t.neg >= n_items)
      throw DomainError("bpr_grad: triple id out of range");
    if (t.weight < 0.0) throw DomainError("bpr_grad: negative triple weight");
    const auto eu = emb.user_out.row(t.user);
    diff = emb.item_out.row(t.pos) - emb.item_out.row(t.neg);
    const double x = eu.dot(diff);
    const double bpr = softplus(-x);
    if (!per_triple_bpr.empty()) per_triple_bpr[b] = bpr;
    if (t.weight == 0.0) continue;

    const double w = t.weight * inv_n;
    const double coef = w * (sigmoid(x) - 1.0);
    du.row(t.user) += coef * diff;
    di.row(t.pos) += coef * eu;
    di.row(t.neg) -= coef * eu;

    const auto bu = params.user_emb.row(t.user);
    const auto bi = params.item_emb.row(t.pos);
    const auto bj = params.item_emb.row(t.neg);
    g.loss += w * (bpr + 0.5 * params.l2 * (bu.squaredNorm() + bi.squaredNorm() + bj.squaredNorm()));
    urows.push_back(t.user);
    irows.push_back(t.pos);
    irows.push_back(t.neg);
  }

  if (propagated) {
    check_graph(params, graph);
    const Eigen::MatrixXd back =
        layer_mean(graph.adjacency(), stack(out_user_grad, out_item_grad), params.layers);
    g.user_grad = back.topRows(m);
    g.item_grad = back.bottomRows(n_items);
    // Propagation spreads the gradient beyond the indexed rows.
    urows.clear();
    irows.clear();
    for (Index r = 0; r < m; ++r)
      if (!g.user_grad.row(r).isZero(0.0)) urows.push_back(r);
    for (Index r = 0; r < n_items; ++r)
      if (!g.item_grad.row(r).isZero(0.0)) irows.push_back(r);
    for (const auto& t : triples) {
      if (t.weight == 0.0) continue;
      urows.push_back(t.user);
      irows.push_back(t.pos);
      irows.push_back(t.neg);
    }
  }

  if (params.l2 != 0.0) {
    for (const auto& t : triples) {
      if (t.weight == 0.0) continue;
      const double c = params.l2 * t.weight * inv_n;
      g.user_grad.row(t.user) += c * params.user_emb.row(t.user);
      g.item_grad.row(t.pos) += c * params.item_emb.row(t.pos);
      g.item_grad.row(t.neg) += c * params.item_emb.row(t.neg);
    }
  }

  for (auto* rows : {&urows, &irows}) {
    std::sort(rows->begin(), rows->end());
    rows->erase(std::unique(rows->begin(), rows->end()), rows->end());
  }
  g.user_rows = std::move(urows);
  g.item_rows = std::move(irows);
  return g;
}

double batch_loss(const ModelParams& params, const Graph& graph,
                  std::span<const WeightedTriple> triples) {
  const auto emb = output_embeddings(params, graph);
  if (triples.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(triples.size());
  double loss = 0.0;
  for (const auto& t : triples) {
    const double pos = score(emb, t.user, t.pos);
    const double neg = score(emb, t.user, t.neg);
    const double reg = params.user_emb.row(t.user).squaredNorm() +
                       params.item_emb.row(t.pos).squaredNorm() +
                       params.item_emb.row(t.neg).squaredNorm();
    loss += t.weight * inv_n * (bpr_loss(pos, neg) + 0.5 * params.l2 * reg);
  }
  return loss;
}

namespace {

constexpr std::array<char, 8> kMagic{'A', 'S', 'M', 'O', 'D', 'E', 'L', '\0'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DomainError("truncated checkpoint");
  return v;
}

void put_table(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(out, m(r, c));
}

Eigen::MatrixXd get_table(std::istream& in, std::int64_t rows, std::int64_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>(in);
  return m;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(params.kind));
  put(out, static_cast<std::int32_t>(params.layers));
  put(out, std::int32_t{0});
  put(out, static_cast<std::int64_t>(params.num_users()));
  put(out, static_cast<std::int64_t>(params.num_items()));
  put(out, static_cast<std::int64_t>(params.dim()));
  put(out, params.l2);
  put_table(out, params.user_emb);
  put_table(out, params.item_emb);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DomainError("not a model checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DomainError("unsupported checkpoint version " + std::to_string(version));
  ModelParams p;
  const auto kind = get<std::uint32_t>(in);
  if (kind > 1) throw DomainError("bad model kind in checkpoint");
  p.kind = static_cast<ModelKind>(kind);
  p.layers = get<std::int32_t>(in);
  (void)get<std::int32_t>(in);
  const auto m = get<std::int64_t>(in);
  const auto n = get<std::int64_t>(in);
  const auto d = get<std::int64_t>(in);
  if (m < 1 || n < 1 || d < 1) throw DomainError("bad checkpoint dimensions");
  p.l2 = get<double>(in);
  p.user_emb = get_table(in, m, d);
  p.item_emb = get_table(in, n, d);
  return p;
}

}  // namespace autosample
