#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "autosample/data.hpp"

namespace autosample {

enum class ModelKind { MF, LightGCN };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ModelParams {
  Eigen::MatrixXd user_emb;  // M x d
  Eigen::MatrixXd item_emb;  // N x d
  ModelKind kind = ModelKind::MF;
  int layers = 3;  // LightGCN propagation depth, ignored for MF
  double l2 = 0.0;

  Index num_users() const { return static_cast<Index>(user_emb.rows()); }
  Index num_items() const { return static_cast<Index>(item_emb.rows()); }
  Index dim() const { return static_cast<Index>(user_emb.cols()); }

  bool all_finite() const { return user_emb.allFinite() && item_emb.allFinite(); }
};

// Entries i.i.d. N(0, 0.1^2).
ModelParams init_params(Index num_users, Index num_items, Index dim, ModelKind kind,
                        std::uint64_t seed, int layers = 3, double l2 = 0.0);

/// Symmetric-normalized bipartite adjacency D^{-1/2} A D^{-1/2} over the
/// (M + N)-node user/item graph. Users occupy rows [0, M), items [M, M + N).
/// Isolated nodes have all-zero rows.
class Graph {
 public:
  Graph() = default;
  explicit Graph(const InteractionDataset& train);

  Index num_users() const noexcept { return num_users_; }
  Index num_items() const noexcept { return num_items_; }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& adjacency() const noexcept { return adj_; }
  bool empty() const noexcept { return adj_.rows() == 0; }

 private:
  Index num_users_ = 0;
  Index num_items_ = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> adj_;
};

struct PropagatedEmbeddings {
  Eigen::MatrixXd user_out;
  Eigen::MatrixXd item_out;
};

// Mean of E^(0..layers) with E^(k+1) = A E^(k).
PropagatedEmbeddings propagate_lightgcn(const ModelParams& params, const Graph& graph, int layers);

// The embeddings the scoring function actually dots: base tables for MF,
// layer-averaged propagation for LightGCN.
PropagatedEmbeddings output_embeddings(const ModelParams& params, const Graph& graph);

double score(const ModelParams& params, const Graph& graph, Index u, Index i);

inline double score(const PropagatedEmbeddings& emb, Index u, Index i) {
  return emb.user_out.row(u).dot(emb.item_out.row(i));
}

// ln(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

// -ln sigma(pos - neg).
template <typename Scalar>
Scalar bpr_loss(Scalar pos_score, Scalar neg_score) {
  return softplus(neg_score - pos_score);
}

struct WeightedTriple {
  Index user = 0;
  Index pos = 0;
  Index neg = 0;
  double weight = 1.0;
};

/// Gradient of the batch objective
///   (1/n) sum_b w_b [ bpr(u,i,j) + l2/2 (|e_u|^2 + |e_i|^2 + |e_j|^2) ]
/// with respect to the base embedding tables. Dense buffers, but only the
/// rows listed in `user_rows` / `item_rows` may be nonzero.
struct GradAccumulator {
  Eigen::MatrixXd user_grad;
  Eigen::MatrixXd item_grad;
  std::vector<Index> user_rows;  // sorted, unique
  std::vector<Index> item_rows;
  double loss = 0.0;  // objective value at the evaluation point
};

GradAccumulator bpr_grad(const ModelParams& params, const Graph& graph,
                         std::span<const WeightedTriple> triples);

// Same, reusing already propagated embeddings. When `per_triple_bpr` is
// non-empty it receives the unweighted BPR term of every triple.
GradAccumulator bpr_grad(const ModelParams& params, const Graph& graph,
                         const PropagatedEmbeddings& emb, std::span<const WeightedTriple> triples,
                         std::span<double> per_triple_bpr = {});

// The scalar objective differentiated by bpr_grad.
double batch_loss(const ModelParams& params, const Graph& graph,
                  std::span<const WeightedTriple> triples);

// Checkpoint container: magic, format version, kind, layers, l2, dims and
// both tables row-major as little-endian doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace autosample
