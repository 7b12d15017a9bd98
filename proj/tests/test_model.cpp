#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "autosample/errors.hpp"
#include "autosample/model.hpp"

using namespace autosample;

namespace {

// Central differences of batch_loss over every base embedding entry.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> numeric_grad(ModelParams p, const Graph& g,
                                                         const std::vector<WeightedTriple>& triples,
                                                         double h = 1e-6) {
  Eigen::MatrixXd gu(p.user_emb.rows(), p.user_emb.cols());
  Eigen::MatrixXd gi(p.item_emb.rows(), p.item_emb.cols());
  for (auto [table, out] : {std::pair{&p.user_emb, &gu}, std::pair{&p.item_emb, &gi}}) {
    for (Eigen::Index r = 0; r < table->rows(); ++r) {
      for (Eigen::Index c = 0; c < table->cols(); ++c) {
        const double saved = (*table)(r, c);
        (*table)(r, c) = saved + h;
        const double up = batch_loss(p, g, triples);
        (*table)(r, c) = saved - h;
        const double down = batch_loss(p, g, triples);
        (*table)(r, c) = saved;
        (*out)(r, c) = (up - down) / (2 * h);
      }
    }
  }
  return {gu, gi};
}

// Entrywise relative error with a 1e-6 floor on the magnitude.
double max_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / a.array().abs().max(b.array().abs()).max(1e-6)).maxCoeff();
}

struct Instance {
  ModelParams params;
  InteractionDataset train;
  std::vector<WeightedTriple> triples;
};

Instance random_instance(Rng& rng, ModelKind kind, int layers) {
  const Index m = 2 + static_cast<Index>(uniform_index(rng, 6));
  const Index n = 3 + static_cast<Index>(uniform_index(rng, 8));  // m + n <= 20
  std::vector<Interaction> pairs;
  for (Index u = 0; u < m; ++u)
    for (Index i = 0; i < n; ++i)
      if (uniform01(rng) < 0.35) pairs.emplace_back(u, i);
  Instance inst{init_params(m, n, 1 + static_cast<Index>(uniform_index(rng, 5)), kind, rng(), layers,
                            uniform01(rng) < 0.5 ? 0.0 : 0.05),
                InteractionDataset::from_pairs(m, n, pairs),
                {}};
  inst.params.user_emb *= 5.0;  // move away from x ~ 0
  inst.params.item_emb *= 5.0;
  const int batch = 1 + static_cast<int>(uniform_index(rng, 8));
  for (int b = 0; b < batch; ++b)
    inst.triples.push_back({static_cast<Index>(uniform_index(rng, m)), static_cast<Index>(uniform_index(rng, n)),
                            static_cast<Index>(uniform_index(rng, n)), uniform01(rng) * 2.0});
  return inst;
}

}  // namespace

TEST_CASE("init_params shapes, determinism and scale") {
  const auto p = init_params(2, 3, 4, ModelKind::MF, 1);
  CHECK(p.user_emb.rows() == 2);
  CHECK(p.user_emb.cols() == 4);
  CHECK(p.item_emb.rows() == 3);
  CHECK(p.item_emb.cols() == 4);
  const auto q = init_params(2, 3, 4, ModelKind::MF, 1);
  CHECK(p.user_emb == q.user_emb);
  CHECK(p.item_emb == q.item_emb);
  CHECK_FALSE(init_params(2, 3, 4, ModelKind::MF, 2).user_emb == p.user_emb);

  const auto big = init_params(500, 500, 100, ModelKind::MF, 3);  // 10^5 user entries
  const double mean = big.user_emb.mean();
  CHECK(std::abs(mean) < 3 * 0.1 / std::sqrt(1e5));
  const double var = (big.user_emb.array() - mean).square().mean();
  CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.01));

  CHECK_THROWS_AS(init_params(0, 3, 4, ModelKind::MF, 1), DomainError);
}

TEST_CASE("MF score is the embedding dot product") {
  ModelParams p;
  p.user_emb = Eigen::MatrixXd{{1, 2}};
  p.item_emb = Eigen::MatrixXd{{3, 4}};
  CHECK(score(p, Graph{}, 0, 0) == 11.0);
  CHECK_THROWS_AS(score(p, Graph{}, 1, 0), DomainError);
  CHECK_THROWS_AS(score(p, Graph{}, 0, -1), DomainError);
}

TEST_CASE("LightGCN with zero layers reproduces MF") {
  const auto train = InteractionDataset::from_pairs(3, 4, {{0, 0}, {1, 2}, {2, 3}, {0, 1}});
  const Graph g(train);
  auto mf = init_params(3, 4, 5, ModelKind::MF, 9);
  auto lg = mf;
  lg.kind = ModelKind::LightGCN;
  lg.layers = 0;
  const auto out = propagate_lightgcn(lg, g, 0);
  CHECK(out.user_out == mf.user_emb);
  CHECK(out.item_out == mf.item_emb);
  for (Index u = 0; u < 3; ++u)
    for (Index i = 0; i < 4; ++i) CHECK(std::abs(score(lg, g, u, i) - score(mf, g, u, i)) <= 1e-12);
}

TEST_CASE("single-edge propagation averages the two endpoints") {
  const auto train = InteractionDataset::from_pairs(1, 1, {{0, 0}});
  const Graph g(train);
  CHECK(g.adjacency().coeff(0, 1) == 1.0);
  CHECK(g.adjacency().coeff(1, 0) == 1.0);
  ModelParams p;
  p.kind = ModelKind::LightGCN;
  p.layers = 1;
  p.user_emb = Eigen::MatrixXd{{1.0, 3.0}};
  p.item_emb = Eigen::MatrixXd{{5.0, -1.0}};
  const auto out = propagate_lightgcn(p, g, 1);
  CHECK(out.user_out.row(0).isApprox((p.user_emb.row(0) + p.item_emb.row(0)) / 2));
  CHECK(out.item_out.row(0).isApprox((p.user_emb.row(0) + p.item_emb.row(0)) / 2));
}

TEST_CASE("LightGCN L=2 on a path graph matches a dense matrix-power oracle") {
  // u0 - i0 - u1 - i1
  const auto train = InteractionDataset::from_pairs(2, 2, {{0, 0}, {1, 0}, {1, 1}});
  const Graph g(train);
  auto p = init_params(2, 2, 3, ModelKind::LightGCN, 4, 2);

  // Nodes ordered [u0, u1, i0, i1].
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a(0, 2) = a(2, 0) = 1;
  a(1, 2) = a(2, 1) = 1;
  a(1, 3) = a(3, 1) = 1;
  const Eigen::Vector4d dinv = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  const Eigen::Matrix4d ahat = dinv.asDiagonal() * a * dinv.asDiagonal();
  Eigen::MatrixXd e(4, 3);
  e << p.user_emb, p.item_emb;
  const Eigen::MatrixXd expected = (e + ahat * e + ahat * ahat * e) / 3.0;

  const auto out = propagate_lightgcn(p, g, 2);
  CHECK((out.user_out - expected.topRows(2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.item_out - expected.bottomRows(2)).cwiseAbs().maxCoeff() < 1e-12);
  for (Index u = 0; u < 2; ++u)
    for (Index i = 0; i < 2; ++i)
      CHECK(score(p, g, u, i) == doctest::Approx(expected.row(u).dot(expected.row(2 + i))).epsilon(1e-12));
}

TEST_CASE("normalized adjacency of a regular bipartite graph has unit row sums") {
  // Complete 3x3 bipartite graph: every node has degree 3.
  std::vector<Interaction> pairs;
  for (Index u = 0; u < 3; ++u)
    for (Index i = 0; i < 3; ++i) pairs.emplace_back(u, i);
  const Graph g(InteractionDataset::from_pairs(3, 3, pairs));
  const Eigen::MatrixXd dense = g.adjacency();
  for (Eigen::Index r = 0; r < dense.rows(); ++r) CHECK(dense.row(r).sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(dense(0, 3) == doctest::Approx(1.0 / 3.0));

  // An isolated item keeps an all-zero row.
  const Graph iso(InteractionDataset::from_pairs(1, 2, {{0, 0}}));
  CHECK(Eigen::MatrixXd(iso.adjacency()).row(2).isZero(0.0));
}

TEST_CASE("propagation is linear in the embeddings") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, ModelKind::LightGCN, 1 + trial % 3);
    const Graph g(inst.train);
    auto scaled = inst.params;
    const double c = uniform01(rng) * 4 - 2;
    scaled.user_emb *= c;
    scaled.item_emb *= c;
    const auto a = propagate_lightgcn(inst.params, g, inst.params.layers);
    const auto b = propagate_lightgcn(scaled, g, inst.params.layers);
    CHECK((b.user_out - c * a.user_out).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((b.item_out - c * a.item_out).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("bpr_loss closed forms and stability") {
  CHECK(bpr_loss(0.3, 0.3) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bpr_loss(1.0, 0.0) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-15));
  CHECK(bpr_loss(1.0, 0.0) == doctest::Approx(0.313262).epsilon(1e-6));
  const double tiny = bpr_loss(1000.0, 0.0);
  CHECK(std::isfinite(tiny));
  CHECK(tiny < 1e-300);
  CHECK(bpr_loss(0.0, 1000.0) == doctest::Approx(1000.0).epsilon(1e-15));
}

TEST_CASE("bpr_loss(a, b) - bpr_loss(b, a) equals b - a") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = (uniform01(rng) - 0.5) * 60;
    const double b = (uniform01(rng) - 0.5) * 60;
    CHECK(std::abs((bpr_loss(a, b) - bpr_loss(b, a)) - (b - a)) < 1e-10);
  }
}

TEST_CASE("bpr_grad hand example at x = 0") {
  ModelParams p;
  p.user_emb = Eigen::MatrixXd{{1, 0}};
  p.item_emb = Eigen::MatrixXd{{0, 1}, {0, 0}};
  const std::vector<WeightedTriple> t{{0, 0, 1, 1.0}};
  const auto g = bpr_grad(p, Graph{}, t);
  CHECK(g.user_grad.row(0).isApprox(Eigen::RowVector2d(0, -0.5)));
  CHECK(g.item_grad.row(0).isApprox(Eigen::RowVector2d(-0.5, 0)));
  CHECK(g.item_grad.row(1).isApprox(Eigen::RowVector2d(0.5, 0)));
  CHECK(g.loss == doctest::Approx(std::log(2.0)));
  CHECK(g.user_rows == std::vector<Index>{0});
  CHECK(g.item_rows == std::vector<Index>{0, 1});
}

TEST_CASE("zero weights give a zero gradient and touch nothing") {
  auto p = init_params(4, 6, 3, ModelKind::MF, 2, 3, 0.1);
  const std::vector<WeightedTriple> t{{0, 1, 2, 0.0}, {3, 4, 5, 0.0}};
  const auto g = bpr_grad(p, Graph{}, t);
  CHECK(g.user_grad.isZero(0.0));
  CHECK(g.item_grad.isZero(0.0));
  CHECK(g.user_rows.empty());
  CHECK(g.item_rows.empty());
  CHECK_THROWS_AS(bpr_grad(p, Graph{}, std::vector<WeightedTriple>{{0, 1, 2, -1.0}}), DomainError);
}

TEST_CASE("MF gradient leaves untouched rows exactly zero") {
  auto p = init_params(5, 8, 4, ModelKind::MF, 3, 3, 0.01);
  const std::vector<WeightedTriple> t{{1, 2, 3, 1.0}, {1, 5, 3, 0.5}};
  const auto g = bpr_grad(p, Graph{}, t);
  CHECK(g.user_rows == std::vector<Index>{1});
  CHECK(g.item_rows == std::vector<Index>{2, 3, 5});
  for (Index r : {0, 2, 3, 4}) CHECK(g.user_grad.row(r).isZero(0.0));
  for (Index r : {0, 1, 4, 6, 7}) CHECK(g.item_grad.row(r).isZero(0.0));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(2024);
  for (auto [kind, layers] : {std::pair{ModelKind::MF, 0}, std::pair{ModelKind::LightGCN, 1},
                              std::pair{ModelKind::LightGCN, 2}}) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto inst = random_instance(rng, kind, layers);
      const Graph g(inst.train);
      const auto analytic = bpr_grad(inst.params, g, inst.triples);
      CHECK(analytic.loss == doctest::Approx(batch_loss(inst.params, g, inst.triples)).epsilon(1e-12));
      const auto [nu, ni] = numeric_grad(inst.params, g, inst.triples);
      worst = std::max({worst, max_rel_error(analytic.user_grad, nu), max_rel_error(analytic.item_grad, ni)});
      // Every nonzero row is listed as touched.
      for (Eigen::Index r = 0; r < analytic.user_grad.rows(); ++r)
        if (!analytic.user_grad.row(r).isZero(0.0))
          CHECK(std::binary_search(analytic.user_rows.begin(), analytic.user_rows.end(), r));
    }
    INFO("kind=" << to_string(kind) << " layers=" << layers);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("checkpoint round-trip and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "autosample_test_model";
  std::filesystem::create_directories(dir);
  auto p = init_params(7, 5, 3, ModelKind::LightGCN, 8, 2, 1e-3);
  save_checkpoint(p, dir / "ck.bin");
  const auto q = load_checkpoint(dir / "ck.bin");
  CHECK(q.kind == ModelKind::LightGCN);
  CHECK(q.layers == 2);
  CHECK(q.l2 == 1e-3);
  CHECK(q.user_emb == p.user_emb);
  CHECK(q.item_emb == p.item_emb);

  std::ofstream(dir / "junk.bin") << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), DomainError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), DomainError);
  CHECK_THROWS_AS(parse_model_kind("ngcf"), ConfigError);
}
