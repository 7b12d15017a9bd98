// End-to-end acceptance checks. One PASS/FAIL line per check; the exit code
// is nonzero when any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "autosample/eval.hpp"
#include "autosample/search.hpp"
#include "autosample/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace autosample;
using namespace autosample::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  " << id << "  " << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

// The planted fixture every end-to-end check runs on, generated and split
// exactly as the command-line tool does.
DataSplit planted(std::uint64_t seed) {
  const auto ds = generate_synthetic(60, 120, 3, 0.3, 0.05, derive_seed(seed, "gen"));
  return split_dataset(ds, {3, 1, 1}, derive_seed(seed, "split"));
}

TrainingConfig desk_config(std::uint64_t seed) {
  TrainingConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.lr_w = 3e-3;
  cfg.l2 = 1e-2;
  cfg.dim = 64;
  cfg.seed = seed;
  return cfg;
}

PropagatedEmbeddings random_embeddings(Index users, Index items, int dim, Rng& rng) {
  PropagatedEmbeddings e;
  e.user_out = Eigen::MatrixXd::NullaryExpr(users, dim, [&] { return uniform01(rng) - 0.5; });
  e.item_out = Eigen::MatrixXd::NullaryExpr(items, dim, [&] { return uniform01(rng) - 0.5; });
  return e;
}

std::map<Index, double> histogram(const std::vector<Index>& draws) {
  std::map<Index, double> h;
  for (Index j : draws) h[j] += 1;
  return h;
}

// ---------------------------------------------------------------------------

void mixture_identity() {
  const auto start = Clock::now();
  const auto ds = generate_synthetic(50, 100, 5, 0.15, 0.05, 101);
  Rng wrng(102);
  const auto emb = random_embeddings(50, 100, 16, wrng);
  const auto rns = make_sampler(parse_sampler_spec("rns"), ds);
  const auto pns = make_sampler(parse_sampler_spec("pns:beta=0.75"), ds);
  const double alpha = 0.3;
  const auto& pos = ds.positives();
  const int n = 100000;

  auto triple_loss = [&](NegativeSampler& s, Rng& rng) {
    const auto [u, i] = pos[uniform_index(rng, pos.size())];
    Index j;
    s.draw(ds, emb, u, std::span<Index>(&j, 1), rng);
    return bpr_loss(score(emb, u, i), score(emb, u, j));
  };
  Rng r1(103), r2(104), r3(105);
  double mixed = 0, l_rns = 0, l_pns = 0;
  for (int s = 0; s < n; ++s) mixed += triple_loss(uniform01(r1) < alpha ? *rns : *pns, r1);
  for (int s = 0; s < n; ++s) l_rns += triple_loss(*rns, r2);
  for (int s = 0; s < n; ++s) l_pns += triple_loss(*pns, r3);
  mixed /= n;
  const double weighted = alpha * l_rns / n + (1 - alpha) * l_pns / n;
  const double rel = std::abs(mixed - weighted) / weighted;
  const double t = seconds_since(start);
  report(1, "mixture loss identity", rel < 0.02 && t < 30,
         fmt("mixture %.5f vs weighted %.5f, rel err %.3f%% (limit 2%%), %.2f s (limit 30 s)", mixed, weighted,
             100 * rel, t));
}

// Entrywise relative error with a 1e-6 floor on the magnitude.
double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / a.array().abs().max(b.array().abs()).max(1e-6)).maxCoeff();
}

double model_fd_error(ModelKind kind, int layers, Rng& rng) {
  const Index M = 2 + uniform_index(rng, 6), N = 2 + uniform_index(rng, 8);  // at most 20 nodes
  std::vector<Interaction> pairs;
  for (Index u = 0; u < M; ++u) pairs.emplace_back(u, uniform_index(rng, N));
  for (int e = 0; e < M * N / 3; ++e) pairs.emplace_back(uniform_index(rng, M), uniform_index(rng, N));
  const auto ds = InteractionDataset::from_pairs(M, N, pairs);
  const Graph graph(ds);
  auto params = init_params(M, N, 4, kind, rng(), layers, 0.05);
  params.user_emb *= 5.0;
  params.item_emb *= 5.0;
  std::vector<WeightedTriple> triples;
  for (int b = 0; b < 6; ++b) {
    const Index u = uniform_index(rng, M);
    const auto items = ds.user_items(u);
    const auto j = static_cast<Index>(uniform_index(rng, N));
    triples.push_back({u, items[uniform_index(rng, items.size())], j, 0.5 + uniform01(rng)});
  }
  const auto g = bpr_grad(params, graph, triples);
  const double h = 1e-6;
  auto fd_table = [&](Eigen::MatrixXd& table) {
    Eigen::MatrixXd out(table.rows(), table.cols());
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
      for (Eigen::Index c = 0; c < table.cols(); ++c) {
        const double keep = table(r, c);
        table(r, c) = keep + h;
        const double up = batch_loss(params, graph, triples);
        table(r, c) = keep - h;
        const double down = batch_loss(params, graph, triples);
        table(r, c) = keep;
        out(r, c) = (up - down) / (2 * h);
      }
    }
    return out;
  };
  const Eigen::MatrixXd fu = fd_table(params.user_emb);
  const Eigen::MatrixXd fi = fd_table(params.item_emb);
  return std::max(rel_error(g.user_grad, fu), rel_error(g.item_grad, fi));
}

double theta_fd_error(Rng& rng) {
  const int T = 2 + static_cast<int>(uniform_index(rng, 3));
  const Eigen::VectorXd theta = Eigen::VectorXd::NullaryExpr(T, [&] { return 3 * uniform01(rng) - 1.5; });
  const Eigen::VectorXd noise = gumbel_noise(T, rng);
  const Eigen::VectorXd losses = Eigen::VectorXd::NullaryExpr(T, [&] { return 0.2 + uniform01(rng); });
  const double tau = 0.1 + 0.9 * uniform01(rng);
  const Eigen::VectorXd analytic = theta_grad(theta, noise, tau, losses);
  Eigen::VectorXd fd(T);
  for (int s = 0; s < T; ++s) {
    Eigen::VectorXd up = theta, down = theta;
    up[s] += 1e-6;
    down[s] -= 1e-6;
    fd[s] = (combined_loss(selection_probs(up, noise, tau), losses) -
             combined_loss(selection_probs(down, noise, tau), losses)) / 2e-6;
  }
  return rel_error(analytic, fd);
}

void gradient_check() {
  const auto start = Clock::now();
  Rng rng(201);
  double mf = 0, lgn = 0, th = 0;
  for (int n = 0; n < 50; ++n) mf = std::max(mf, model_fd_error(ModelKind::MF, 0, rng));
  for (int n = 0; n < 50; ++n) lgn = std::max(lgn, model_fd_error(ModelKind::LightGCN, 1 + n % 2, rng));
  for (int n = 0; n < 50; ++n) th = std::max(th, theta_fd_error(rng));
  const double t = seconds_since(start);
  const bool ok = std::max({mf, lgn, th}) < 1e-4 && t < 10;
  report(2, "finite-difference gradients", ok,
         fmt("max rel err MF %.2e, LightGCN %.2e, theta %.2e (limit 1e-4), %.2f s (limit 10 s)", mf, lgn, th, t));
}

void gumbel_max_law() {
  const auto start = Clock::now();
  Rng rng(301);
  double worst = 0;
  for (int v = 0; v < 10; ++v) {
    const int T = 2 + v % 3;
    const Eigen::VectorXd theta = Eigen::VectorXd::NullaryExpr(T, [&] { return 4 * uniform01(rng) - 2; });
    const Eigen::VectorXd alpha = softmax(theta);
    std::map<Index, double> h;
    for (int n = 0; n < 100000; ++n) {
      Eigen::Index arg;
      (theta + gumbel_noise(T, rng)).maxCoeff(&arg);
      h[static_cast<Index>(arg)] += 1;
    }
    std::map<Index, double> expected;
    for (int t = 0; t < T; ++t) expected[t] = alpha[t];
    worst = std::max(worst, tv_distance(h, expected));
  }
  const double t = seconds_since(start);
  report(3, "gumbel-max law", worst < 0.01 && t < 5,
         fmt("worst TV %.4f over 10 logit vectors (limit 0.01), %.2f s (limit 5 s)", worst, t));
}

void sampler_conformance() {
  const int n = 100000;
  Rng rng(401);
  std::vector<std::string> notes;
  bool ok = true;

  // 20-item fixture, 4 positives for user 0, popularity varying per item.
  std::vector<int> pops(20);
  for (int j = 0; j < 20; ++j) pops[j] = 1 + (j * 7) % 11;
  auto ds = dataset_with_popularity(pops);
  {
    // The last user holds only the most popular items.
    const Index u = ds.num_users() - 1;
    const auto items = ds.user_items(u);
    std::map<Index, double> expected;
    for (Index j = 0; j < 20; ++j)
      if (!ds.contains(u, j)) expected[j] = 1.0 / (20 - items.size());
    const double tv = tv_distance(histogram(sample_rns(ds, u, n, rng)), expected);
    ok &= tv < 0.01;
    notes.push_back(fmt("RNS %.4f", tv));

    const auto p = popularity_distribution(ds, 0.75);
    double z = 0;
    std::map<Index, double> pexp;
    for (Index j = 0; j < 20; ++j)
      if (!ds.contains(u, j)) z += p[j];
    for (Index j = 0; j < 20; ++j)
      if (!ds.contains(u, j)) pexp[j] = p[j] / z;
    const double ptv = tv_distance(histogram(sample_pns(ds, u, n, 0.75, rng)), pexp);
    ok &= ptv < 0.01;
    notes.push_back(fmt("PNS %.4f", ptv));
  }
  {
    const auto emb = random_embeddings(ds.num_users(), 20, 4, rng);
    const Index u = 0;  // no positives: all 20 items are candidates
    const double lambda = 4.0;
    std::vector<Index> order(20);
    for (Index j = 0; j < 20; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return score(emb, u, a) > score(emb, u, b); });
    double z = 0;
    for (int r = 1; r <= 20; ++r) z += std::exp(-r / lambda);
    std::map<Index, double> expected;
    for (int r = 1; r <= 20; ++r) expected[order[r - 1]] = std::exp(-r / lambda) / z;
    const double tv = tv_distance(histogram(sample_aobpr(ds, emb, u, n, lambda, rng)), expected);
    ok &= tv < 0.01;
    notes.push_back(fmt("AOBPR %.4f", tv));

    std::vector<std::vector<Index>> trace;
    const auto draws = sample_dns(ds, emb, ds.num_users() - 1, n, 5, rng, &trace);
    std::size_t wrong = 0;
    for (std::size_t d = 0; d < draws.size(); ++d)
      for (Index c : trace[d])
        if (score(emb, ds.num_users() - 1, c) > score(emb, ds.num_users() - 1, draws[d])) ++wrong;
    ok &= wrong == 0;
    notes.push_back(fmt("DNS non-argmax %zu", wrong));
  }
  {
    const auto mixed = generate_synthetic(32, 64, 4, 0.4, 0.1, 402);
    const auto emb = random_embeddings(32, 64, 4, rng);
    std::vector<std::unique_ptr<NegativeSampler>> samplers;
    for (const char* s : {"rns", "pns:beta=0.75", "dns:c=10", "aobpr"})
      samplers.push_back(make_sampler(parse_sampler_spec(s), mixed));
    std::size_t bad = 0, total = 0;
    std::vector<Index> out(25);
    while (total < 1000000) {
      const Index u = static_cast<Index>(uniform_index(rng, 32));
      auto& s = samplers[uniform_index(rng, samplers.size())];
      s->draw(mixed, emb, u, out, rng);
      for (Index j : out) bad += mixed.contains(u, j) ? 1 : 0;
      total += out.size();
    }
    ok &= bad == 0;
    notes.push_back(fmt("positives returned %zu/%zu", bad, total));
  }
  std::string detail = "TV ";
  for (std::size_t k = 0; k < notes.size(); ++k) detail += (k ? ", " : "") + notes[k];
  report(4, "sampler distributions", ok, detail + " (TV limit 0.01)");
}

void metric_oracle() {
  Rng rng(501);
  double worst = 0;
  for (int n = 0; n < 200; ++n) {
    const Index M = 1 + uniform_index(rng, 6), N = 5 + uniform_index(rng, 46);
    std::vector<Interaction> train_pairs, test_pairs;
    for (Index u = 0; u < M; ++u)
      for (Index j = 0; j < N; ++j) {
        const double x = uniform01(rng);
        if (x < 0.2) train_pairs.emplace_back(u, j);
        else if (x < 0.35) test_pairs.emplace_back(u, j);
      }
    test_pairs.emplace_back(0, N - 1);
    std::erase(train_pairs, Interaction{0, N - 1});
    const auto train = InteractionDataset::from_pairs(M, N, train_pairs);
    const auto test = InteractionDataset::from_pairs(M, N, test_pairs);
    const auto emb = random_embeddings(M, N, 3, rng);
    const int k = 1 + static_cast<int>(uniform_index(rng, 20));
    const auto got = evaluate(emb, train, test, {}, k);

    double recall = 0, ndcg = 0, precision = 0, hr = 0;
    int users = 0;
    for (Index u = 0; u < M; ++u) {
      const std::set<Index> truth(test.user_items(u).begin(), test.user_items(u).end());
      if (truth.empty()) continue;
      std::vector<double> s(N);
      for (Index j = 0; j < N; ++j) s[j] = emb.user_out.row(u).dot(emb.item_out.row(j));
      const std::set<Index> ex(train.user_items(u).begin(), train.user_items(u).end());
      const auto m = brute_force_metrics(brute_force_topk(s, ex, k), truth, k);
      recall += m.recall;
      ndcg += m.ndcg;
      precision += m.precision;
      hr += m.hr;
      ++users;
    }
    worst = std::max({worst, std::abs(got.recall - recall / users), std::abs(got.ndcg - ndcg / users),
                      std::abs(got.precision - precision / users), std::abs(got.hit_ratio - hr / users)});
  }
  const auto hand = metrics_for_user(std::vector<Index>{0, 2}, std::vector<Index>{0, 1}, 2);
  const bool hand_ok = hand.recall == 0.5 && hand.precision == 0.5 && hand.hit_ratio == 1.0 &&
                       std::abs(hand.ndcg - 1 / (1 + 1 / std::log2(3.0))) < 1e-12;
  report(5, "metric oracle", worst <= 1e-12 && hand_ok,
         fmt("max abs diff %.2e over 200 instances (limit 1e-12); hand case ndcg %.4f %s", worst, hand.ndcg,
             hand_ok ? "ok" : "wrong"));
}

void learning_signal() {
  const auto start = Clock::now();
  int passed = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto split = planted(seed);
    auto cfg = desk_config(seed);
    const auto init = initial_params(split, cfg);
    const auto before = evaluate_test(output_embeddings(init, Graph(split.train)), split, 20);
    const auto after = train_fixed(split, parse_sampler_spec("rns"), init, cfg);
    const double lift = after.test.recall / before.recall;
    passed += lift >= 5.0;
    detail += fmt("%sseed %d %.3f -> %.3f (%.2fx)", detail.empty() ? "" : ", ", int(seed), before.recall,
                  after.test.recall, lift);
  }
  const double t = seconds_since(start);
  report(6, "learning signal", passed == 3 && t < 60,
         detail + fmt("; %d/3 seeds reach 5x, %.2f s (limit 60 s)", passed, t));
}

void warm_start() {
  int wins = 0;
  std::string detail;
  const auto specs = parse_sampler_list("rns;pns:beta=0.75;dns:c=10");
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto split = planted(seed);
    const auto cfg = desk_config(seed);
    const auto found = run_search(split, specs, initial_params(split, cfg), cfg);
    const auto warm = retrain(split, found.alpha_star, specs, found.best_params, cfg);
    const auto cold = retrain(split, found.alpha_star, specs, initial_params(split, cfg), cfg);
    wins += warm.train.valid.recall >= cold.train.valid.recall;
    detail += fmt("%s%.3f/%.3f", detail.empty() ? "" : ", ", warm.train.valid.recall, cold.train.valid.recall);
  }
  report(7, "warm-start retrain", wins >= 3,
         fmt("warm/random valid recall@20 per seed: ", 0) + detail + fmt("; warm >= random in %d/5 (need 3)", wins));
}

void search_efficiency() {
  const auto split = planted(42);
  const auto cfg = desk_config(42);
  const auto specs = parse_sampler_list("rns;pns:beta=0.75;dns:c=10");
  std::vector<double> automl, grid;
  for (int rep = 0; rep < 5; ++rep) {
    auto t0 = Clock::now();
    const auto found = run_search(split, specs, initial_params(split, cfg), cfg);
    retrain(split, found.alpha_star, specs, found.best_params, cfg);
    automl.push_back(seconds_since(t0));
    t0 = Clock::now();
    grid_search(split, specs, cfg, 1);
    grid.push_back(seconds_since(t0));
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  const double a = median(automl), g = median(grid);
  report(8, "search efficiency", a < g,
         fmt("search+retrain %.1f ms vs grid %.1f ms (median of 5, 3 candidates, 30 epochs each)", 1e3 * a, 1e3 * g));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void reproducibility() {
  const fs::path root = fs::temp_directory_path() / "autosample_acceptance";
  fs::remove_all(root);
  const std::string cli = AUTOSAMPLE_CLI_PATH;
  const std::string common = " --epochs 5 --batch_size 32 --lr_w 0.003 --l2 0.01 --jobs 1 --seed 7";
  auto run = [&](const std::string& args, const fs::path& out) {
    const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + out.string() + "\" > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };

  const auto data = root / "data";
  const auto tsv = (data / "interactions.tsv").string();
  bool setup = run("gen --seed 7", data) == 0;
  setup &= run("search --data \"" + tsv + "\"" + common, root / "fixture_search") == 0;
  setup &= run("train --data \"" + tsv + "\"" + common, root / "fixture_train") == 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "gen --seed 7"},
      {"split", "split --seed 7 --data \"" + tsv + "\""},
      {"train", "train --data \"" + tsv + "\"" + common},
      {"search", "search --data \"" + tsv + "\"" + common},
      {"retrain", "retrain --data \"" + tsv + "\" --from \"" + (root / "fixture_search").string() + "\"" + common},
      {"auto", "auto --data \"" + tsv + "\"" + common},
      {"grid", "grid --data \"" + tsv + "\"" + common},
      {"eval", "eval --data \"" + tsv + "\" --checkpoint \"" + (root / "fixture_train" / "checkpoint.bin").string() +
                   "\"" + common},
      {"tune", "tune --data \"" + tsv + "\" --epochs 2 --batch_size 32 --jobs 1 --seed 7"},
  };
  std::vector<std::string> mismatched;
  int files = 0;
  for (const auto& [name, args] : commands) {
    const auto a = root / (name + "_a");
    const auto b = root / (name + "_b");
    if (run(args, a) != 0 || run(args, b) != 0) {
      mismatched.push_back(name + "(exit)");
      continue;
    }
    for (const char* f : {"metrics.json", "alpha.json"}) {
      const bool in_a = fs::exists(a / f), in_b = fs::exists(b / f);
      if (!in_a && !in_b) continue;
      ++files;
      if (in_a != in_b || slurp(a / f) != slurp(b / f)) mismatched.push_back(name + "/" + f);
    }
  }
  std::string detail = fmt("%d output files compared across %zu commands", files, commands.size());
  if (!setup) detail += "; fixture setup failed";
  for (const auto& m : mismatched) detail += "; differs: " + m;
  report(9, "reproducibility", setup && mismatched.empty(), detail);
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks = {
      mixture_identity, gradient_check, gumbel_max_law, sampler_conformance, metric_oracle,
      learning_signal,  warm_start,     search_efficiency, reproducibility,
  };
  for (const auto& check : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      std::cout << "FAIL  check threw: " << e.what() << std::endl;
      ++failures;
    }
  }
  std::cout << (failures == 0 ? "all checks passed" : fmt("%d check(s) failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
