#include "autosample/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "autosample/errors.hpp"
#include "autosample/rng.hpp"

namespace autosample {

void validate(const TrainingConfig& cfg) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid training config: ") + what);
  };
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.k >= 1, "k (negatives per positive) must be >= 1");
  require(cfg.dim >= 1, "dim must be >= 1");
  require(cfg.eval_every >= 1, "eval_every must be >= 1");
  require(cfg.topk >= 1, "topk must be >= 1");
  require(cfg.patience >= 0, "patience must be >= 0");
  require(cfg.layers >= 0, "layers must be >= 0");
  require(cfg.lr_w > 0.0 && std::isfinite(cfg.lr_w), "lr_w must be > 0");
  require(cfg.lr_theta > 0.0 && std::isfinite(cfg.lr_theta), "lr_theta must be > 0");
  require(cfg.l2 >= 0.0 && std::isfinite(cfg.l2), "l2 must be >= 0");
  MetricsReport{}.metric(cfg.metric_for_best);
}

MetricsReport evaluate_valid(const PropagatedEmbeddings& emb, const DataSplit& split, int k) {
  return evaluate(emb, split.train, split.valid, {}, k);
}

MetricsReport evaluate_test(const PropagatedEmbeddings& emb, const DataSplit& split, int k) {
  const InteractionDataset* extra[] = {&split.valid};
  return evaluate(emb, split.train, split.test, extra, k);
}

bool BestTracker::offer(int epoch, const MetricsReport& valid, const ModelParams& params) {
  const double value = valid.metric(metric_);
  if (value > best_value_) {
    best_value_ = value;
    best_valid_ = valid;
    best_epoch_ = epoch;
    best_params_ = params;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

ModelParams initial_params(const DataSplit& split, const TrainingConfig& cfg) {
  return init_params(split.train.num_users(), split.train.num_items(), cfg.dim, cfg.model,
                     derive_seed(cfg.seed, "init"), cfg.layers, cfg.l2);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_shapes(const DataSplit& split, const ModelParams& params) {
  if (params.num_users() != split.train.num_users() || params.num_items() != split.train.num_items())
    throw DomainError("model tables (" + std::to_string(params.num_users()) + " x " +
                      std::to_string(params.num_items()) + ") do not match the dataset (" +
                      std::to_string(split.train.num_users()) + " x " +
                      std::to_string(split.train.num_items()) + ")");
}

}  // namespace

TrainResult train_fixed(const DataSplit& split, const SamplerSpec& spec, ModelParams params,
                        const TrainingConfig& cfg) {
  validate(cfg);
  check_shapes(split, params);
  const auto start = Clock::now();
  params.l2 = cfg.l2;

  const Graph graph(split.train);
  const auto sampler = make_sampler(spec, split.train);
  Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
  Rng sampler_rng = make_rng(cfg.seed, "sampler:" + spec.name);
  AdamOptimizer user_opt(params.num_users(), params.dim(), {}, cfg.dense_adam);
  AdamOptimizer item_opt(params.num_items(), params.dim(), {}, cfg.dense_adam);
  BestTracker best(cfg.metric_for_best, cfg.patience);

  std::vector<Interaction> order = split.train.positives();
  std::vector<WeightedTriple> triples;
  std::vector<Index> negs(cfg.k);
  TrainResult result;
  result.sampler = spec.name;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    PropagatedEmbeddings emb;
    if (cfg.stale_propagation) emb = output_embeddings(params, graph);
    for (std::size_t b = 0, batch = 0; b < order.size(); b += cfg.batch_size, ++batch) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      if (!cfg.stale_propagation) emb = output_embeddings(params, graph);
      triples.clear();
      for (std::size_t p = b; p < e; ++p) {
        const auto [u, i] = order[p];
        sampler->draw(split.train, emb, u, negs, sampler_rng);
        for (Index j : negs) triples.push_back({u, i, j, 1.0});
      }
      const auto grad = bpr_grad(params, graph, emb, triples);
      if (!std::isfinite(grad.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss training " << spec.name << " at epoch " << epoch << ", batch " << batch
            << " (loss " << grad.loss << ")";
        throw NumericError(msg.str());
      }
      user_opt.step(params.user_emb, grad.user_grad, grad.user_rows, cfg.lr_w);
      item_opt.step(params.item_emb, grad.item_grad, grad.item_rows, cfg.lr_w);
    }
    result.epochs_run = epoch + 1;
    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
      best.offer(epoch, evaluate_valid(output_embeddings(params, graph), split, cfg.topk), params);
      result.valid_curve.push_back(best.best_value());
      if (best.should_stop()) break;
    }
  }

  result.params = best.best_params();
  result.best_epoch = best.best_epoch();
  result.valid = best.best_valid();
  result.test = evaluate_test(output_embeddings(result.params, graph), split, cfg.topk);
  result.elapsed_ms = ms_since(start);
  return result;
}

std::size_t select_sampler(std::span<const double> alpha, bool warn_on_tie) {
  if (alpha.empty()) throw DomainError("select_sampler: empty weight vector");
  const auto it = std::max_element(alpha.begin(), alpha.end());
  const auto idx = static_cast<std::size_t>(it - alpha.begin());
  if (warn_on_tie && std::count(alpha.begin(), alpha.end(), *it) > 1)
    std::clog << "warning: tie in sampler weights; selecting index " << idx << '\n';
  return idx;
}

RetrainResult retrain(const DataSplit& split, std::span<const double> alpha_star,
                      const std::vector<SamplerSpec>& specs, ModelParams w_prime,
                      const TrainingConfig& cfg) {
  if (alpha_star.size() != specs.size())
    throw DomainError("retrain: alpha has " + std::to_string(alpha_star.size()) + " entries for " +
                      std::to_string(specs.size()) + " samplers");
  double total = 0.0;
  for (double a : alpha_star) {
    if (!(a >= 0.0)) throw DomainError("retrain: alpha must be nonnegative");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("retrain: alpha must sum to 1");
  check_shapes(split, w_prime);
  if (w_prime.dim() != cfg.dim)
    throw DomainError("retrain: warm-start embedding dim does not match config");

  RetrainResult out;
  out.selected = select_sampler(alpha_star);
  out.train = train_fixed(split, specs[out.selected], std::move(w_prime), cfg);
  return out;
}

GridResult grid_search(const DataSplit& split, const std::vector<SamplerSpec>& specs,
                       const TrainingConfig& cfg, int jobs) {
  if (specs.empty()) throw DomainError("grid_search: no samplers given");
  validate(cfg);
  const ModelParams init = initial_params(split, cfg);
  GridResult grid;
  grid.cells.resize(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) grid.cells[c].spec = specs[c];

  if (jobs <= 1) {
    for (auto& cell : grid.cells) cell.result = train_fixed(split, cell.spec, init, cfg);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
      for (std::size_t c; (c = next.fetch_add(1)) < grid.cells.size();) {
        try {
          grid.cells[c].result = train_fixed(split, grid.cells[c].spec, init, cfg);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    };
    std::vector<std::jthread> pool;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(specs.size())); ++t) pool.emplace_back(worker);
    pool.clear();
    if (error) std::rethrow_exception(error);
  }
  for (const auto& cell : grid.cells) grid.total_elapsed_ms += cell.result.elapsed_ms;
  return grid;
}

std::vector<TuneCell> tune(const DataSplit& split, const SamplerSpec& spec, const TrainingConfig& cfg,
                           const std::vector<double>& lr_grid, const std::vector<double>& l2_grid) {
  std::vector<TuneCell> cells;
  for (double lr : lr_grid) {
    for (double l2 : l2_grid) {
      TrainingConfig c = cfg;
      c.lr_w = lr;
      c.l2 = l2;
      cells.push_back({lr, l2, train_fixed(split, spec, initial_params(split, c), c)});
    }
  }
  return cells;
}

void write_results_csv(const GridResult& grid, int k, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  out.precision(10);
  out << "sampler,recall@" << k << ",ndcg@" << k << ",precision@" << k << ",hr@" << k << ",elapsed_ms\n";
  for (const auto& cell : grid.cells) {
    const auto& t = cell.result.test;
    out << '"' << cell.spec.name << "\"," << t.recall << ',' << t.ndcg << ',' << t.precision << ','
        << t.hit_ratio << ',' << cell.result.elapsed_ms << '\n';
  }
  out << "total,,,,," << grid.total_elapsed_ms << '\n';
}

}  // namespace autosample
