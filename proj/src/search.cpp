#include "autosample/search.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "autosample/errors.hpp"

namespace autosample {

Eigen::VectorXd gumbel_noise(Eigen::Index count, Rng& rng) {
  if (count < 1) throw DomainError("gumbel_noise: need at least one component");
  Eigen::VectorXd g(count);
  for (Eigen::Index t = 0; t < count; ++t) g[t] = gumbel_from_uniform(uniform01(rng));
  return g;
}

double anneal_tau(const TauSchedule& s, int epoch) {
  if (!(s.decay > 0.0 && s.decay <= 1.0)) throw ConfigError("tau decay must lie in (0, 1]");
  if (!(s.tau_min > 0.0 && s.tau_min <= s.tau0)) throw ConfigError("need 0 < tau_min <= tau0");
  return std::max(s.tau_min, s.tau0 * std::pow(s.decay, epoch));
}

SearchState::SearchState(Eigen::Index num_samplers, double tau0)
    : theta(Eigen::VectorXd::Zero(num_samplers)),
      gumbel(Eigen::VectorXd::Zero(num_samplers)),
      tau(tau0),
      optimizer(num_samplers, 1, {}, true) {}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

SearchOutcome run_search(const DataSplit& split, const std::vector<SamplerSpec>& specs,
                         ModelParams params, const TrainingConfig& cfg, const SearchConfig& search) {
  validate(cfg);
  if (specs.size() < 2) throw DomainError("run_search needs at least two candidate samplers");
  if (params.num_users() != split.train.num_users() || params.num_items() != split.train.num_items())
    throw DomainError("run_search: model tables do not match the dataset");
  anneal_tau(search.tau, 0);
  const auto start = Clock::now();
  params.l2 = cfg.l2;

  const Eigen::Index T = static_cast<Eigen::Index>(specs.size());
  const Graph graph(split.train);
  std::vector<std::unique_ptr<NegativeSampler>> samplers;
  std::vector<Rng> sampler_rngs;
  for (std::size_t t = 0; t < specs.size(); ++t) {
    samplers.push_back(make_sampler(specs[t], split.train));
    sampler_rngs.push_back(make_rng(cfg.seed, "search-sampler/" + std::to_string(t) + ":" + specs[t].name));
  }
  Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
  Rng gumbel_rng = make_rng(cfg.seed, "gumbel");

  SearchState state(T, search.tau.tau0);
  AdamOptimizer user_opt(params.num_users(), params.dim(), {}, cfg.dense_adam);
  AdamOptimizer item_opt(params.num_items(), params.dim(), {}, cfg.dense_adam);
  BestTracker best(cfg.metric_for_best, cfg.patience);
  SearchOutcome outcome;

  std::vector<Interaction> order = split.train.positives();
  std::vector<WeightedTriple> triples;
  std::vector<double> per_triple;
  std::vector<Index> negs(cfg.k);
  Eigen::VectorXd losses(T), weights(T), epoch_loss_sum(T);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.tau = anneal_tau(search.tau, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    if (search.noise_per_epoch) state.gumbel = gumbel_noise(T, gumbel_rng);
    epoch_loss_sum.setZero();
    int batches = 0;
    PropagatedEmbeddings emb;
    if (cfg.stale_propagation) emb = output_embeddings(params, graph);

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batches) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const std::size_t slot = (e - b) * cfg.k;  // triples per sampler
      if (!search.noise_per_epoch) state.gumbel = gumbel_noise(T, gumbel_rng);
      const Eigen::VectorXd p = selection_probs(state.theta, state.gumbel, state.tau);
      if (search.hard_straight_through) {
        Eigen::Index arg = 0;
        p.maxCoeff(&arg);
        weights = Eigen::VectorXd::Unit(T, arg);
      } else {
        weights = p;
      }
      if (!cfg.stale_propagation) emb = output_embeddings(params, graph);

      // Triple weights T * w_t turn the mean over all T * slot triples into
      // sum_t w_t * (mean loss of sampler t).
      triples.clear();
      for (Eigen::Index t = 0; t < T; ++t) {
        const double w = static_cast<double>(T) * weights[t];
        for (std::size_t q = b; q < e; ++q) {
          const auto [u, i] = order[q];
          samplers[t]->draw(split.train, emb, u, negs, sampler_rngs[t]);
          for (Index j : negs) triples.push_back({u, i, j, w});
        }
      }
      per_triple.assign(triples.size(), 0.0);
      const auto grad = bpr_grad(params, graph, emb, triples, per_triple);
      for (Eigen::Index t = 0; t < T; ++t) {
        double s = 0.0;
        for (std::size_t q = 0; q < slot; ++q) s += per_triple[t * slot + q];
        losses[t] = s / static_cast<double>(slot);
      }
      if (!std::isfinite(grad.loss) || !losses.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite loss during search at epoch " << epoch << ", batch " << batches
            << "; per-sampler losses [" << losses.transpose() << "]";
        throw NumericError(msg.str());
      }
      epoch_loss_sum += losses;

      user_opt.step(params.user_emb, grad.user_grad, grad.user_rows, cfg.lr_w);
      item_opt.step(params.item_emb, grad.item_grad, grad.item_rows, cfg.lr_w);
      const Eigen::VectorXd g_theta = theta_grad(state.theta, state.gumbel, state.tau, losses);
      state.optimizer.step(state.theta, g_theta, cfg.lr_theta);
    }

    SearchEpoch record;
    record.epoch = epoch;
    record.tau = state.tau;
    record.alpha = to_std(state.alpha());
    record.losses = to_std(epoch_loss_sum / std::max(1, batches));
    bool stop = false;
    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
      record.valid = evaluate_valid(output_embeddings(params, graph), split, cfg.topk);
      if (best.offer(epoch, *record.valid, params)) outcome.alpha_at_best = record.alpha;
      stop = best.should_stop();
    }
    record.elapsed_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    outcome.history.push_back(std::move(record));
    if (stop) break;
  }

  outcome.alpha_star = outcome.history.back().alpha;
  outcome.best_params = best.best_params();
  outcome.best_valid = best.best_valid();
  outcome.best_epoch = best.best_epoch();
  outcome.elapsed_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return outcome;
}

nlohmann::json to_json(const SearchEpoch& r, bool with_timing) {
  nlohmann::json j = {{"epoch", r.epoch}, {"tau", r.tau}, {"alpha", r.alpha}, {"losses", r.losses}};
  j["valid_metrics"] = r.valid ? to_json(*r.valid) : nlohmann::json::object();
  if (with_timing) j["elapsed_ms"] = r.elapsed_ms;
  return j;
}

void write_history(const SearchOutcome& outcome, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  for (const auto& r : outcome.history) out << to_json(r).dump() << '\n';
}

}  // namespace autosample
