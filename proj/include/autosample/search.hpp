#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "autosample/data.hpp"
#include "autosample/model.hpp"
#include "autosample/optim.hpp"
#include "autosample/rng.hpp"
#include "autosample/samplers.hpp"
#include "autosample/trainer.hpp"

namespace autosample {

// Standard Gumbel via -log(-log(u)), u clamped into (eps, 1 - eps).
inline constexpr double kGumbelEps = 1e-12;

template <typename Scalar>
Scalar gumbel_from_uniform(Scalar u) {
  using std::clamp;
  using std::log;
  const Scalar c = clamp(u, Scalar(kGumbelEps), Scalar(1) - Scalar(kGumbelEps));
  return -log(-log(c));
}

Eigen::VectorXd gumbel_noise(Eigen::Index count, Rng& rng);

// Max-shifted softmax.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& x) {
  using Vec = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;
  Vec e = (x.array() - x.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Gumbel-softmax selection weights
///   p_t = exp((theta_t + g_t) / tau) / sum_s exp((theta_s + g_s) / tau),
/// where theta plays the role of log alpha.
template <typename D1, typename D2>
Eigen::Matrix<typename D1::Scalar, Eigen::Dynamic, 1> selection_probs(const Eigen::MatrixBase<D1>& theta,
                                                                     const Eigen::MatrixBase<D2>& gumbel,
                                                                     typename D1::Scalar tau) {
  return softmax(((theta + gumbel) / tau).eval());
}

template <typename D1, typename D2>
typename D1::Scalar combined_loss(const Eigen::MatrixBase<D1>& p, const Eigen::MatrixBase<D2>& losses) {
  return p.dot(losses);
}

/// d(sum_t p_t L_t)/d theta_s = p_s (L_s - sum_t p_t L_t) / tau, with the
/// per-sampler losses held constant.
template <typename D1, typename D2, typename D3>
Eigen::Matrix<typename D1::Scalar, Eigen::Dynamic, 1> theta_grad(const Eigen::MatrixBase<D1>& theta,
                                                                const Eigen::MatrixBase<D2>& gumbel,
                                                                typename D1::Scalar tau,
                                                                const Eigen::MatrixBase<D3>& losses) {
  const auto p = selection_probs(theta, gumbel, tau);
  const auto mean = p.dot(losses);
  return (p.array() * (losses.array() - mean) / tau).matrix();
}

struct TauSchedule {
  double tau0 = 1.0;
  double tau_min = 0.1;
  double decay = 0.95;  // per epoch, in (0, 1]
};

// max(tau_min, tau0 * decay^epoch).
double anneal_tau(const TauSchedule& schedule, int epoch);

struct SearchConfig {
  TauSchedule tau;
  // Forward pass uses one-hot(argmax p) while theta still receives the soft
  // gradient (straight-through).
  bool hard_straight_through = false;
  // Draw one Gumbel vector per epoch instead of per mini-batch.
  bool noise_per_epoch = false;
};

struct SearchState {
  Eigen::VectorXd theta;   // logits, alpha = softmax(theta)
  Eigen::VectorXd gumbel;  // noise of the current batch
  double tau = 1.0;
  AdamOptimizer optimizer;

  explicit SearchState(Eigen::Index num_samplers, double tau0 = 1.0);
  Eigen::VectorXd alpha() const { return softmax(theta); }
};

struct SearchEpoch {
  int epoch = 0;
  double tau = 0.0;
  std::vector<double> alpha;
  std::vector<double> losses;  // mean per-sampler BPR over the epoch
  std::optional<MetricsReport> valid;
  double elapsed_ms = 0.0;  // since search start
};

struct SearchOutcome {
  std::vector<double> alpha_star;     // softmax(theta) after the last epoch
  std::vector<double> alpha_at_best;  // at the best-validation epoch
  ModelParams best_params;            // W' snapshot
  MetricsReport best_valid;
  int best_epoch = -1;
  std::vector<SearchEpoch> history;
  double elapsed_ms = 0.0;
};

/// Joint optimisation of the model tables and the sampler logits over the
/// same mini-batches. Every sampler draws `cfg.k` negatives per positive on
/// every batch; the model descends the p-weighted BPR gradient and theta
/// descends theta_grad, both with Adam.
SearchOutcome run_search(const DataSplit& split, const std::vector<SamplerSpec>& specs,
                         ModelParams params, const TrainingConfig& cfg, const SearchConfig& search = {});

nlohmann::json to_json(const SearchEpoch& record, bool with_timing = true);
void write_history(const SearchOutcome& outcome, const std::filesystem::path& path);

}  // namespace autosample
