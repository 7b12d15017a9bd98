#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autosample/data.hpp"
#include "autosample/eval.hpp"
#include "autosample/model.hpp"
#include "autosample/optim.hpp"
#include "autosample/samplers.hpp"

namespace autosample {

struct TrainingConfig {
  int epochs = 30;
  int batch_size = 1024;
  double lr_w = 1e-3;
  double lr_theta = 1e-2;
  double l2 = 0.0;
  int k = 1;  // negatives per positive (per sampler during search)
  int dim = 64;
  int eval_every = 1;
  std::string metric_for_best = "recall";
  int topk = 20;
  int patience = 10;  // evaluations without improvement before stopping; 0 disables
  ModelKind model = ModelKind::MF;
  int layers = 3;
  bool dense_adam = false;
  // Reuse one LightGCN propagation per epoch instead of per batch. This is
  // an approximation: embeddings seen by samplers and gradients go stale.
  bool stale_propagation = false;
  std::uint64_t seed = 42;
};

// Throws ConfigError naming the offending field.
void validate(const TrainingConfig& cfg);

// Validation excludes train items; test excludes train and validation items.
MetricsReport evaluate_valid(const PropagatedEmbeddings& emb, const DataSplit& split, int k);
MetricsReport evaluate_test(const PropagatedEmbeddings& emb, const DataSplit& split, int k);

/// Keeps the best-validation snapshot and the patience counter.
class BestTracker {
 public:
  BestTracker(std::string metric, int patience) : metric_(std::move(metric)), patience_(patience) {}

  // Returns true when `valid` improves on the best seen so far.
  bool offer(int epoch, const MetricsReport& valid, const ModelParams& params);
  bool should_stop() const noexcept { return patience_ > 0 && stale_ >= patience_; }

  bool has_best() const noexcept { return best_params_.has_value(); }
  const ModelParams& best_params() const { return *best_params_; }
  const MetricsReport& best_valid() const noexcept { return best_valid_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_value() const noexcept { return best_value_; }

 private:
  std::string metric_;
  int patience_;
  int stale_ = 0;
  int best_epoch_ = -1;
  double best_value_ = -1.0;
  MetricsReport best_valid_;
  std::optional<ModelParams> best_params_;
};

struct TrainResult {
  std::string sampler;
  ModelParams params;  // best-validation snapshot
  MetricsReport valid;  // at the snapshot
  MetricsReport test;   // at the snapshot
  int epochs_run = 0;
  int best_epoch = -1;
  std::vector<double> valid_curve;  // best-so-far metric after each evaluation
  double elapsed_ms = 0.0;
};

// Model tables initialised from the config's "init" stream.
ModelParams initial_params(const DataSplit& split, const TrainingConfig& cfg);

// BPR training with a single sampler, starting from `params`.
TrainResult train_fixed(const DataSplit& split, const SamplerSpec& spec, ModelParams params,
                        const TrainingConfig& cfg);

// First index of the maximum; logs a warning on ties.
std::size_t select_sampler(std::span<const double> alpha, bool warn_on_tie = true);

struct RetrainResult {
  std::size_t selected = 0;
  TrainResult train;
};

// Freezes the sampler at argmax alpha_star and trains from `w_prime`.
RetrainResult retrain(const DataSplit& split, std::span<const double> alpha_star,
                      const std::vector<SamplerSpec>& specs, ModelParams w_prime,
                      const TrainingConfig& cfg);

struct GridCell {
  SamplerSpec spec;
  TrainResult result;
};

struct GridResult {
  std::vector<GridCell> cells;
  double total_elapsed_ms = 0.0;  // sum of per-cell wall-clock
};

// One train_fixed per spec from identical initialisation. `jobs` > 1 runs
// cells on worker threads; results do not depend on it.
GridResult grid_search(const DataSplit& split, const std::vector<SamplerSpec>& specs,
                       const TrainingConfig& cfg, int jobs = 1);

struct TuneCell {
  double lr_w = 0.0;
  double l2 = 0.0;
  TrainResult result;
};

inline const std::vector<double> kLrGrid{3e-3, 1e-3, 3e-4, 1e-4};
inline const std::vector<double> kL2Grid{1e-2, 1e-3, 1e-4, 0.0};
inline const std::vector<double> kLrThetaGrid{3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};

// Sequential sweep over lr_w x l2 for one sampler.
std::vector<TuneCell> tune(const DataSplit& split, const SamplerSpec& spec, const TrainingConfig& cfg,
                           const std::vector<double>& lr_grid = kLrGrid,
                           const std::vector<double>& l2_grid = kL2Grid);

// `sampler,recall@K,ndcg@K,precision@K,hr@K,elapsed_ms` rows plus a totals row.
void write_results_csv(const GridResult& grid, int k, const std::filesystem::path& path);

}  // namespace autosample
