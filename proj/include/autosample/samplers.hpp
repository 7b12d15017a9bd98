#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "autosample/data.hpp"
#include "autosample/model.hpp"
#include "autosample/rng.hpp"

namespace autosample {

struct RnsSpec {};
struct PnsSpec {
  double beta = 0.75;
};
struct DnsSpec {
  int candidates = 10;
  // When set, softened draw p(r) ~ exp(-r / lambda) over the local rank
  // instead of the hard argmax.
  std::optional<double> lambda;
};
struct AobprSpec {
  // Unset means N / 100 for the catalogue the sampler is built on.
  std::optional<double> lambda;
};

struct SamplerSpec {
  std::variant<RnsSpec, PnsSpec, DnsSpec, AobprSpec> kind;
  std::string name;
};

// Parses `rns`, `pns:beta=0.75`, `dns:c=10`, `dns:c=10,lambda=2`,
// `aobpr:lambda=64`. Throws ConfigError.
SamplerSpec parse_sampler_spec(std::string_view text);
std::vector<SamplerSpec> parse_sampler_list(std::string_view text);  // ';'-separated
std::string to_string(const SamplerSpec& spec);
void validate(const SamplerSpec& spec);

/// Walker alias table over a nonnegative weight vector. O(1) per draw.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const Eigen::VectorXd& weights);

  Index sample(Rng& rng) const;
  Index size() const noexcept { return static_cast<Index>(prob_.size()); }
  const Eigen::VectorXd& distribution() const noexcept { return dist_; }

 private:
  std::vector<double> prob_;
  std::vector<Index> alias_;
  Eigen::VectorXd dist_;
};

// Uniform draw from I - I_u; `train` provides I_u.
Index draw_uniform_negative(const InteractionDataset& train, Index u, Rng& rng);

std::vector<Index> sample_rns(const InteractionDataset& train, Index u, int k, Rng& rng);
std::vector<Index> sample_pns(const InteractionDataset& train, Index u, int k, double beta, Rng& rng);
// `trace`, when given, receives each draw's candidate set.
std::vector<Index> sample_dns(const InteractionDataset& train, const PropagatedEmbeddings& emb,
                              Index u, int k, int candidates, Rng& rng,
                              std::vector<std::vector<Index>>* trace = nullptr);
std::vector<Index> sample_aobpr(const InteractionDataset& train, const PropagatedEmbeddings& emb,
                                Index u, int k, double lambda, Rng& rng);

// Candidates in I - I_u ordered by descending score, ties by lower id.
std::vector<Index> rank_candidates(const InteractionDataset& train, const PropagatedEmbeddings& emb,
                                   Index u);

/// Common sampler interface. Implementations hold only immutable state built
/// from the training split, so one instance may be shared across threads.
class NegativeSampler {
 public:
  virtual ~NegativeSampler() = default;

  // Fills `out` with i.i.d. negatives for `u`.
  virtual void draw(const InteractionDataset& train, const PropagatedEmbeddings& emb, Index u,
                    std::span<Index> out, Rng& rng) const = 0;
  // Whether draws read the model scores.
  virtual bool uses_scores() const noexcept = 0;

  std::vector<Index> draw(const InteractionDataset& train, const PropagatedEmbeddings& emb, Index u,
                          int k, Rng& rng) const {
    std::vector<Index> out(static_cast<std::size_t>(k));
    draw(train, emb, u, out, rng);
    return out;
  }
};

std::unique_ptr<NegativeSampler> make_sampler(const SamplerSpec& spec, const InteractionDataset& train);

}  // namespace autosample
