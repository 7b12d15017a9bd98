#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "autosample/rng.hpp"

namespace autosample {

using Index = std::int32_t;
using Interaction = std::pair<Index, Index>;  // (user, item)

/// Immutable implicit-feedback dataset.
///
/// Holds the deduplicated positive pairs in (user, item) order, the sorted
/// per-user item sets and per-item interaction counts. The optional id maps
/// record the original (file) id of every dense index.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  // Builds from raw pairs; duplicates are dropped. Throws DomainError on
  // out-of-range ids.
  static InteractionDataset from_pairs(Index num_users, Index num_items,
                                       std::vector<Interaction> pairs);

  Index num_users() const noexcept { return num_users_; }
  Index num_items() const noexcept { return num_items_; }
  std::size_t size() const noexcept { return positives_.size(); }
  bool empty() const noexcept { return positives_.empty(); }

  const std::vector<Interaction>& positives() const noexcept { return positives_; }
  std::span<const Index> user_items(Index u) const { return user_items_.at(u); }
  const std::vector<std::int64_t>& item_popularity() const noexcept { return item_popularity_; }
  bool contains(Index u, Index i) const;

  const std::vector<std::int64_t>& user_ids() const noexcept { return user_ids_; }
  const std::vector<std::int64_t>& item_ids() const noexcept { return item_ids_; }
  void set_id_maps(std::vector<std::int64_t> user_ids, std::vector<std::int64_t> item_ids);

  friend bool operator==(const InteractionDataset& a, const InteractionDataset& b) {
    return a.num_users_ == b.num_users_ && a.num_items_ == b.num_items_ &&
           a.positives_ == b.positives_;
  }

 private:
  Index num_users_ = 0;
  Index num_items_ = 0;
  std::vector<Interaction> positives_;
  std::vector<std::vector<Index>> user_items_;
  std::vector<std::int64_t> item_popularity_;
  std::vector<std::int64_t> user_ids_;
  std::vector<std::int64_t> item_ids_;
};

struct DataSplit {
  InteractionDataset train;
  InteractionDataset valid;
  InteractionDataset test;
  std::uint64_t seed = 0;
  std::array<int, 3> ratios{3, 1, 1};
};

// Reads `user<TAB>item` lines ('#' comments and blank lines skipped), drops
// duplicates, then removes users/items with fewer than `min_count`
// interactions repeatedly until nothing changes. Ids are re-indexed densely
// in ascending order of their original value.
InteractionDataset load_interactions(const std::filesystem::path& path, int min_count = 1);

// Writes dense ids, one pair per line.
void write_interactions(const InteractionDataset& ds, const std::filesystem::path& path);

// Random partition of the pairs by `ratios`. Valid and test receive
// floor(n * r / sum), train gets the remainder.
DataSplit split_dataset(const InteractionDataset& ds, std::array<int, 3> ratios, std::uint64_t seed);

// Writes train.tsv, valid.tsv, test.tsv and split.json into `dir`.
void write_split(const DataSplit& split, const std::filesystem::path& dir);
DataSplit read_split(const std::filesystem::path& dir);

// Block-diagonal planted structure: users and items are cut into
// `num_blocks` equal groups; in-block pairs appear with probability
// `density`, out-of-block pairs with `density * noise`.
InteractionDataset generate_synthetic(Index num_users, Index num_items, Index num_blocks,
                                      double density, double noise, std::uint64_t seed);

// p_j = pop_j^beta / sum_s pop_s^beta, with zero-popularity items at 0.
Eigen::VectorXd popularity_distribution(std::span<const std::int64_t> popularity, double beta);

inline Eigen::VectorXd popularity_distribution(const InteractionDataset& ds, double beta) {
  return popularity_distribution(ds.item_popularity(), beta);
}

}  // namespace autosample
