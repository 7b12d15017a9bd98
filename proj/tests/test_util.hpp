#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <vector>

#include "autosample/data.hpp"

namespace autosample::testing {

// Total-variation distance between an empirical histogram and a reference.
inline double tv_distance(const std::map<Index, double>& counts, const std::map<Index, double>& expected) {
  double total = 0.0;
  for (const auto& [k, c] : counts) total += c;
  std::map<Index, double> keys;
  for (const auto& [k, v] : counts) keys[k] = 0;
  for (const auto& [k, v] : expected) keys[k] = 0;
  double tv = 0.0;
  for (const auto& [k, unused] : keys) {
    const double p = counts.count(k) ? counts.at(k) / total : 0.0;
    const double q = expected.count(k) ? expected.at(k) : 0.0;
    tv += std::abs(p - q);
  }
  return 0.5 * tv;
}

// Dataset whose item popularity equals `pops`, with user 0 left empty.
// Each item j gets pops[j] distinct users from 1..max(pops).
inline InteractionDataset dataset_with_popularity(const std::vector<int>& pops, int extra_users = 0) {
  int max_pop = 0;
  for (int p : pops) max_pop = std::max(max_pop, p);
  std::vector<Interaction> pairs;
  for (Index j = 0; j < static_cast<Index>(pops.size()); ++j)
    for (int c = 0; c < pops[j]; ++c) pairs.emplace_back(1 + c, j);
  return InteractionDataset::from_pairs(1 + max_pop + extra_users, static_cast<Index>(pops.size()), pairs);
}

}  // namespace autosample::testing
