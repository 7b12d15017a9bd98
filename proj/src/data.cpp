#include "autosample/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "autosample/errors.hpp"

namespace autosample {

namespace fs = std::filesystem;
using nlohmann::json;

InteractionDataset InteractionDataset::from_pairs(Index num_users, Index num_items,
                                                  std::vector<Interaction> pairs) {
  if (num_users < 0 || num_items < 0) throw DomainError("negative dataset dimensions");
  for (const auto& [u, i] : pairs) {
    if (u < 0 || u >= num_users || i < 0 || i >= num_items)
      throw DomainError("interaction (" + std::to_string(u) + ", " + std::to_string(i) +
                        ") out of range");
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  InteractionDataset ds;
  ds.num_users_ = num_users;
  ds.num_items_ = num_items;
  ds.user_items_.assign(num_users, {});
  ds.item_popularity_.assign(num_items, 0);
  for (const auto& [u, i] : pairs) {
    ds.user_items_[u].push_back(i);  // already sorted by (u, i)
    ++ds.item_popularity_[i];
  }
  ds.positives_ = std::move(pairs);
  return ds;
}

bool InteractionDataset::contains(Index u, Index i) const {
  const auto& items = user_items_.at(u);
  return std::binary_search(items.begin(), items.end(), i);
}

void InteractionDataset::set_id_maps(std::vector<std::int64_t> user_ids,
                                     std::vector<std::int64_t> item_ids) {
  if (!user_ids.empty() && user_ids.size() != static_cast<std::size_t>(num_users_))
    throw DomainError("user id map size mismatch");
  if (!item_ids.empty() && item_ids.size() != static_cast<std::size_t>(num_items_))
    throw DomainError("item id map size mismatch");
  user_ids_ = std::move(user_ids);
  item_ids_ = std::move(item_ids);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

bool parse_int(std::string_view tok, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size();
}

// Raw (original-id) pairs from a TSV file.
std::vector<std::pair<std::int64_t, std::int64_t>> read_raw_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open interaction file " + path.string());
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    std::vector<std::string_view> toks;
    std::size_t pos = 0;
    while (pos < s.size()) {
      auto b = s.find_first_not_of(" \t", pos);
      if (b == std::string_view::npos) break;
      auto e = s.find_first_of(" \t", b);
      if (e == std::string_view::npos) e = s.size();
      toks.push_back(s.substr(b, e - b));
      pos = e;
    }
    std::int64_t u = 0, i = 0;
    if (toks.size() != 2 || !parse_int(toks[0], u) || !parse_int(toks[1], i))
      throw ParseError("expected two integer tokens in " + path.string(), lineno);
    out.emplace_back(u, i);
  }
  return out;
}

}  // namespace

InteractionDataset load_interactions(const fs::path& path, int min_count) {
  auto raw = read_raw_pairs(path);
  std::sort(raw.begin(), raw.end());
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());

  // Fixpoint filter: dropping a user can push an item under the threshold.
  for (bool changed = true; changed && min_count > 1;) {
    std::unordered_map<std::int64_t, int> udeg, ideg;
    for (const auto& [u, i] : raw) {
      ++udeg[u];
      ++ideg[i];
    }
    const auto before = raw.size();
    std::erase_if(raw, [&](const auto& p) {
      return udeg[p.first] < min_count || ideg[p.second] < min_count;
    });
    changed = raw.size() != before;
  }
  if (raw.empty()) throw DomainError("dataset is empty after filtering " + path.string());

  std::vector<std::int64_t> uids, iids;
  for (const auto& [u, i] : raw) {
    uids.push_back(u);
    iids.push_back(i);
  }
  for (auto* v : {&uids, &iids}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  auto dense = [](const std::vector<std::int64_t>& ids, std::int64_t id) {
    return static_cast<Index>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  std::vector<Interaction> pairs;
  pairs.reserve(raw.size());
  for (const auto& [u, i] : raw) pairs.emplace_back(dense(uids, u), dense(iids, i));

  auto ds = InteractionDataset::from_pairs(static_cast<Index>(uids.size()),
                                           static_cast<Index>(iids.size()), std::move(pairs));
  ds.set_id_maps(std::move(uids), std::move(iids));
  return ds;
}

void write_interactions(const InteractionDataset& ds, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  for (const auto& [u, i] : ds.positives()) out << u << '\t' << i << '\n';
}

DataSplit split_dataset(const InteractionDataset& ds, std::array<int, 3> ratios, std::uint64_t seed) {
  if (ds.size() < 5) throw DomainError("split requires at least 5 interactions");
  if (std::any_of(ratios.begin(), ratios.end(), [](int r) { return r < 0; }) ||
      ratios[0] + ratios[1] + ratios[2] <= 0)
    throw DomainError("invalid split ratios");
  const std::size_t n = ds.size();
  const std::size_t total = ratios[0] + ratios[1] + ratios[2];
  const std::size_t n_valid = n * ratios[1] / total;
  const std::size_t n_test = n * ratios[2] / total;

  std::vector<Interaction> pairs = ds.positives();
  Rng rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);

  auto part = [&](std::size_t b, std::size_t e) {
    auto sub = InteractionDataset::from_pairs(
        ds.num_users(), ds.num_items(),
        std::vector<Interaction>(pairs.begin() + b, pairs.begin() + e));
    sub.set_id_maps(ds.user_ids(), ds.item_ids());
    return sub;
  };
  DataSplit split;
  split.valid = part(0, n_valid);
  split.test = part(n_valid, n_valid + n_test);
  split.train = part(n_valid + n_test, n);
  split.seed = seed;
  split.ratios = ratios;
  return split;
}

void write_split(const DataSplit& split, const fs::path& dir) {
  fs::create_directories(dir);
  write_interactions(split.train, dir / "train.tsv");
  write_interactions(split.valid, dir / "valid.tsv");
  write_interactions(split.test, dir / "test.tsv");
  json meta = {
      {"seed", split.seed},
      {"ratios", split.ratios},
      {"num_users", split.train.num_users()},
      {"num_items", split.train.num_items()},
      {"user_ids", split.train.user_ids()},
      {"item_ids", split.train.item_ids()},
  };
  std::ofstream(dir / "split.json") << meta.dump(2) << '\n';
}

DataSplit read_split(const fs::path& dir) {
  std::ifstream in(dir / "split.json");
  if (!in) throw DomainError("missing split.json in " + dir.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError(std::string("bad split.json: ") + e.what());
  }
  const Index m = meta.at("num_users").get<Index>();
  const Index n = meta.at("num_items").get<Index>();
  auto uids = meta.value("user_ids", std::vector<std::int64_t>{});
  auto iids = meta.value("item_ids", std::vector<std::int64_t>{});
  auto read = [&](const char* name) {
    std::vector<Interaction> pairs;
    for (const auto& [u, i] : read_raw_pairs(dir / name))
      pairs.emplace_back(static_cast<Index>(u), static_cast<Index>(i));
    auto ds = InteractionDataset::from_pairs(m, n, std::move(pairs));
    ds.set_id_maps(uids, iids);
    return ds;
  };
  DataSplit split;
  split.train = read("train.tsv");
  split.valid = read("valid.tsv");
  split.test = read("test.tsv");
  split.seed = meta.at("seed").get<std::uint64_t>();
  split.ratios = meta.at("ratios").get<std::array<int, 3>>();
  return split;
}

InteractionDataset generate_synthetic(Index num_users, Index num_items, Index num_blocks,
                                      double density, double noise, std::uint64_t seed) {
  if (num_users < 1 || num_items < 1 || num_blocks < 1)
    throw DomainError("synthetic dimensions must be positive");
  if (num_users % num_blocks != 0 || num_items % num_blocks != 0)
    throw DomainError("num_blocks must divide both user and item counts");
  if (!(density > 0.0 && density <= 1.0)) throw DomainError("density must lie in (0, 1]");
  if (!(noise >= 0.0 && noise < 1.0)) throw DomainError("noise must lie in [0, 1)");

  const Index ub = num_users / num_blocks;
  const Index ib = num_items / num_blocks;
  Rng rng(seed);
  std::vector<Interaction> pairs;
  for (Index u = 0; u < num_users; ++u) {
    for (Index i = 0; i < num_items; ++i) {
      const double rate = (u / ub == i / ib) ? density : density * noise;
      if (uniform01(rng) < rate) pairs.emplace_back(u, i);
    }
  }
  return InteractionDataset::from_pairs(num_users, num_items, std::move(pairs));
}

Eigen::VectorXd popularity_distribution(std::span<const std::int64_t> popularity, double beta) {
  if (!std::isfinite(beta)) throw DomainError("popularity exponent must be finite");
  Eigen::VectorXd p(static_cast<Eigen::Index>(popularity.size()));
  for (std::size_t j = 0; j < popularity.size(); ++j) {
    if (popularity[j] < 0) throw DomainError("negative popularity");
    p[j] = popularity[j] > 0 ? std::pow(static_cast<double>(popularity[j]), beta) : 0.0;
  }
  const double total = p.sum();
  if (!(total > 0.0)) throw DomainError("popularity_distribution: all items have zero popularity");
  return p / total;
}

}  // namespace autosample
