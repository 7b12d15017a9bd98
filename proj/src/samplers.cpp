#include "autosample/samplers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>

#include "autosample/errors.hpp"

namespace autosample {

// ---------------------------------------------------------------------------
// Spec parsing

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char tmp[32];
    std::snprintf(tmp, sizeof tmp, "%.*g", prec, v);
    if (std::strtod(tmp, nullptr) == v) return tmp;
  }
  return buf;
}

double parse_double(std::string_view spec, std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out))
    throw ConfigError("sampler '" + std::string(spec) + "': bad value for " + std::string(key));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

SamplerSpec parse_sampler_spec(std::string_view text) {
  text = trim(text);
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  std::map<std::string, std::string_view, std::less<>> args;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("sampler '" + std::string(text) + "': expected key=value, got '" +
                          std::string(item) + "'");
      args.emplace(std::string(trim(item.substr(0, eq))), trim(item.substr(eq + 1)));
    }
  }
  auto take = [&](std::string_view key) -> std::optional<double> {
    auto it = args.find(key);
    if (it == args.end()) return std::nullopt;
    const double v = parse_double(text, key, it->second);
    args.erase(it);
    return v;
  };

  SamplerSpec spec;
  if (kind == "rns") {
    spec.kind = RnsSpec{};
  } else if (kind == "pns") {
    spec.kind = PnsSpec{take("beta").value_or(0.75)};
  } else if (kind == "dns") {
    DnsSpec d;
    if (auto c = take("c")) {
      if (*c != std::floor(*c)) throw ConfigError("dns: c must be an integer");
      d.candidates = static_cast<int>(*c);
    }
    d.lambda = take("lambda");
    spec.kind = d;
  } else if (kind == "aobpr") {
    spec.kind = AobprSpec{take("lambda")};
  } else {
    throw ConfigError("unknown sampler kind '" + std::string(kind) +
                      "' (expected rns, pns, dns or aobpr)");
  }
  if (!args.empty())
    throw ConfigError("sampler '" + std::string(text) + "': unknown parameter '" +
                      args.begin()->first + "'");
  validate(spec);
  spec.name = to_string(spec);
  return spec;
}

std::vector<SamplerSpec> parse_sampler_list(std::string_view text) {
  std::vector<SamplerSpec> out;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const auto item = trim(text.substr(0, semi));
    if (!item.empty()) out.push_back(parse_sampler_spec(item));
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
  }
  return out;
}

std::string to_string(const SamplerSpec& spec) {
  struct {
    std::string operator()(const RnsSpec&) const { return "rns"; }
    std::string operator()(const PnsSpec& s) const { return "pns:beta=" + format_number(s.beta); }
    std::string operator()(const DnsSpec& s) const {
      std::string out = "dns:c=" + std::to_string(s.candidates);
      if (s.lambda) out += ",lambda=" + format_number(*s.lambda);
      return out;
    }
    std::string operator()(const AobprSpec& s) const {
      return s.lambda ? "aobpr:lambda=" + format_number(*s.lambda) : "aobpr";
    }
  } visitor;
  return std::visit(visitor, spec.kind);
}

void validate(const SamplerSpec& spec) {
  if (const auto* p = std::get_if<PnsSpec>(&spec.kind); p && !std::isfinite(p->beta))
    throw ConfigError("pns: beta must be finite");
  if (const auto* d = std::get_if<DnsSpec>(&spec.kind)) {
    if (d->candidates < 1) throw ConfigError("dns: c must be >= 1");
    if (d->lambda && !(*d->lambda > 0.0)) throw ConfigError("dns: lambda must be > 0");
  }
  if (const auto* a = std::get_if<AobprSpec>(&spec.kind); a && a->lambda && !(*a->lambda > 0.0))
    throw ConfigError("aobpr: lambda must be > 0");
}

// ---------------------------------------------------------------------------
// Alias table

AliasTable::AliasTable(const Eigen::VectorXd& weights) {
  const Index n = static_cast<Index>(weights.size());
  const double total = weights.sum();
  if (n == 0 || !(total > 0.0) || (weights.array() < 0.0).any())
    throw DomainError("alias table needs nonnegative weights with positive sum");
  dist_ = weights / total;
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<Index> small, large;
  for (Index i = 0; i < n; ++i) {
    scaled[i] = dist_[i] * n;
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const Index s = small.back();
    small.pop_back();
    const Index l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (Index i : large) prob_[i] = 1.0;
  // Leftovers from rounding keep their own column, unless they carry no mass.
  for (Index i : small) {
    prob_[i] = dist_[i] > 0.0 ? 1.0 : 0.0;
    if (dist_[i] == 0.0) alias_[i] = static_cast<Index>(std::max_element(prob_.begin(), prob_.end()) - prob_.begin());
  }
}

Index AliasTable::sample(Rng& rng) const {
  const Index column = static_cast<Index>(uniform_index(rng, prob_.size()));
  return uniform01(rng) < prob_[column] ? column : alias_[column];
}

// ---------------------------------------------------------------------------
// Uniform candidates

namespace {

Index num_candidates(const InteractionDataset& train, Index u) {
  return train.num_items() - static_cast<Index>(train.user_items(u).size());
}

void require_candidates(const InteractionDataset& train, Index u) {
  if (u < 0 || u >= train.num_users()) throw DomainError("sampler: user id out of range");
  if (num_candidates(train, u) < 1)
    throw DomainError("user " + std::to_string(u) + " has interacted with every item");
}

// The r-th (0-based) item of I - I_u in ascending id order.
Index nth_candidate(std::span<const Index> positives, Index r) {
  Index j = r;
  for (Index p : positives) {
    if (p <= j)
      ++j;
    else
      break;
  }
  return j;
}

// `count` distinct candidates, uniformly without replacement (Floyd).
std::vector<Index> distinct_candidates(const InteractionDataset& train, Index u, Index count, Rng& rng) {
  const auto positives = train.user_items(u);
  const Index pool = num_candidates(train, u);
  std::vector<Index> ranks;
  if (count >= pool) {
    ranks.resize(pool);
    std::iota(ranks.begin(), ranks.end(), 0);
  } else {
    ranks.reserve(count);
    for (Index j = pool - count; j < pool; ++j) {
      const Index t = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(j) + 1));
      if (std::find(ranks.begin(), ranks.end(), t) == ranks.end())
        ranks.push_back(t);
      else
        ranks.push_back(j);
    }
  }
  for (auto& r : ranks) r = nth_candidate(positives, r);
  return ranks;
}

}  // namespace

Index draw_uniform_negative(const InteractionDataset& train, Index u, Rng& rng) {
  const auto positives = train.user_items(u);
  const Index n = train.num_items();
  if (2 * static_cast<Index>(positives.size()) <= n) {
    for (;;) {
      const Index j = static_cast<Index>(uniform_index(rng, n));
      if (!std::binary_search(positives.begin(), positives.end(), j)) return j;
    }
  }
  return nth_candidate(positives, static_cast<Index>(uniform_index(rng, num_candidates(train, u))));
}

std::vector<Index> rank_candidates(const InteractionDataset& train, const PropagatedEmbeddings& emb,
                                   Index u) {
  const auto positives = train.user_items(u);
  const Eigen::VectorXd scores = emb.item_out * emb.user_out.row(u).transpose();
  std::vector<Index> cand;
  cand.reserve(num_candidates(train, u));
  for (Index j = 0, p = 0; j < train.num_items(); ++j) {
    while (p < static_cast<Index>(positives.size()) && positives[p] < j) ++p;
    if (p < static_cast<Index>(positives.size()) && positives[p] == j) continue;
    cand.push_back(j);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  return cand;
}

// ---------------------------------------------------------------------------
// Samplers

namespace {

class RnsSampler final : public NegativeSampler {
 public:
  using NegativeSampler::draw;
  void draw(const InteractionDataset& train, const PropagatedEmbeddings&, Index u,
            std::span<Index> out, Rng& rng) const override {
    require_candidates(train, u);
    for (auto& j : out) j = draw_uniform_negative(train, u, rng);
  }
  bool uses_scores() const noexcept override { return false; }
};

class PnsSampler final : public NegativeSampler {
 public:
  using NegativeSampler::draw;
  PnsSampler(const InteractionDataset& train, double beta) {
    const auto& pop = train.item_popularity();
    if (std::any_of(pop.begin(), pop.end(), [](auto c) { return c > 0; }))
      table_ = AliasTable(popularity_distribution(pop, beta));
  }

  void draw(const InteractionDataset& train, const PropagatedEmbeddings&, Index u,
            std::span<Index> out, Rng& rng) const override {
    require_candidates(train, u);
    const auto positives = train.user_items(u);
    double blocked = 0.0;
    if (table_.size() > 0)
      for (Index p : positives) blocked += table_.distribution()[p];
    if (table_.size() == 0 || blocked >= 1.0 - 1e-12) {
      if (!warned_) {
        std::clog << "warning: pns has no positive-popularity candidate for user " << u
                  << "; falling back to uniform\n";
        warned_ = true;
      }
      for (auto& j : out) j = draw_uniform_negative(train, u, rng);
      return;
    }
    for (auto& j : out) {
      do {
        j = table_.sample(rng);
      } while (std::binary_search(positives.begin(), positives.end(), j));
    }
  }
  bool uses_scores() const noexcept override { return false; }

 private:
  AliasTable table_;
  mutable bool warned_ = false;
};

class DnsSampler final : public NegativeSampler {
 public:
  using NegativeSampler::draw;
  explicit DnsSampler(DnsSpec spec) : spec_(spec) {}

  void draw(const InteractionDataset& train, const PropagatedEmbeddings& emb, Index u,
            std::span<Index> out, Rng& rng) const override {
    require_candidates(train, u);
    const auto eu = emb.user_out.row(u);
    for (auto& j : out) {
      auto cand = distinct_candidates(train, u, spec_.candidates, rng);
      std::vector<double> s(cand.size());
      for (std::size_t c = 0; c < cand.size(); ++c) s[c] = eu.dot(emb.item_out.row(cand[c]));
      if (!spec_.lambda) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cand.size(); ++c)
          if (s[c] > s[best] || (s[c] == s[best] && cand[c] < cand[best])) best = c;
        j = cand[best];
        continue;
      }
      std::vector<std::size_t> order(cand.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return s[a] != s[b] ? s[a] > s[b] : cand[a] < cand[b];
      });
      Eigen::VectorXd w(static_cast<Eigen::Index>(cand.size()));
      for (Eigen::Index r = 0; r < w.size(); ++r) w[r] = std::exp(-static_cast<double>(r) / *spec_.lambda);
      j = cand[order[AliasTable(w).sample(rng)]];
    }
  }
  bool uses_scores() const noexcept override { return true; }

 private:
  DnsSpec spec_;
};

class AobprSampler final : public NegativeSampler {
 public:
  using NegativeSampler::draw;
  AobprSampler(const InteractionDataset& train, AobprSpec spec)
      : lambda_(spec.lambda.value_or(train.num_items() / 100.0)) {
    if (!(lambda_ > 0.0)) throw ConfigError("aobpr: lambda must be > 0");
  }

  void draw(const InteractionDataset& train, const PropagatedEmbeddings& emb, Index u,
            std::span<Index> out, Rng& rng) const override {
    require_candidates(train, u);
    const auto ranked = rank_candidates(train, emb, u);
    // p(rank r) ~ exp(-r / lambda); shifted by the top rank for stability.
    Eigen::VectorXd w(static_cast<Eigen::Index>(ranked.size()));
    for (Eigen::Index r = 0; r < w.size(); ++r) w[r] = std::exp(-static_cast<double>(r) / lambda_);
    const AliasTable table(w);
    for (auto& j : out) j = ranked[table.sample(rng)];
  }
  bool uses_scores() const noexcept override { return true; }

 private:
  double lambda_;
};

}  // namespace

std::unique_ptr<NegativeSampler> make_sampler(const SamplerSpec& spec, const InteractionDataset& train) {
  validate(spec);
  struct {
    const InteractionDataset& train;
    std::unique_ptr<NegativeSampler> operator()(const RnsSpec&) const {
      return std::make_unique<RnsSampler>();
    }
    std::unique_ptr<NegativeSampler> operator()(const PnsSpec& s) const {
      return std::make_unique<PnsSampler>(train, s.beta);
    }
    std::unique_ptr<NegativeSampler> operator()(const DnsSpec& s) const {
      return std::make_unique<DnsSampler>(s);
    }
    std::unique_ptr<NegativeSampler> operator()(const AobprSpec& s) const {
      return std::make_unique<AobprSampler>(train, s);
    }
  } visitor{train};
  return std::visit(visitor, spec.kind);
}

std::vector<Index> sample_rns(const InteractionDataset& train, Index u, int k, Rng& rng) {
  return RnsSampler{}.draw(train, {}, u, k, rng);
}

std::vector<Index> sample_pns(const InteractionDataset& train, Index u, int k, double beta, Rng& rng) {
  return PnsSampler(train, beta).draw(train, {}, u, k, rng);
}

std::vector<Index> sample_dns(const InteractionDataset& train, const PropagatedEmbeddings& emb,
                              Index u, int k, int candidates, Rng& rng,
                              std::vector<std::vector<Index>>* trace) {
  if (candidates < 1) throw DomainError("dns: candidate count must be >= 1");
  require_candidates(train, u);
  std::vector<Index> out;
  out.reserve(k);
  const auto eu = emb.user_out.row(u);
  for (int n = 0; n < k; ++n) {
    auto cand = distinct_candidates(train, u, candidates, rng);
    Index best = cand.front();
    double best_score = eu.dot(emb.item_out.row(best));
    for (Index c : cand) {
      const double s = eu.dot(emb.item_out.row(c));
      if (s > best_score || (s == best_score && c < best)) {
        best = c;
        best_score = s;
      }
    }
    out.push_back(best);
    if (trace) trace->push_back(std::move(cand));
  }
  return out;
}

std::vector<Index> sample_aobpr(const InteractionDataset& train, const PropagatedEmbeddings& emb,
                                Index u, int k, double lambda, Rng& rng) {
  if (!(lambda > 0.0)) throw DomainError("aobpr: lambda must be > 0");
  return AobprSampler(train, AobprSpec{lambda}).draw(train, emb, u, k, rng);
}

}  // namespace autosample
