#include "autosample/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "autosample/errors.hpp"

namespace autosample {

RunConfig::RunConfig() : samplers(parse_sampler_list("rns;pns:beta=0.75;dns:c=10")) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) throw ConfigError("config key '" + key + "': value must be finite");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string show(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return std::to_string(v);
}

std::string show(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number_field(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_number<T>(k, v);
          },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return show(static_cast<double>(access(c)));
            else
              return std::to_string(access(c));
          }};
}

template <typename Access>
Field bool_field(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); },
          [access](const RunConfig& c) { return show(access(c)); }};
}

const std::vector<std::pair<std::string, Field>>& registry() {
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    f.emplace_back("data", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.data = v; },
                                 [](const RunConfig& c) { return c.data; }});
    f.emplace_back("min_count", number_field<int>([](auto& c) -> auto& { return c.min_count; }));
    f.emplace_back("ratios", Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                                     std::array<int, 3> r{};
                                     std::istringstream in(v);
                                     std::string part;
                                     std::size_t n = 0;
                                     while (std::getline(in, part, ':')) {
                                       if (n == 3) throw ConfigError("config key 'ratios': expected a:b:c");
                                       r[n++] = parse_number<int>(k, trim(part));
                                     }
                                     if (n != 3) throw ConfigError("config key 'ratios': expected a:b:c");
                                     c.ratios = r;
                                   },
                                   [](const RunConfig& c) {
                                     return std::to_string(c.ratios[0]) + ":" + std::to_string(c.ratios[1]) +
                                            ":" + std::to_string(c.ratios[2]);
                                   }});
    f.emplace_back("out", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
                                [](const RunConfig& c) { return c.out.string(); }});
    f.emplace_back("sampler", Field{[](RunConfig& c, const std::string&, const std::string& v) {
                                      c.sampler = parse_sampler_spec(v).name;
                                    },
                                    [](const RunConfig& c) { return c.sampler; }});
    f.emplace_back("samplers", Field{[](RunConfig& c, const std::string&, const std::string& v) {
                                       c.samplers = parse_sampler_list(v);
                                     },
                                     [](const RunConfig& c) {
                                       std::string s;
                                       for (const auto& spec : c.samplers) s += (s.empty() ? "" : ";") + spec.name;
                                       return s;
                                     }});
    f.emplace_back("model", Field{[](RunConfig& c, const std::string&, const std::string& v) {
                                    c.train.model = parse_model_kind(v);
                                  },
                                  [](const RunConfig& c) { return to_string(c.train.model); }});
    f.emplace_back("layers", number_field<int>([](auto& c) -> auto& { return c.train.layers; }));
    f.emplace_back("epochs", number_field<int>([](auto& c) -> auto& { return c.train.epochs; }));
    f.emplace_back("batch_size", number_field<int>([](auto& c) -> auto& { return c.train.batch_size; }));
    f.emplace_back("lr_w", number_field<double>([](auto& c) -> auto& { return c.train.lr_w; }));
    f.emplace_back("lr_theta", number_field<double>([](auto& c) -> auto& { return c.train.lr_theta; }));
    f.emplace_back("l2", number_field<double>([](auto& c) -> auto& { return c.train.l2; }));
    f.emplace_back("k", number_field<int>([](auto& c) -> auto& { return c.train.k; }));
    f.emplace_back("dim", number_field<int>([](auto& c) -> auto& { return c.train.dim; }));
    f.emplace_back("eval_every", number_field<int>([](auto& c) -> auto& { return c.train.eval_every; }));
    f.emplace_back("metric", Field{[](RunConfig& c, const std::string&, const std::string& v) {
                                     MetricsReport{}.metric(v);
                                     c.train.metric_for_best = v;
                                   },
                                   [](const RunConfig& c) { return c.train.metric_for_best; }});
    f.emplace_back("topk", number_field<int>([](auto& c) -> auto& { return c.train.topk; }));
    f.emplace_back("patience", number_field<int>([](auto& c) -> auto& { return c.train.patience; }));
    f.emplace_back("seed", number_field<std::uint64_t>([](auto& c) -> auto& { return c.train.seed; }));
    f.emplace_back("dense_adam", bool_field([](auto& c) -> auto& { return c.train.dense_adam; }));
    f.emplace_back("stale_propagation", bool_field([](auto& c) -> auto& { return c.train.stale_propagation; }));
    f.emplace_back("tau0", number_field<double>([](auto& c) -> auto& { return c.search.tau.tau0; }));
    f.emplace_back("tau_min", number_field<double>([](auto& c) -> auto& { return c.search.tau.tau_min; }));
    f.emplace_back("tau_decay", number_field<double>([](auto& c) -> auto& { return c.search.tau.decay; }));
    f.emplace_back("hard_st", bool_field([](auto& c) -> auto& { return c.search.hard_straight_through; }));
    f.emplace_back("noise_per_epoch", bool_field([](auto& c) -> auto& { return c.search.noise_per_epoch; }));
    f.emplace_back("jobs", number_field<int>([](auto& c) -> auto& { return c.jobs; }));
    f.emplace_back("from", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.from = v; },
                                 [](const RunConfig& c) { return c.from.string(); }});
    f.emplace_back("checkpoint", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; },
                                       [](const RunConfig& c) { return c.checkpoint.string(); }});
    f.emplace_back("warm_start", bool_field([](auto& c) -> auto& { return c.warm_start; }));
    f.emplace_back("users", number_field<int>([](auto& c) -> auto& { return c.users; }));
    f.emplace_back("items", number_field<int>([](auto& c) -> auto& { return c.items; }));
    f.emplace_back("blocks", number_field<int>([](auto& c) -> auto& { return c.blocks; }));
    f.emplace_back("density", number_field<double>([](auto& c) -> auto& { return c.density; }));
    f.emplace_back("noise", number_field<double>([](auto& c) -> auto& { return c.noise; }));
    return f;
  }();
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : registry())
    if (name == key) return &field;
  return nullptr;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : registry()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::optional<std::string> suggest_key(const std::string& unknown) {
  static const std::map<std::string, std::string> aliases = {
      {"learningrate", "lr_w"}, {"learning_rate", "lr_w"}, {"lr", "lr_w"},
      {"theta_lr", "lr_theta"}, {"alpha_lr", "lr_theta"},  {"weight_decay", "l2"},
      {"reg", "l2"},            {"decay", "tau_decay"},    {"temperature", "tau0"},
      {"batch", "batch_size"},  {"batchsize", "batch_size"}, {"embedding_dim", "dim"},
      {"negatives", "k"},       {"K", "topk"},             {"output", "out"},
  };
  std::string lower = unknown;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  lower.erase(std::remove(lower.begin(), lower.end(), '-'), lower.end());
  if (auto it = aliases.find(unknown); it != aliases.end()) return it->second;
  if (auto it = aliases.find(lower); it != aliases.end()) return it->second;
  std::optional<std::string> best;
  std::size_t best_d = 3;
  for (const auto& key : config_keys()) {
    const auto d = edit_distance(lower, key);
    if (d < best_d) {
      best_d = d;
      best = key;
    }
  }
  return best;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* field = find_field(key);
  if (!field) {
    std::string msg = "unknown config key '" + key + "'";
    if (auto s = suggest_key(key)) msg += "; did you mean '" + *s + "'?";
    throw ConfigError(msg);
  }
  field->set(cfg, key, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  const Field* field = find_field(key);
  if (!field) throw ConfigError("unknown config key '" + key + "'");
  return field->get(cfg);
}

Overrides parse_config_text(const std::string& text) {
  Overrides out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    out[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(buf.str())) set_config_value(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  validate(cfg.train);
  anneal_tau(cfg.search.tau, 0);
  if (cfg.min_count < 1) throw ConfigError("invalid config: min_count must be >= 1");
  if (cfg.jobs < 1) throw ConfigError("invalid config: jobs must be >= 1");
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& key : config_keys()) j[key] = get_config_value(cfg, key);
  return j;
}

}  // namespace autosample
