#include "autosample/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "autosample/config.hpp"
#include "autosample/data.hpp"
#include "autosample/errors.hpp"
#include "autosample/eval.hpp"
#include "autosample/model.hpp"
#include "autosample/search.hpp"
#include "autosample/trainer.hpp"

#ifndef AUTOSAMPLE_VERSION
#define AUTOSAMPLE_VERSION "unknown"
#endif

namespace autosample {

std::string version_string() { return AUTOSAMPLE_VERSION; }

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("bad JSON in " + path.string() + ": " + e.what());
  }
}

void write_provenance(const std::string& command, const RunConfig& cfg) {
  write_json(cfg.out / "run.json", {{"command", command},
                                    {"version", version_string()},
                                    {"seed", cfg.train.seed},
                                    {"config", to_json(cfg)}});
}

DataSplit load_split(const RunConfig& cfg) {
  if (cfg.data.empty()) throw UsageError("missing required --data (interactions TSV or split directory)");
  const fs::path path(cfg.data);
  if (fs::is_directory(path)) return read_split(path);
  const auto ds = load_interactions(path, cfg.min_count);
  return split_dataset(ds, cfg.ratios, derive_seed(cfg.train.seed, "split"));
}

json result_json(const TrainResult& r) {
  return {{"sampler", r.sampler},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"valid", to_json(r.valid)},
          {"test", to_json(r.test)}};
}

json names(const std::vector<SamplerSpec>& specs) {
  json j = json::array();
  for (const auto& s : specs) j.push_back(s.name);
  return j;
}

// ---------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg) {
  const auto start = Clock::now();
  const auto ds = generate_synthetic(cfg.users, cfg.items, cfg.blocks, cfg.density, cfg.noise,
                                     derive_seed(cfg.train.seed, "gen"));
  write_interactions(ds, cfg.out / "interactions.tsv");
  write_json(cfg.out / "metrics.json",
             {{"stage", "gen"}, {"num_users", ds.num_users()}, {"num_items", ds.num_items()},
              {"interactions", ds.size()}});
  write_json(cfg.out / "timing.json", {{"elapsed_ms", ms_since(start)}});
  write_provenance("gen", cfg);
  std::cout << "gen: " << ds.num_users() << " users, " << ds.num_items() << " items, " << ds.size()
            << " interactions -> " << (cfg.out / "interactions.tsv").string() << '\n';
  return kExitOk;
}

int cmd_split(const RunConfig& cfg) {
  const auto start = Clock::now();
  const auto split = load_split(cfg);
  write_split(split, cfg.out);
  write_json(cfg.out / "metrics.json", {{"stage", "split"},
                                        {"num_users", split.train.num_users()},
                                        {"num_items", split.train.num_items()},
                                        {"train", split.train.size()},
                                        {"valid", split.valid.size()},
                                        {"test", split.test.size()}});
  write_json(cfg.out / "timing.json", {{"elapsed_ms", ms_since(start)}});
  write_provenance("split", cfg);
  std::cout << "split: train " << split.train.size() << ", valid " << split.valid.size() << ", test "
            << split.test.size() << " -> " << cfg.out.string() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const auto spec = parse_sampler_spec(cfg.sampler);
  const auto r = train_fixed(split, spec, initial_params(split, cfg.train), cfg.train);
  save_checkpoint(r.params, cfg.out / "checkpoint.bin");
  json m = result_json(r);
  m["stage"] = "train";
  write_json(cfg.out / "metrics.json", m);
  write_json(cfg.out / "timing.json", {{"elapsed_ms", r.elapsed_ms}});
  write_provenance("train", cfg);
  std::cout << "train[" << spec.name << "]: test recall@" << r.test.k << " " << r.test.recall << ", ndcg "
            << r.test.ndcg << " (" << r.epochs_run << " epochs, " << r.elapsed_ms << " ms)\n";
  return kExitOk;
}

SearchOutcome do_search(const RunConfig& cfg, const DataSplit& split) {
  auto outcome = run_search(split, cfg.samplers, initial_params(split, cfg.train), cfg.train, cfg.search);
  write_history(outcome, cfg.out / "history.jsonl");
  save_checkpoint(outcome.best_params, cfg.out / "search_checkpoint.bin");
  write_json(cfg.out / "alpha.json", {{"samplers", names(cfg.samplers)},
                                      {"alpha_star", outcome.alpha_star},
                                      {"alpha_at_best", outcome.alpha_at_best},
                                      {"selected", select_sampler(outcome.alpha_star, false)},
                                      {"best_epoch", outcome.best_epoch},
                                      {"epochs_run", outcome.history.size()},
                                      {"search_valid", to_json(outcome.best_valid)}});
  return outcome;
}

json retrain_json(const RetrainResult& r, bool warm_start) {
  json m = result_json(r.train);
  m["stage"] = "retrain";
  m["selected"] = r.selected;
  m["warm_start"] = warm_start;
  return m;
}

RetrainResult do_retrain(const RunConfig& cfg, const DataSplit& split, const std::vector<double>& alpha,
                         const std::vector<SamplerSpec>& specs, ModelParams w_prime) {
  ModelParams init = cfg.warm_start ? std::move(w_prime) : initial_params(split, cfg.train);
  auto r = retrain(split, alpha, specs, std::move(init), cfg.train);
  save_checkpoint(r.train.params, cfg.out / "checkpoint.bin");
  write_json(cfg.out / "metrics.json", retrain_json(r, cfg.warm_start));
  return r;
}

int cmd_search(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const auto outcome = do_search(cfg, split);
  const auto test = evaluate_test(output_embeddings(outcome.best_params, Graph(split.train)), split, cfg.train.topk);
  write_json(cfg.out / "metrics.json", {{"stage", "search"},
                                        {"best_epoch", outcome.best_epoch},
                                        {"valid", to_json(outcome.best_valid)},
                                        {"test", to_json(test)}});
  write_json(cfg.out / "timing.json", {{"elapsed_ms", outcome.elapsed_ms}});
  write_provenance("search", cfg);
  std::cout << "search: alpha* [";
  for (std::size_t t = 0; t < outcome.alpha_star.size(); ++t)
    std::cout << (t ? ", " : "") << cfg.samplers[t].name << "=" << outcome.alpha_star[t];
  std::cout << "], best valid recall " << outcome.best_valid.recall << " (" << outcome.elapsed_ms << " ms)\n";
  return kExitOk;
}

int cmd_retrain(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const fs::path from = cfg.from.empty() ? cfg.out : cfg.from;
  const auto alpha_doc = read_json(from / "alpha.json");
  std::vector<SamplerSpec> specs;
  for (const auto& name : alpha_doc.at("samplers")) specs.push_back(parse_sampler_spec(name.get<std::string>()));
  const auto alpha = alpha_doc.at("alpha_star").get<std::vector<double>>();
  fs::create_directories(cfg.out);
  const auto r = do_retrain(cfg, split, alpha, specs, load_checkpoint(from / "search_checkpoint.bin"));
  write_json(cfg.out / "timing.json", {{"elapsed_ms", r.train.elapsed_ms}});
  write_provenance("retrain", cfg);
  std::cout << "retrain[" << specs[r.selected].name << "]: test recall@" << r.train.test.k << " "
            << r.train.test.recall << ", ndcg " << r.train.test.ndcg << " (" << r.train.elapsed_ms << " ms)\n";
  return kExitOk;
}

int cmd_auto(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const auto outcome = do_search(cfg, split);
  const auto r = do_retrain(cfg, split, outcome.alpha_star, cfg.samplers, outcome.best_params);
  write_json(cfg.out / "timing.json", {{"search_ms", outcome.elapsed_ms},
                                       {"retrain_ms", r.train.elapsed_ms},
                                       {"elapsed_ms", outcome.elapsed_ms + r.train.elapsed_ms}});
  write_provenance("auto", cfg);
  std::cout << "auto: selected " << cfg.samplers[r.selected].name << ", test recall@" << r.train.test.k << " "
            << r.train.test.recall << ", ndcg " << r.train.test.ndcg << " ("
            << outcome.elapsed_ms + r.train.elapsed_ms << " ms)\n";
  return kExitOk;
}

int cmd_grid(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const auto grid = grid_search(split, cfg.samplers, cfg.train, cfg.jobs);
  write_results_csv(grid, cfg.train.topk, cfg.out / "results.csv");
  json cells = json::array();
  json timing = json::array();
  for (const auto& cell : grid.cells) {
    cells.push_back(result_json(cell.result));
    timing.push_back({{"sampler", cell.spec.name}, {"elapsed_ms", cell.result.elapsed_ms}});
  }
  write_json(cfg.out / "metrics.json", {{"stage", "grid"}, {"cells", cells}});
  write_json(cfg.out / "timing.json", {{"cells", timing}, {"elapsed_ms", grid.total_elapsed_ms}});
  write_provenance("grid", cfg);
  std::cout << "grid: " << grid.cells.size() << " samplers, total " << grid.total_elapsed_ms << " ms\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const fs::path ckpt = cfg.checkpoint.empty() ? cfg.out / "checkpoint.bin" : cfg.checkpoint;
  const auto params = load_checkpoint(ckpt);
  if (params.num_users() != split.train.num_users() || params.num_items() != split.train.num_items())
    throw DomainError("checkpoint does not match the dataset dimensions");
  const auto emb = output_embeddings(params, Graph(split.train));
  const auto valid = evaluate_valid(emb, split, cfg.train.topk);
  const auto test = evaluate_test(emb, split, cfg.train.topk);
  write_json(cfg.out / "metrics.json", {{"stage", "eval"}, {"valid", to_json(valid)}, {"test", to_json(test)}});
  write_json(cfg.out / "timing.json", {{"elapsed_ms", valid.elapsed_ms + test.elapsed_ms}});
  write_provenance("eval", cfg);
  std::cout << "eval: test recall@" << test.k << " " << test.recall << ", ndcg " << test.ndcg << ", precision "
            << test.precision << ", hr " << test.hit_ratio << '\n';
  return kExitOk;
}

int cmd_tune(const RunConfig& cfg) {
  const auto split = load_split(cfg);
  const auto spec = parse_sampler_spec(cfg.sampler);
  const auto cells = tune(split, spec, cfg.train);
  std::ofstream csv(cfg.out / "tune.csv");
  csv.precision(10);
  csv << "lr_w,l2,valid_" << cfg.train.metric_for_best << ",test_recall,test_ndcg,elapsed_ms\n";
  json rows = json::array();
  std::size_t best = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& r = cells[c].result;
    csv << cells[c].lr_w << ',' << cells[c].l2 << ',' << r.valid.metric(cfg.train.metric_for_best) << ','
        << r.test.recall << ',' << r.test.ndcg << ',' << r.elapsed_ms << '\n';
    json row = result_json(r);
    row["lr_w"] = cells[c].lr_w;
    row["l2"] = cells[c].l2;
    rows.push_back(row);
    if (r.valid.metric(cfg.train.metric_for_best) > cells[best].result.valid.metric(cfg.train.metric_for_best))
      best = c;
  }
  write_json(cfg.out / "metrics.json", {{"stage", "tune"}, {"best", rows[best]}, {"cells", rows}});
  double total_ms = 0.0;
  for (const auto& c : cells) total_ms += c.result.elapsed_ms;
  write_json(cfg.out / "timing.json", {{"elapsed_ms", total_ms}});
  write_provenance("tune", cfg);
  std::cout << "tune[" << spec.name << "]: best lr_w " << cells[best].lr_w << ", l2 " << cells[best].l2 << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  const std::map<std::string, std::pair<const char*, int (*)(const RunConfig&)>> commands = {
      {"gen", {"generate a planted-block synthetic dataset", cmd_gen}},
      {"split", {"split interactions 3:1:1 and write the manifest", cmd_split}},
      {"train", {"train with one fixed negative sampler", cmd_train}},
      {"search", {"jointly learn sampler weights and the model", cmd_search}},
      {"retrain", {"retrain with the selected sampler from a search output", cmd_retrain}},
      {"auto", {"search, then retrain, in one run", cmd_auto}},
      {"grid", {"train every candidate sampler and time the sweep", cmd_grid}},
      {"eval", {"evaluate a checkpoint", cmd_eval}},
      {"tune", {"sweep learning rate and l2 for one sampler", cmd_tune}},
  };

  CLI::App app{"Automated negative sampler selection for implicit recommendation", "autosample"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "flat key=value config file");
    for (const auto& key : config_keys()) sub->add_option("--" + key, flag_values[key]);
    subs[name] = sub;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  Overrides overrides;
  for (const auto& key : config_keys())
    if (subs[command]->count("--" + key) > 0) overrides[key] = flag_values[key];

  try {
    const RunConfig cfg = load_config(config_path, overrides);
    fs::create_directories(cfg.out);
    return commands.at(command).second(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "autosample " << command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "autosample " << command << ": " << e.what() << "\n" << subs[command]->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "autosample " << command << ": error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace autosample
