// oens command-line interface.
//
// Machine-readable single-line JSON goes to stdout; human logs go to stderr
// (verbosity via OENS_LOG=error|info|debug). Exit codes: 0 success,
// 1 invalid configuration or I/O, 2 numerical abort, 3 partial sweep failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oens/checkpoint.hpp"
#include "oens/gradcheck.hpp"
#include "oens/harness.hpp"
#include "oens/log.hpp"
#include "oens/version.hpp"

namespace {

using oens::ConfigError;
using oens::IoError;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open JSON file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) values.push_back(std::stod(token));
  return values;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> values;
  if (text.empty() || text == "none") return values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) values.push_back(static_cast<std::size_t>(std::stoull(token)));
  return values;
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& text) {
  std::vector<std::pair<int, int>> pairs;
  if (text.empty()) return pairs;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const std::size_t colon = token.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("confusable pair '" + token + "' must look like a:b");
    }
    pairs.emplace_back(std::stoi(token.substr(0, colon)), std::stoi(token.substr(colon + 1)));
  }
  return pairs;
}

struct TrainCli {
  std::string config_path;
  std::string data_path;
  std::string method = "smcl";
  int members = 1;
  int k = 1;
  std::int64_t iterations = 1000;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::string hidden = "32";
  std::string init_from;
  std::string out_dir = ".";
};

int cmd_train(const TrainCli& cli, const CLI::App& sub) {
  nlohmann::json config =
      cli.config_path.empty() ? nlohmann::json::object() : load_json_file(cli.config_path);

  oens::DatasetSpec dataset_spec = [&] {
    if (sub.count("--data") > 0) return oens::DatasetSpec::from_json(load_json_file(cli.data_path));
    if (config.contains("dataset")) return oens::DatasetSpec::from_json(config.at("dataset"));
    throw ConfigError("train needs --data or a config file with a dataset section");
  }();

  oens::TrainTemplate tmpl = config.contains("train")
                                 ? oens::TrainTemplate::from_json(config.at("train"))
                                 : oens::TrainTemplate{};
  // Flags override config-file values.
  if (sub.count("--iterations")) tmpl.total_iterations = cli.iterations;
  if (sub.count("--batch-size")) tmpl.batch_size = cli.batch_size;
  if (sub.count("--lr")) tmpl.optimizer.learning_rate = cli.lr;
  if (sub.count("--momentum")) tmpl.optimizer.momentum = cli.momentum;
  if (sub.count("--weight-decay")) tmpl.optimizer.weight_decay = cli.weight_decay;
  if (sub.count("--hidden")) tmpl.hidden_layers = parse_size_list(cli.hidden);
  if (sub.count("--init-from")) tmpl.init_from = cli.init_from;

  std::string method_name = config.value("method", std::string("smcl"));
  if (sub.count("--method")) method_name = cli.method;
  int members = config.value("members", 1);
  if (sub.count("--members")) members = cli.members;
  int k = config.value("k", 1);
  if (sub.count("--k")) k = cli.k;
  std::uint64_t seed = config.value("seed", std::uint64_t{0});
  if (sub.count("--seed")) seed = cli.seed;

  const oens::Method method = oens::method_from_string(method_name);
  const oens::DatasetBundle bundle =
      oens::materialize_dataset(dataset_spec, dataset_spec.data_seed.value_or(seed));
  const oens::TrainConfig train_config =
      tmpl.instantiate(method, members, k, seed, bundle.train.input_dim(),
                       static_cast<std::size_t>(bundle.train.class_count));
  train_config.validate();

  const auto started = std::chrono::steady_clock::now();
  oens::TrainResult result = oens::train(train_config, bundle.train, bundle.probe);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::filesystem::create_directories(cli.out_dir);
  const std::string checkpoint_path =
      (std::filesystem::path(cli.out_dir) / "ensemble.oens").string();
  oens::save_ensemble(result.ensemble, checkpoint_path);
  {
    std::ofstream out(std::filesystem::path(cli.out_dir) / "history.csv");
    result.history.write_csv(out);
  }
  const oens::OracleReport report = oens::evaluate(result.ensemble, bundle.test);

  nlohmann::json summary;
  summary["method"] = method_name;
  summary["members"] = members;
  summary["k"] = k;
  summary["seed"] = seed;
  summary["wall_clock_seconds"] = wall;
  summary["checkpoint"] = checkpoint_path;
  summary["report"] = nlohmann::json::parse(report.to_json());
  std::cout << summary.dump() << '\n';
  return 0;
}

struct EvalCli {
  std::string ensemble_path;
  std::string data_path;
  std::string specialization_path;
  std::size_t batch = 512;
};

int cmd_eval(const EvalCli& cli, const CLI::App& sub) {
  const oens::Ensemble ensemble = oens::load_ensemble(cli.ensemble_path);
  const oens::DatasetSpec spec = oens::DatasetSpec::from_json(load_json_file(cli.data_path));
  // Synthetic descriptors should carry a data_seed so evaluation sees the
  // same splits as training; without one the canonical seed-0 splits apply.
  const oens::DatasetBundle bundle = oens::materialize_dataset(spec, spec.data_seed.value_or(0));
  if (bundle.test.input_dim() != ensemble.input_dim()) {
    throw ConfigError("dataset width " + std::to_string(bundle.test.input_dim()) +
                      " does not match checkpoint input dim " +
                      std::to_string(ensemble.input_dim()));
  }
  const oens::OracleReport report = oens::evaluate(ensemble, bundle.test, cli.batch);
  if (sub.count("--specialization") > 0) {
    oens::RunRecord record;
    record.cell_id = "eval";
    record.members = static_cast<int>(ensemble.member_count());
    record.k = 1;
    record.report = report;
    std::ofstream out(cli.specialization_path);
    if (!out) throw IoError("cannot write specialization report: " + cli.specialization_path);
    out << oens::emit_specialization_report(record).dump(2) << '\n';
  }
  std::cout << report.to_json() << '\n';
  return 0;
}

struct SweepCli {
  std::string config_path;
  int jobs = 1;
};

int cmd_sweep(const SweepCli& cli) {
  const oens::ExperimentConfig config = oens::ExperimentConfig::load(cli.config_path);
  const std::vector<oens::RunRecord> records = oens::run_experiment(config, cli.jobs);
  std::size_t failed = 0;
  for (const oens::RunRecord& record : records) {
    if (record.failed) {
      ++failed;
      oens::log_error("quarantined cell " + record.cell_id + ": " + record.error);
    }
  }
  nlohmann::json summary;
  summary["cells"] = records.size();
  summary["failed"] = failed;
  summary["output_dir"] = config.output_dir;
  std::cout << summary.dump() << '\n';
  return failed == 0 ? 0 : 3;
}

struct GradcheckCli {
  int trials = 100;
  double tolerance = 1e-4;
  double epsilon = 1e-5;
  std::uint64_t seed = 20240915;
};

int cmd_gradcheck(const GradcheckCli& cli) {
  oens::GradCheckConfig config;
  config.trials = cli.trials;
  config.tolerance = cli.tolerance;
  config.epsilon = cli.epsilon;
  config.seed = cli.seed;
  const oens::GradCheckOutcome outcome = oens::check_gradients(config);
  nlohmann::json summary;
  summary["trials"] = outcome.trials_run;
  summary["tolerance"] = cli.tolerance;
  summary["max_rel_error"] = outcome.max_rel_error;
  summary["pass"] = outcome.passed;
  std::cout << summary.dump() << '\n';
  return outcome.passed ? 0 : 1;
}

struct GenDataCli {
  std::string generator = "ambiguous";
  std::size_t n = 4000;
  std::size_t input_dim = 2;
  std::string priors = "0.5,0.5";
  std::size_t classes = 10;
  double spread = 0.5;
  std::string pairs;
  double separation = 0.1;
  std::uint64_t seed = 0;
  std::string out_path;
};

int cmd_gen_data(const GenDataCli& cli) {
  oens::Dataset dataset;
  nlohmann::json params;
  if (cli.generator == "ambiguous") {
    const std::vector<double> priors = parse_double_list(cli.priors);
    dataset = oens::gen_ambiguous(cli.seed, cli.n, cli.input_dim, priors.size(), priors, "export");
    params["mode_priors"] = priors;
  } else if (cli.generator == "clustered") {
    const auto pairs = parse_pairs(cli.pairs);
    dataset = oens::gen_clustered_classes(cli.seed, cli.n, cli.input_dim, cli.classes, cli.spread,
                                          pairs, cli.separation, "export");
    params["class_count"] = cli.classes;
    params["cluster_spread"] = cli.spread;
    params["pair_separation"] = cli.separation;
    nlohmann::json pair_list = nlohmann::json::array();
    for (const auto& [a, b] : pairs) pair_list.push_back({a, b});
    params["confusable_pairs"] = pair_list;
  } else {
    throw ConfigError("unknown generator '" + cli.generator + "' (expected ambiguous|clustered)");
  }
  oens::write_csv(dataset, cli.out_path);

  nlohmann::json stats;
  stats["generator"] = cli.generator;
  stats["seed"] = cli.seed;
  stats["n"] = dataset.size();
  stats["input_dim"] = dataset.input_dim();
  stats["class_count"] = dataset.class_count;
  stats["params"] = params;
  std::vector<std::size_t> counts(static_cast<std::size_t>(dataset.class_count), 0);
  for (int y : dataset.labels) ++counts[static_cast<std::size_t>(y)];
  stats["class_counts"] = counts;
  stats["feature_means"] = oens::fit_feature_means(dataset);
  const std::string stats_path = cli.out_path + ".stats.json";
  std::ofstream out(stats_path);
  if (!out) throw IoError("cannot write stats sidecar: " + stats_path);
  out << stats.dump(2) << '\n';

  nlohmann::json summary;
  summary["dataset"] = cli.out_path;
  summary["stats"] = stats_path;
  summary["n"] = dataset.size();
  std::cout << summary.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oracle-loss ensemble trainer"};
  app.set_version_flag("--version", oens::kEngineVersion);
  app.require_subcommand(1);

  TrainCli train_cli;
  CLI::App* train = app.add_subcommand("train", "train an ensemble and write a checkpoint");
  train->add_option("--config", train_cli.config_path, "JSON config with dataset/train sections");
  train->add_option("--data", train_cli.data_path, "dataset descriptor JSON (overrides config)");
  train->add_option("--method", train_cli.method, "smcl|mcl|independent|dey");
  train->add_option("--members", train_cli.members, "ensemble size M");
  train->add_option("--k", train_cli.k, "winners per example");
  train->add_option("--iterations", train_cli.iterations, "total SGD iterations");
  train->add_option("--batch-size", train_cli.batch_size, "batch size");
  train->add_option("--lr", train_cli.lr, "learning rate");
  train->add_option("--momentum", train_cli.momentum, "momentum coefficient");
  train->add_option("--weight-decay", train_cli.weight_decay, "weight decay coefficient");
  train->add_option("--seed", train_cli.seed, "run seed");
  train->add_option("--hidden", train_cli.hidden, "comma-separated hidden widths (or 'none')");
  train->add_option("--init-from", train_cli.init_from, "checkpoint to fine-tune from");
  train->add_option("--out", train_cli.out_dir, "output directory");

  EvalCli eval_cli;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint and print its oracle report");
  eval->add_option("--ensemble", eval_cli.ensemble_path, "checkpoint path")->required();
  eval->add_option("--data", eval_cli.data_path, "dataset descriptor JSON")->required();
  eval->add_option("--specialization", eval_cli.specialization_path,
                   "write a winner-distribution report to this path");
  eval->add_option("--batch", eval_cli.batch, "evaluation batch size");

  SweepCli sweep_cli;
  CLI::App* sweep = app.add_subcommand("sweep", "run an experiment sweep from a JSON config");
  sweep->add_option("--config", sweep_cli.config_path, "experiment config JSON")->required();
  sweep->add_option("--jobs", sweep_cli.jobs, "parallel sweep cells (default 1 for audits)");

  GradcheckCli grad_cli;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "verify backward() against finite differences");
  gradcheck->add_option("--trials", grad_cli.trials, "number of random networks");
  gradcheck->add_option("--tolerance", grad_cli.tolerance, "max allowed relative error");
  gradcheck->add_option("--epsilon", grad_cli.epsilon, "finite-difference step");
  gradcheck->add_option("--seed", grad_cli.seed, "trial stream seed");

  GenDataCli gen_cli;
  CLI::App* gen_data = app.add_subcommand("gen-data", "export a synthetic dataset to CSV");
  gen_data->add_option("--generator", gen_cli.generator, "ambiguous|clustered");
  gen_data->add_option("--n", gen_cli.n, "example count");
  gen_data->add_option("--input-dim", gen_cli.input_dim, "feature width");
  gen_data->add_option("--priors", gen_cli.priors, "comma-separated mode priors (ambiguous)");
  gen_data->add_option("--classes", gen_cli.classes, "class count (clustered)");
  gen_data->add_option("--spread", gen_cli.spread, "cluster spread (clustered)");
  gen_data->add_option("--pairs", gen_cli.pairs, "confusable pairs a:b,c:d (clustered)");
  gen_data->add_option("--separation", gen_cli.separation, "confusable pair separation");
  gen_data->add_option("--seed", gen_cli.seed, "generator seed");
  gen_data->add_option("--out", gen_cli.out_path, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Collapse CLI11's exit-code zoo onto the documented contract:
    // 0 for --help/--version, 1 for any parse problem.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_cli, *train);
    if (eval->parsed()) return cmd_eval(eval_cli, *eval);
    if (sweep->parsed()) return cmd_sweep(sweep_cli);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_cli);
    if (gen_data->parsed()) return cmd_gen_data(gen_cli);
  } catch (const oens::NumericalError& e) {
    oens::log_error(std::string("numerical abort: ") + e.what());
    return 2;
  } catch (const oens::Error& e) {
    oens::log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    oens::log_error(e.what());
    return 1;
  }
  return 0;
}
