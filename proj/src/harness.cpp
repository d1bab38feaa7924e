#include "oens/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "oens/checkpoint.hpp"
#include "oens/log.hpp"
#include "oens/rng.hpp"
#include "oens/version.hpp"

namespace oens {

namespace {

std::uint64_t salted_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (salt * 0xd6e8feb86659fd93ULL);
  return detail::splitmix64(s);
}

// Shortest round-trip decimal form; keeps emitted tables byte-deterministic.
std::string format_double(double v) {
  char buffer[32];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, ptr);
}

}  // namespace

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec spec;
  spec.kind = j.at("kind").get<std::string>();
  if (spec.kind != "ambiguous" && spec.kind != "clustered" && spec.kind != "csv" &&
      spec.kind != "idx") {
    throw ConfigError("dataset kind must be ambiguous|clustered|csv|idx, got '" + spec.kind + "'");
  }
  if (j.contains("data_seed")) spec.data_seed = j.at("data_seed").get<std::uint64_t>();
  if (j.contains("n_train")) spec.n_train = j.at("n_train").get<std::size_t>();
  if (j.contains("n_test")) spec.n_test = j.at("n_test").get<std::size_t>();
  if (j.contains("n_probe")) spec.n_probe = j.at("n_probe").get<std::size_t>();
  if (j.contains("input_dim")) spec.input_dim = j.at("input_dim").get<std::size_t>();
  if (j.contains("mode_priors")) {
    spec.mode_priors = j.at("mode_priors").get<std::vector<double>>();
    spec.mode_count = spec.mode_priors.size();
  }
  if (j.contains("mode_count")) spec.mode_count = j.at("mode_count").get<std::size_t>();
  if (j.contains("class_count")) spec.class_count = j.at("class_count").get<std::size_t>();
  if (j.contains("cluster_spread")) spec.cluster_spread = j.at("cluster_spread").get<double>();
  if (j.contains("pair_separation")) spec.pair_separation = j.at("pair_separation").get<double>();
  if (j.contains("confusable_pairs")) {
    for (const auto& pair : j.at("confusable_pairs")) {
      spec.confusable_pairs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
  }
  if (j.contains("train_path")) spec.train_path = j.at("train_path").get<std::string>();
  if (j.contains("test_path")) spec.test_path = j.at("test_path").get<std::string>();
  if (j.contains("label_column")) spec.label_column = j.at("label_column").get<std::string>();
  if (j.contains("train_images")) spec.train_images = j.at("train_images").get<std::string>();
  if (j.contains("train_labels")) spec.train_labels = j.at("train_labels").get<std::string>();
  if (j.contains("test_images")) spec.test_images = j.at("test_images").get<std::string>();
  if (j.contains("test_labels")) spec.test_labels = j.at("test_labels").get<std::string>();
  if (j.contains("normalize")) spec.normalize = j.at("normalize").get<bool>();
  return spec;
}

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  if (data_seed.has_value()) j["data_seed"] = *data_seed;
  if (kind == "ambiguous" || kind == "clustered") {
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["n_probe"] = n_probe;
    j["input_dim"] = input_dim;
    if (kind == "ambiguous") {
      j["mode_count"] = mode_count;
      j["mode_priors"] = mode_priors;
    } else {
      j["class_count"] = class_count;
      j["cluster_spread"] = cluster_spread;
      j["pair_separation"] = pair_separation;
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& [a, b] : confusable_pairs) pairs.push_back({a, b});
      j["confusable_pairs"] = pairs;
    }
  } else if (kind == "csv") {
    j["train_path"] = train_path;
    j["test_path"] = test_path;
    j["label_column"] = label_column;
  } else {
    j["train_images"] = train_images;
    j["train_labels"] = train_labels;
    j["test_images"] = test_images;
    j["test_labels"] = test_labels;
  }
  if (normalize.has_value()) j["normalize"] = *normalize;
  return j;
}

DatasetBundle materialize_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  DatasetBundle bundle;
  if (spec.kind == "ambiguous") {
    bundle.train = gen_ambiguous(salted_seed(seed, 1), spec.n_train, spec.input_dim,
                                 spec.mode_count, spec.mode_priors, "train");
    bundle.test = gen_ambiguous(salted_seed(seed, 2), spec.n_test, spec.input_dim, spec.mode_count,
                                spec.mode_priors, "test");
    bundle.probe = gen_ambiguous(salted_seed(seed, 3), spec.n_probe, spec.input_dim,
                                 spec.mode_count, spec.mode_priors, "probe");
  } else if (spec.kind == "clustered") {
    bundle.train =
        gen_clustered_classes(salted_seed(seed, 1), spec.n_train, spec.input_dim, spec.class_count,
                              spec.cluster_spread, spec.confusable_pairs, spec.pair_separation,
                              "train");
    bundle.test =
        gen_clustered_classes(salted_seed(seed, 2), spec.n_test, spec.input_dim, spec.class_count,
                              spec.cluster_spread, spec.confusable_pairs, spec.pair_separation,
                              "test");
    bundle.probe =
        gen_clustered_classes(salted_seed(seed, 3), spec.n_probe, spec.input_dim, spec.class_count,
                              spec.cluster_spread, spec.confusable_pairs, spec.pair_separation,
                              "probe");
  } else if (spec.kind == "csv") {
    bundle.train = load_csv(spec.train_path, spec.label_column, "train");
    bundle.test = spec.test_path.empty() ? bundle.train
                                         : load_csv(spec.test_path, spec.label_column, "test");
  } else if (spec.kind == "idx") {
    bundle.train = load_idx(spec.train_images, spec.train_labels, "train");
    bundle.test = (spec.test_images.empty())
                      ? bundle.train
                      : load_idx(spec.test_images, spec.test_labels, "test");
  } else {
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
  }

  if (spec.kind == "csv" || spec.kind == "idx") {
    const bool normalize = spec.normalize.value_or(spec.kind == "idx");
    if (normalize) {
      const std::vector<double> means = fit_feature_means(bundle.train);
      center_features(bundle.train, means);
      center_features(bundle.test, means);
    }
    // Probe: deterministic prefix of the test split.
    const std::size_t probe_n = std::min(spec.n_probe, bundle.test.size());
    std::vector<std::size_t> idx(probe_n);
    for (std::size_t i = 0; i < probe_n; ++i) idx[i] = i;
    const Batch head = gather(bundle.test, idx);
    bundle.probe = Dataset{head.inputs, head.labels, bundle.test.class_count, "probe",
                           bundle.test.feature_means};
    // File-backed classes: align counts so argmax predictions stay in range.
    const int classes = std::max(bundle.train.class_count, bundle.test.class_count);
    bundle.train.class_count = classes;
    bundle.test.class_count = classes;
    bundle.probe.class_count = classes;
  }
  bundle.train.validate();
  bundle.test.validate();
  bundle.probe.validate();
  return bundle;
}

TrainTemplate TrainTemplate::from_json(const nlohmann::json& j) {
  TrainTemplate t;
  if (j.contains("hidden_layers")) {
    t.hidden_layers = j.at("hidden_layers").get<std::vector<std::size_t>>();
  }
  if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("total_iterations")) t.total_iterations = j.at("total_iterations").get<std::int64_t>();
  if (j.contains("optimizer")) {
    const nlohmann::json& o = j.at("optimizer");
    if (o.contains("learning_rate")) t.optimizer.learning_rate = o.at("learning_rate").get<double>();
    if (o.contains("momentum")) t.optimizer.momentum = o.at("momentum").get<double>();
    if (o.contains("weight_decay")) t.optimizer.weight_decay = o.at("weight_decay").get<double>();
    if (o.contains("lr_schedule")) {
      for (const auto& entry : o.at("lr_schedule")) {
        t.optimizer.lr_schedule.emplace_back(entry.at(0).get<std::int64_t>(),
                                             entry.at(1).get<double>());
      }
    }
  }
  if (j.contains("mcl_meta_iterations")) t.mcl_meta_iterations = j.at("mcl_meta_iterations").get<int>();
  if (j.contains("mcl_inner_iterations")) {
    t.mcl_inner_iterations = j.at("mcl_inner_iterations").get<std::int64_t>();
  }
  if (j.contains("dey_weight_floor")) t.dey_weight_floor = j.at("dey_weight_floor").get<double>();
  if (j.contains("loss_reduction")) {
    const std::string r = j.at("loss_reduction").get<std::string>();
    if (r == "mean") t.loss_reduction = LossReduction::Mean;
    else if (r == "sum") t.loss_reduction = LossReduction::Sum;
    else throw ConfigError("loss_reduction must be 'mean' or 'sum'");
  }
  if (j.contains("log_interval")) t.log_interval = j.at("log_interval").get<std::int64_t>();
  if (j.contains("init_from")) t.init_from = j.at("init_from").get<std::string>();
  return t;
}

nlohmann::json TrainTemplate::to_json() const {
  nlohmann::json j;
  j["hidden_layers"] = hidden_layers;
  j["batch_size"] = batch_size;
  j["total_iterations"] = total_iterations;
  nlohmann::json o;
  o["learning_rate"] = optimizer.learning_rate;
  o["momentum"] = optimizer.momentum;
  o["weight_decay"] = optimizer.weight_decay;
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& [it, lr] : optimizer.lr_schedule) schedule.push_back({it, lr});
  o["lr_schedule"] = schedule;
  j["optimizer"] = o;
  j["mcl_meta_iterations"] = mcl_meta_iterations;
  j["mcl_inner_iterations"] = mcl_inner_iterations;
  j["dey_weight_floor"] = dey_weight_floor;
  j["loss_reduction"] = loss_reduction == LossReduction::Mean ? "mean" : "sum";
  j["log_interval"] = log_interval;
  if (init_from.has_value()) j["init_from"] = *init_from;
  return j;
}

TrainConfig TrainTemplate::instantiate(Method method, int members, int k, std::uint64_t seed,
                                       std::size_t input_dim, std::size_t class_count) const {
  TrainConfig config;
  config.network = NetworkSpec::dense(input_dim, hidden_layers, class_count);
  config.member_count = members;
  config.winners_per_example = k;
  config.batch_size = batch_size;
  config.total_iterations = total_iterations;
  config.optimizer = optimizer;
  config.seed = seed;
  config.method = method;
  config.mcl_meta_iterations = mcl_meta_iterations;
  config.mcl_inner_iterations = mcl_inner_iterations;
  config.dey_weight_floor = dey_weight_floor;
  config.loss_reduction = loss_reduction;
  config.log_interval = log_interval;
  config.init_from = init_from;
  return config;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig config;
  config.dataset = DatasetSpec::from_json(j.at("dataset"));
  for (const auto& m : j.at("methods")) {
    config.methods.push_back(method_from_string(m.get<std::string>()));
  }
  config.ensemble_sizes = j.at("ensemble_sizes").get<std::vector<int>>();
  if (j.contains("k_values")) config.k_values = j.at("k_values").get<std::vector<int>>();
  config.replicate_seeds = j.at("replicate_seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("train")) config.train = TrainTemplate::from_json(j.at("train"));
  if (j.contains("output_dir")) config.output_dir = j.at("output_dir").get<std::string>();
  config.validate();
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed experiment config " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset.to_json();
  nlohmann::json methods_json = nlohmann::json::array();
  for (Method m : methods) methods_json.push_back(method_to_string(m));
  j["methods"] = methods_json;
  j["ensemble_sizes"] = ensemble_sizes;
  j["k_values"] = k_values;
  j["replicate_seeds"] = replicate_seeds;
  j["train"] = train.to_json();
  j["output_dir"] = output_dir;
  return j;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("experiment needs at least one method");
  if (ensemble_sizes.empty()) throw ConfigError("experiment needs at least one ensemble size");
  if (k_values.empty()) throw ConfigError("experiment needs at least one k value");
  if (replicate_seeds.empty()) throw ConfigError("experiment needs at least one replicate seed");
  for (int m : ensemble_sizes) {
    if (m < 1) throw ConfigError("ensemble sizes must be >= 1");
  }
  const int min_m = *std::min_element(ensemble_sizes.begin(), ensemble_sizes.end());
  for (int k : k_values) {
    if (k < 1 || k > min_m) {
      throw ConfigError("every k must satisfy 1 <= k <= every ensemble size (k=" +
                        std::to_string(k) + ", min size=" + std::to_string(min_m) + ")");
    }
  }
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["cell_id"] = cell_id;
  j["method"] = method_to_string(method);
  j["members"] = members;
  j["k"] = k;
  j["seed"] = seed;
  j["engine_version"] = engine_version;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["config"] = config_snapshot;
  if (failed) {
    j["failed"] = true;
    j["error"] = error;
  } else {
    j["report"] = nlohmann::json::parse(report.to_json());
  }
  return j;
}

namespace {

struct Cell {
  Method method;
  int members;
  int k;
  std::uint64_t seed;
};

void persist_record(const std::string& output_dir, const RunRecord& record) {
  namespace fs = std::filesystem;
  const fs::path cell_dir = fs::path(output_dir) / "runs" / record.cell_id;
  fs::create_directories(cell_dir);
  if (record.failed) {
    std::ofstream err(cell_dir / "error.txt");
    err << record.error << '\n';
    return;
  }
  {
    std::ofstream out(cell_dir / "record.json");
    out << record.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(cell_dir / "history.csv");
    record.history.write_csv(out);
  }
  if (record.ensemble.has_value()) {
    save_ensemble(*record.ensemble, (cell_dir / "ensemble.oens").string());
  }
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, int jobs) {
  config.validate();
  if (jobs < 1) throw ConfigError("jobs must be >= 1");

  // Synthetic data varies with the replicate seed unless the spec pins a
  // data_seed; materialize once per seed either way.
  std::map<std::uint64_t, DatasetBundle> bundles;
  for (std::uint64_t seed : config.replicate_seeds) {
    if (!bundles.contains(seed)) {
      bundles.emplace(seed,
                      materialize_dataset(config.dataset, config.dataset.data_seed.value_or(seed)));
    }
  }

  std::vector<Cell> cells;
  for (Method method : config.methods) {
    for (int members : config.ensemble_sizes) {
      for (int k : config.k_values) {
        for (std::uint64_t seed : config.replicate_seeds) {
          cells.push_back({method, members, k, seed});
        }
      }
    }
  }

  std::vector<RunRecord> records(cells.size());
  const auto run_cell = [&](std::size_t index) {
    const Cell& cell = cells[index];
    const DatasetBundle& bundle = bundles.at(cell.seed);
    RunRecord record;
    record.method = cell.method;
    record.members = cell.members;
    record.k = cell.k;
    record.seed = cell.seed;
    record.engine_version = kEngineVersion;
    record.cell_id = method_to_string(cell.method) + "_M" + std::to_string(cell.members) + "_k" +
                     std::to_string(cell.k) + "_s" + std::to_string(cell.seed);
    try {
      const TrainConfig train_config =
          config.train.instantiate(cell.method, cell.members, cell.k, cell.seed,
                                   bundle.train.input_dim(),
                                   static_cast<std::size_t>(bundle.train.class_count));
      nlohmann::json snapshot;
      snapshot["dataset"] = config.dataset.to_json();
      snapshot["train"] = config.train.to_json();
      snapshot["network"] = train_config.network.canonical();
      snapshot["method"] = method_to_string(cell.method);
      snapshot["members"] = cell.members;
      snapshot["k"] = cell.k;
      snapshot["seed"] = cell.seed;
      record.config_snapshot = std::move(snapshot);

      const auto started = std::chrono::steady_clock::now();
      TrainResult result = train(train_config, bundle.train, bundle.probe);
      const auto finished = std::chrono::steady_clock::now();
      record.wall_clock_seconds = std::chrono::duration<double>(finished - started).count();
      record.report = evaluate(result.ensemble, bundle.test);
      record.history = std::move(result.history);
      record.ensemble = std::move(result.ensemble);
    } catch (const std::exception& e) {
      record.failed = true;
      record.error = e.what();
      log_error("cell " + record.cell_id + " failed: " + record.error);
    }
    records[index] = std::move(record);
  };

  if (jobs == 1 || cells.size() <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const std::size_t worker_count = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells.size());
    workers.reserve(worker_count);
    for (std::size_t w = 0; w < worker_count; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(i);
        }
      });
    }
    for (std::thread& t : workers) t.join();
  }

  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    for (const RunRecord& record : records) {
      persist_record(config.output_dir, record);
    }
    {
      std::ofstream out(std::filesystem::path(config.output_dir) / "sweep.csv");
      out << emit_sweep_table(records);
    }
    nlohmann::json specialization = nlohmann::json::array();
    for (const RunRecord& record : records) {
      if (!record.failed && record.k == 1) {
        specialization.push_back(emit_specialization_report(record));
      }
    }
    std::ofstream out(std::filesystem::path(config.output_dir) / "specialization.json");
    out << specialization.dump(2) << '\n';
  }
  return records;
}

std::string emit_sweep_table(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "method,M,k,seed,oracle_accuracy,oracle_loss,wall_clock\n";
  struct Key {
    std::string method;
    int members;
    int k;
    bool operator<(const Key& other) const {
      return std::tie(method, members, k) < std::tie(other.method, other.members, other.k);
    }
  };
  struct Agg {
    double accuracy = 0.0, loss = 0.0, wall = 0.0;
    int count = 0;
  };
  std::vector<Key> order;
  std::map<Key, Agg> groups;
  for (const RunRecord& record : records) {
    if (record.failed) continue;
    out << method_to_string(record.method) << ',' << record.members << ',' << record.k << ','
        << record.seed << ',' << format_double(record.report.oracle_accuracy) << ','
        << format_double(record.report.oracle_loss) << ','
        << format_double(record.wall_clock_seconds) << '\n';
    const Key key{method_to_string(record.method), record.members, record.k};
    if (!groups.contains(key)) order.push_back(key);
    Agg& agg = groups[key];
    agg.accuracy += record.report.oracle_accuracy;
    agg.loss += record.report.oracle_loss;
    agg.wall += record.wall_clock_seconds;
    ++agg.count;
  }
  out << "\n# mean over seeds\n";
  out << "method,M,k,oracle_accuracy,oracle_loss,wall_clock\n";
  for (const Key& key : order) {
    const Agg& agg = groups.at(key);
    const double n = static_cast<double>(agg.count);
    out << key.method << ',' << key.members << ',' << key.k << ','
        << format_double(agg.accuracy / n) << ',' << format_double(agg.loss / n) << ','
        << format_double(agg.wall / n) << '\n';
  }
  return out.str();
}

nlohmann::json emit_specialization_report(const RunRecord& record) {
  if (record.failed) throw ConfigError("cannot report specialization for a failed cell");
  if (record.k != 1) throw ConfigError("specialization report requires a k=1 record");
  const WinnerDistribution& dist = record.report.winner_distribution;
  nlohmann::json j;
  j["cell_id"] = record.cell_id;
  j["method"] = method_to_string(record.method);
  j["members"] = record.members;
  j["seed"] = record.seed;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t c = 0; c < dist.class_count; ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t m = 0; m < dist.member_count; ++m) row.push_back(dist.at(c, m));
    rows.push_back(row);
  }
  j["winner_distribution"] = rows;
  if (!dist.missing_classes.empty()) j["missing_classes"] = dist.missing_classes;
  j["specialization_entropy"] = record.report.specialization_entropy;

  nlohmann::json summaries = nlohmann::json::array();
  for (std::size_t m = 0; m < dist.member_count; ++m) {
    nlohmann::json s;
    s["member"] = m;
    nlohmann::json majority = nlohmann::json::array();
    double share = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < dist.class_count; ++c) {
      const double value = dist.at(c, m);
      if (std::isnan(value)) continue;
      ++present;
      share += value;
      bool is_max = true;
      for (std::size_t other = 0; other < dist.member_count; ++other) {
        if (other != m && dist.at(c, other) > value) {
          is_max = false;
          break;
        }
      }
      if (is_max) majority.push_back(c);
    }
    s["majority_classes"] = majority;
    s["mean_class_share"] = present ? share / static_cast<double>(present) : 0.0;
    summaries.push_back(s);
  }
  j["member_summaries"] = summaries;
  return j;
}

TimingComparison compare_timing(const std::vector<RunRecord>& records) {
  TimingComparison timing;
  bool saw_mcl = false, saw_smcl = false;
  for (const RunRecord& record : records) {
    if (record.failed) continue;
    if (record.method == Method::Mcl) {
      timing.mcl_seconds += record.wall_clock_seconds;
      saw_mcl = true;
    } else if (record.method == Method::Smcl) {
      timing.smcl_seconds += record.wall_clock_seconds;
      saw_smcl = true;
    }
  }
  if (!saw_mcl || !saw_smcl) {
    throw ConfigError("timing comparison needs both mcl and smcl records");
  }
  timing.ratio = timing.mcl_seconds / timing.smcl_seconds;
  return timing;
}

}  // namespace oens
