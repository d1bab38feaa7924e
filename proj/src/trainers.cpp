#include "oens/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oens/checkpoint.hpp"
#include "oens/log.hpp"
#include "oens/rng.hpp"

namespace oens {

Method method_from_string(const std::string& name) {
  if (name == "smcl") return Method::Smcl;
  if (name == "mcl") return Method::Mcl;
  if (name == "independent") return Method::Independent;
  if (name == "dey") return Method::Dey;
  throw ConfigError("unknown method '" + name + "' (expected smcl|mcl|independent|dey)");
}

std::string method_to_string(Method method) {
  switch (method) {
    case Method::Smcl: return "smcl";
    case Method::Mcl: return "mcl";
    case Method::Independent: return "independent";
    case Method::Dey: return "dey";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!network.valid()) throw ConfigError("train config needs a network spec");
  if (member_count < 1) throw ConfigError("member_count must be >= 1");
  if (winners_per_example < 1 || winners_per_example > member_count) {
    throw ConfigError("winners_per_example must satisfy 1 <= k <= member_count (k=" +
                      std::to_string(winners_per_example) + ", members=" +
                      std::to_string(member_count) + ")");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (total_iterations <= 0) throw ConfigError("total_iterations must be positive");
  if (mcl_meta_iterations < 1) throw ConfigError("mcl_meta_iterations must be >= 1");
  if (mcl_inner_iterations < 0) throw ConfigError("mcl_inner_iterations must be >= 0");
  if (dey_weight_floor <= 0.0 || dey_weight_floor > 1.0) {
    throw ConfigError("dey_weight_floor must be in (0, 1]");
  }
  if (log_interval <= 0) throw ConfigError("log_interval must be positive");
  optimizer.validate();
}

std::int64_t TrainConfig::resolved_mcl_inner() const {
  if (mcl_inner_iterations > 0) return mcl_inner_iterations;
  return std::max<std::int64_t>(1, total_iterations / mcl_meta_iterations);
}

void TrainHistory::write_csv(std::ostream& out) const {
  const std::size_t members = rows.empty() ? 0 : rows.front().member_loss.size();
  out << "iteration,oracle_loss";
  for (std::size_t m = 0; m < members; ++m) out << ",member_" << m << "_loss";
  out << ",learning_rate\n";
  out.precision(17);
  for (const HistoryRow& row : rows) {
    out << row.iteration << ',' << row.oracle_loss;
    for (double v : row.member_loss) out << ',' << v;
    out << ',' << row.learning_rate << '\n';
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  write_csv(out);
  return out.str();
}

std::uint64_t batch_stream_seed(std::uint64_t run_seed, std::uint64_t member) {
  // One SplitMix64 round keyed by the member index; member streams never
  // collide with the init or data-synthesis streams (purpose-separated).
  std::uint64_t s = run_seed ^ (member * 0x9e3779b97f4a7c15ULL);
  return detail::splitmix64(s);
}

HistoryRow probe_row(const Ensemble& ensemble, const Dataset& probe, std::int64_t iteration,
                     double learning_rate) {
  HistoryRow row;
  row.iteration = iteration;
  row.learning_rate = learning_rate;
  const LossMatrix losses = per_member_losses_chunked(ensemble, probe.inputs, probe.labels);
  row.oracle_loss = oracle_loss(losses);
  row.member_loss.assign(ensemble.member_count(), 0.0);
  for (std::size_t i = 0; i < losses.example_count; ++i) {
    for (std::size_t m = 0; m < losses.member_count; ++m) {
      row.member_loss[m] += losses.at(i, m);
    }
  }
  for (double& v : row.member_loss) v /= static_cast<double>(losses.example_count);
  return row;
}

namespace {

Ensemble initial_ensemble(const TrainConfig& config) {
  if (config.init_from.has_value()) {
    Ensemble loaded = load_ensemble(*config.init_from);
    if (loaded.member_count() != static_cast<std::size_t>(config.member_count)) {
      throw ConfigError("init checkpoint holds " + std::to_string(loaded.member_count()) +
                        " members but config asks for " + std::to_string(config.member_count));
    }
    for (const EnsembleMember& m : loaded.members) {
      if (!(m.spec == config.network)) {
        throw ConfigError("init checkpoint network spec does not match config");
      }
    }
    return loaded;
  }
  Ensemble ensemble;
  for (int m = 0; m < config.member_count; ++m) {
    ensemble.members.push_back(
        {config.network, init_params(config.network, config.seed + static_cast<std::uint64_t>(m))});
  }
  return ensemble;
}

void maybe_log_probe(const TrainConfig& config, const Ensemble& ensemble, const Dataset& probe,
                     std::int64_t iteration, TrainHistory& history) {
  if (iteration % config.log_interval != 0) return;
  history.rows.push_back(
      probe_row(ensemble, probe, iteration, config.optimizer.learning_rate_at(iteration)));
}

void log_final_probe(const TrainConfig& config, const Ensemble& ensemble, const Dataset& probe,
                     std::int64_t iteration, TrainHistory& history) {
  if (!history.rows.empty() && history.rows.back().iteration == iteration) return;
  history.rows.push_back(
      probe_row(ensemble, probe, iteration, config.optimizer.learning_rate_at(iteration)));
}

}  // namespace

TrainResult train_smcl(const TrainConfig& config, const Dataset& train, const Dataset& probe) {
  config.validate();
  train.validate();
  probe.validate();
  const int k = config.winners_per_example;
  Ensemble ensemble = initial_ensemble(config);
  TrainHistory history;
  const BatchPlan plan{batch_stream_seed(config.seed, 0), config.batch_size};
  std::vector<std::int64_t> starved(ensemble.member_count(), 0);

  std::vector<ForwardTrace> traces(ensemble.member_count());
  for (std::int64_t it = 0; it < config.total_iterations; ++it) {
    maybe_log_probe(config, ensemble, probe, it, history);
    const Batch batch = next_batch(plan, train, it);
    const std::size_t b = batch.labels.size();

    // Forward every member once; winners are selected from these pre-update
    // losses, then each member consumes only the rows it won.
    LossMatrix losses = LossMatrix::zeros(b, ensemble.member_count());
    for (std::size_t m = 0; m < ensemble.member_count(); ++m) {
      const Tensor logits =
          forward(ensemble.members[m].spec, ensemble.members[m].params, batch.inputs, &traces[m]);
      const std::vector<double> per_example = loss_softmax_xent(logits, batch.labels);
      for (std::size_t i = 0; i < b; ++i) losses.at(i, m) = per_example[i];
    }
    const AssignmentMatrix winners = assign_winners(losses, k);

    std::vector<double> weights(b);
    for (std::size_t m = 0; m < ensemble.member_count(); ++m) {
      std::size_t won = 0;
      for (std::size_t i = 0; i < b; ++i) {
        weights[i] = winners.won(i, m) ? 1.0 : 0.0;
        won += winners.won(i, m);
      }
      if (won == 0) {
        ++starved[m];  // no winners, no update: parameters stay bit-identical
        continue;
      }
      EnsembleMember& member = ensemble.members[m];
      const std::vector<Tensor> grads = backward(member.spec, member.params, traces[m],
                                                 batch.labels, weights, config.loss_reduction);
      sgd_step(member.params, grads, config.optimizer, it);
    }
  }
  for (std::size_t m = 0; m < ensemble.member_count(); ++m) {
    if (starved[m] > 0) {
      log_info("smcl: member " + std::to_string(m) + " received no winners in " +
               std::to_string(starved[m]) + " batches");
    }
  }
  log_final_probe(config, ensemble, probe, config.total_iterations, history);
  return {std::move(ensemble), std::move(history)};
}

TrainResult train_independent(const TrainConfig& config, const Dataset& train,
                              const Dataset& probe) {
  config.validate();
  train.validate();
  probe.validate();
  Ensemble ensemble = initial_ensemble(config);
  TrainHistory history;
  const BatchPlan plan{batch_stream_seed(config.seed, 0), config.batch_size};

  // Members are advanced in lockstep so the probe sees all of them at the
  // same step count; there is no cross-member interaction, so this is
  // member-wise identical to M separate runs.
  ForwardTrace trace;
  for (std::int64_t it = 0; it < config.total_iterations; ++it) {
    maybe_log_probe(config, ensemble, probe, it, history);
    const Batch batch = next_batch(plan, train, it);
    const std::vector<double> ones(batch.labels.size(), 1.0);
    for (EnsembleMember& member : ensemble.members) {
      forward(member.spec, member.params, batch.inputs, &trace);
      const std::vector<Tensor> grads =
          backward(member.spec, member.params, trace, batch.labels, ones, config.loss_reduction);
      sgd_step(member.params, grads, config.optimizer, it);
    }
  }
  log_final_probe(config, ensemble, probe, config.total_iterations, history);
  return {std::move(ensemble), std::move(history)};
}

TrainResult train_mcl(const TrainConfig& config, const Dataset& train, const Dataset& probe) {
  config.validate();
  train.validate();
  probe.validate();
  const std::size_t member_count = static_cast<std::size_t>(config.member_count);
  const std::int64_t inner = config.resolved_mcl_inner();
  Ensemble ensemble = initial_ensemble(config);
  TrainHistory history;

  // First partition: round-robin by example index.
  std::vector<std::vector<std::size_t>> partitions(member_count);
  for (std::size_t i = 0; i < train.size(); ++i) partitions[i % member_count].push_back(i);

  std::vector<BatchPlan> plans;
  plans.reserve(member_count);
  for (std::size_t m = 0; m < member_count; ++m) {
    plans.push_back(BatchPlan{batch_stream_seed(config.seed, m), config.batch_size});
  }
  // Per-member step counters persist across meta-iterations, so a member
  // whose partition is stable sees one continuous batch stream.
  std::vector<std::int64_t> steps(member_count, 0);

  history.rows.push_back(probe_row(ensemble, probe, 0, config.optimizer.learning_rate_at(0)));
  ForwardTrace trace;
  for (int meta = 0; meta < config.mcl_meta_iterations; ++meta) {
    for (std::size_t m = 0; m < member_count; ++m) {
      if (partitions[m].empty()) {
        log_info("mcl: member " + std::to_string(m) + " has no assigned examples in meta-iteration " +
                 std::to_string(meta) + "; skipping");
        continue;
      }
      EnsembleMember& member = ensemble.members[m];
      for (std::int64_t j = 0; j < inner; ++j) {
        const std::int64_t it = steps[m]++;
        const Batch batch = next_batch_subset(plans[m], train, partitions[m], it);
        const std::vector<double> ones(batch.labels.size(), 1.0);
        forward(member.spec, member.params, batch.inputs, &trace);
        const std::vector<Tensor> grads =
            backward(member.spec, member.params, trace, batch.labels, ones, config.loss_reduction);
        sgd_step(member.params, grads, config.optimizer, it);
      }
    }
    // Reassign every training example to its current min-loss member
    // (train loss, ties to the lowest index).
    const LossMatrix losses = per_member_losses_chunked(ensemble, train.inputs, train.labels);
    const AssignmentMatrix assignment = assign_winners(losses, 1);
    for (auto& p : partitions) p.clear();
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (std::size_t m = 0; m < member_count; ++m) {
        if (assignment.won(i, m)) {
          partitions[m].push_back(i);
          break;
        }
      }
    }
    const std::int64_t logical_iteration = static_cast<std::int64_t>(meta + 1) * inner;
    history.rows.push_back(probe_row(ensemble, probe, logical_iteration,
                                     config.optimizer.learning_rate_at(logical_iteration - 1)));
  }
  return {std::move(ensemble), std::move(history)};
}

std::vector<double> dey_weights(const Ensemble& trained, const Dataset& train, double floor) {
  std::vector<double> weights(train.size(), 1.0);
  if (trained.members.empty()) return weights;
  std::vector<std::uint8_t> covered(train.size(), 0);
  constexpr std::size_t kChunk = 512;
  for (const EnsembleMember& member : trained.members) {
    for (std::size_t start = 0; start < train.size(); start += kChunk) {
      const std::size_t count = std::min(kChunk, train.size() - start);
      std::vector<std::size_t> idx(count);
      for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
      const Batch part = gather(train, idx);
      const std::vector<int> preds =
          predict_classes(forward(member.spec, member.params, part.inputs));
      for (std::size_t i = 0; i < count; ++i) {
        if (preds[i] == part.labels[i]) covered[start + i] = 1;
      }
    }
  }
  // Bounded error measure (accuracy): weight = max(floor, 1 - covered).
  for (std::size_t i = 0; i < train.size(); ++i) {
    weights[i] = covered[i] ? floor : 1.0;
  }
  return weights;
}

TrainResult train_dey(const TrainConfig& config, const Dataset& train, const Dataset& probe) {
  config.validate();
  train.validate();
  probe.validate();
  const std::size_t member_count = static_cast<std::size_t>(config.member_count);
  // All members exist from the start (later ones at their init) so probe rows
  // always cover M columns; training itself is strictly sequential.
  Ensemble ensemble = initial_ensemble(config);
  TrainHistory history;
  const BatchPlan plan{batch_stream_seed(config.seed, 0), config.batch_size};

  std::vector<double> example_weights(train.size(), 1.0);
  ForwardTrace trace;
  for (std::size_t m = 0; m < member_count; ++m) {
    if (m > 0) {
      Ensemble trained;
      trained.members.assign(ensemble.members.begin(),
                             ensemble.members.begin() + static_cast<std::ptrdiff_t>(m));
      example_weights = dey_weights(trained, train, config.dey_weight_floor);
    }
    EnsembleMember& member = ensemble.members[m];
    std::vector<double> batch_weights;
    for (std::int64_t it = 0; it < config.total_iterations; ++it) {
      const std::int64_t global = static_cast<std::int64_t>(m) * config.total_iterations + it;
      maybe_log_probe(config, ensemble, probe, global, history);
      const Batch batch = next_batch(plan, train, it);
      batch_weights.resize(batch.labels.size());
      for (std::size_t i = 0; i < batch.indices.size(); ++i) {
        batch_weights[i] = example_weights[batch.indices[i]];
      }
      forward(member.spec, member.params, batch.inputs, &trace);
      const std::vector<Tensor> grads = backward(member.spec, member.params, trace, batch.labels,
                                                 batch_weights, config.loss_reduction);
      sgd_step(member.params, grads, config.optimizer, it);
    }
  }
  log_final_probe(config, ensemble, probe,
                  static_cast<std::int64_t>(member_count) * config.total_iterations, history);
  return {std::move(ensemble), std::move(history)};
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& probe) {
  switch (config.method) {
    case Method::Smcl: return train_smcl(config, train_set, probe);
    case Method::Mcl: return train_mcl(config, train_set, probe);
    case Method::Independent: return train_independent(config, train_set, probe);
    case Method::Dey: return train_dey(config, train_set, probe);
  }
  throw ConfigError("unhandled training method");
}

OracleReport evaluate(const Ensemble& ensemble, const Dataset& test, std::size_t batch) {
  ensemble.validate();
  test.validate();
  const LossMatrix losses = per_member_losses_chunked(ensemble, test.inputs, test.labels, batch);
  OracleReport report;
  report.oracle_loss = oracle_loss(losses);

  const std::size_t n = test.size();
  std::vector<std::uint8_t> any_hit(n, 0);
  report.per_member_accuracy.assign(ensemble.member_count(), 0.0);
  constexpr std::size_t kChunk = 512;
  for (std::size_t m = 0; m < ensemble.member_count(); ++m) {
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += kChunk) {
      const std::size_t count = std::min(kChunk, n - start);
      std::vector<std::size_t> idx(count);
      for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
      const Batch part = gather(test, idx);
      const std::vector<int> preds = predict_classes(
          forward(ensemble.members[m].spec, ensemble.members[m].params, part.inputs));
      for (std::size_t i = 0; i < count; ++i) {
        if (preds[i] == part.labels[i]) {
          ++correct;
          any_hit[start + i] = 1;
        }
      }
    }
    report.per_member_accuracy[m] = static_cast<double>(correct) / static_cast<double>(n);
  }
  std::size_t hits = 0;
  for (std::uint8_t h : any_hit) hits += h;
  report.oracle_accuracy = static_cast<double>(hits) / static_cast<double>(n);

  const AssignmentMatrix winners = assign_winners(losses, 1);
  report.winner_distribution =
      winner_distribution(winners, test.labels, static_cast<std::size_t>(test.class_count));
  report.specialization_entropy = specialization_entropy(report.winner_distribution);
  return report;
}

}  // namespace oens
