#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oens/dataset.hpp"
#include "oens/ensemble.hpp"
#include "oens/optimizer.hpp"

namespace oens {

enum class Method { Smcl, Mcl, Independent, Dey };

Method method_from_string(const std::string& name);
std::string method_to_string(Method method);

/// Full optimization recipe shared by all four trainers.
struct TrainConfig {
  NetworkSpec network;
  int member_count = 1;
  int winners_per_example = 1;  // k; k=1 routes each example to its best member
  std::size_t batch_size = 32;
  std::int64_t total_iterations = 1000;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  Method method = Method::Smcl;
  int mcl_meta_iterations = 5;
  std::int64_t mcl_inner_iterations = 0;  // 0 -> total_iterations / mcl_meta_iterations
  double dey_weight_floor = 0.01;
  LossReduction loss_reduction = LossReduction::Mean;
  std::int64_t log_interval = 50;
  std::optional<std::string> init_from;  // checkpoint path; cold start when absent

  void validate() const;
  std::int64_t resolved_mcl_inner() const;
};

struct HistoryRow {
  std::int64_t iteration = 0;
  double oracle_loss = 0.0;
  std::vector<double> member_loss;  // mean probe loss per member
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;

  /// CSV with header iteration,oracle_loss,member_0_loss,...,learning_rate.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
};

struct TrainResult {
  Ensemble ensemble;
  TrainHistory history;
};

/// Winner-take-gradient training: every batch, all members run forward, the
/// k lowest-loss members per example are selected, and each member's update
/// uses only the examples it won. A member that wins nothing in a batch is
/// left bit-unchanged by that batch.
TrainResult train_smcl(const TrainConfig& config, const Dataset& train, const Dataset& probe);

/// Block coordinate descent: members train for a fixed inner budget on their
/// assigned partition, then every example is reassigned to its current
/// min-loss member (ties to the lowest index). The first partition is
/// round-robin by example index.
TrainResult train_mcl(const TrainConfig& config, const Dataset& train, const Dataset& probe);

/// Classical baseline: M non-interacting trainings with seeds seed..seed+M-1
/// and an identical batch schedule.
TrainResult train_independent(const TrainConfig& config, const Dataset& train,
                              const Dataset& probe);

/// Sequential reweighting baseline: members train one at a time; examples any
/// earlier member already classifies correctly are down-weighted to the floor,
/// and weights scale each example's share of the batch gradient.
TrainResult train_dey(const TrainConfig& config, const Dataset& train, const Dataset& probe);

/// Dispatch on config.method.
TrainResult train(const TrainConfig& config, const Dataset& train, const Dataset& probe);

/// Per-example weights for the next Dey member: max(floor, 1 - covered_i),
/// where covered_i says whether any member in `trained` gets example i right.
std::vector<double> dey_weights(const Ensemble& trained, const Dataset& train, double floor);

/// Full oracle report (loss, accuracy, winner distribution, entropy) over a
/// test set, evaluated in batches.
OracleReport evaluate(const Ensemble& ensemble, const Dataset& test, std::size_t batch = 512);

/// Probe-set snapshot used for history rows.
HistoryRow probe_row(const Ensemble& ensemble, const Dataset& probe, std::int64_t iteration,
                     double learning_rate);

/// Seed of the batch-shuffle stream of member `member`. Trainers that share
/// one schedule across members use member 0's stream.
std::uint64_t batch_stream_seed(std::uint64_t run_seed, std::uint64_t member);

}  // namespace oens
