#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oens/network.hpp"

namespace oens {

struct EnsembleMember {
  NetworkSpec spec;
  ParameterSet params;
};

/// Ordered collection of trained (or training) members. All members must
/// agree on input width and class count.
struct Ensemble {
  std::vector<EnsembleMember> members;

  std::size_t member_count() const { return members.size(); }
  std::size_t input_dim() const { return members.front().spec.input_dim(); }
  std::size_t class_count() const { return members.front().spec.class_count(); }
  void validate() const;
};

/// B x M matrix of non-negative per-example per-member losses.
struct LossMatrix {
  std::size_t example_count = 0;
  std::size_t member_count = 0;
  std::vector<double> values;  // row-major

  static LossMatrix zeros(std::size_t examples, std::size_t members) {
    return {examples, members, std::vector<double>(examples * members, 0.0)};
  }
  double at(std::size_t i, std::size_t m) const { return values[i * member_count + m]; }
  double& at(std::size_t i, std::size_t m) { return values[i * member_count + m]; }
};

/// B x M binary indicators; every row has exactly `winners_per_example` ones.
struct AssignmentMatrix {
  std::size_t example_count = 0;
  std::size_t member_count = 0;
  int winners_per_example = 1;
  std::vector<std::uint8_t> indicators;  // row-major

  bool won(std::size_t i, std::size_t m) const { return indicators[i * member_count + m] != 0; }
};

/// Per-class winner shares. percentages is C x M row-major; a row of a class
/// absent from the evaluation set is NaN and its index is listed in
/// missing_classes rather than being silently zeroed.
struct WinnerDistribution {
  std::size_t class_count = 0;
  std::size_t member_count = 0;
  std::vector<double> percentages;
  std::vector<std::size_t> missing_classes;

  double at(std::size_t c, std::size_t m) const { return percentages[c * member_count + m]; }
};

struct OracleReport {
  double oracle_loss = 0.0;
  double oracle_accuracy = 0.0;
  std::vector<double> per_member_accuracy;
  WinnerDistribution winner_distribution;
  double specialization_entropy = 0.0;

  /// JSON object with keys oracle_loss, oracle_accuracy, per_member_accuracy,
  /// winner_distribution, specialization_entropy (NaN rows serialize as null).
  std::string to_json() const;
};

/// Entry (i, m) = softmax cross-entropy of member m on example i.
LossMatrix per_member_losses(const Ensemble& ensemble, const Tensor& inputs,
                             const std::vector<int>& labels);

/// Same, evaluated in fixed-size chunks to bound peak activation memory.
LossMatrix per_member_losses_chunked(const Ensemble& ensemble, const Tensor& inputs,
                                     const std::vector<int>& labels, std::size_t chunk = 512);

/// Marks the k lowest-loss members per row; ties go to the lowest member
/// index so repeated calls are identical.
AssignmentMatrix assign_winners(const LossMatrix& losses, int k);

/// Mean over examples of the row-minimum loss. (The summed form used in some
/// reports is this value times the example count.)
double oracle_loss(const LossMatrix& losses);

/// Fraction of examples where at least one member's argmax equals the label.
double oracle_accuracy(const Ensemble& ensemble, const Tensor& inputs,
                       const std::vector<int>& labels);

/// Row c: percentage of class-c examples won by each member (k=1 assignments).
WinnerDistribution winner_distribution(const AssignmentMatrix& assignments,
                                       const std::vector<int>& labels, std::size_t class_count);

/// Mean over present classes of the Shannon entropy (natural log) of the
/// row normalized to probabilities. 0 for one-hot rows, ln(M) for uniform.
double specialization_entropy(const WinnerDistribution& distribution);

}  // namespace oens
