#include "oens/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace oens {

void Ensemble::validate() const {
  if (members.empty()) throw ConfigError("ensemble must have at least one member");
  const std::size_t d = members.front().spec.input_dim();
  const std::size_t c = members.front().spec.class_count();
  for (const EnsembleMember& m : members) {
    if (m.spec.input_dim() != d || m.spec.class_count() != c) {
      throw ShapeError("ensemble members must share input dim and class count");
    }
  }
}

LossMatrix per_member_losses(const Ensemble& ensemble, const Tensor& inputs,
                             const std::vector<int>& labels) {
  ensemble.validate();
  const std::size_t batch = inputs.rows();
  LossMatrix losses = LossMatrix::zeros(batch, ensemble.member_count());
  for (std::size_t m = 0; m < ensemble.member_count(); ++m) {
    const EnsembleMember& member = ensemble.members[m];
    const Tensor logits = forward(member.spec, member.params, inputs);
    const std::vector<double> per_example = loss_softmax_xent(logits, labels);
    for (std::size_t i = 0; i < batch; ++i) losses.at(i, m) = per_example[i];
  }
  return losses;
}

LossMatrix per_member_losses_chunked(const Ensemble& ensemble, const Tensor& inputs,
                                     const std::vector<int>& labels, std::size_t chunk) {
  const std::size_t n = inputs.rows();
  const std::size_t d = inputs.cols();
  if (chunk == 0 || n <= chunk) return per_member_losses(ensemble, inputs, labels);
  LossMatrix losses = LossMatrix::zeros(n, ensemble.member_count());
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Tensor part = Tensor::zeros({count, d});
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(start * d), count * d,
                part.data.begin());
    const std::vector<int> part_labels(labels.begin() + static_cast<std::ptrdiff_t>(start),
                                       labels.begin() + static_cast<std::ptrdiff_t>(start + count));
    const LossMatrix part_losses = per_member_losses(ensemble, part, part_labels);
    std::copy_n(part_losses.values.begin(), part_losses.values.size(),
                losses.values.begin() + static_cast<std::ptrdiff_t>(start * ensemble.member_count()));
  }
  return losses;
}

AssignmentMatrix assign_winners(const LossMatrix& losses, int k) {
  const std::size_t m_count = losses.member_count;
  if (k < 1 || static_cast<std::size_t>(k) > m_count) {
    throw ConfigError("winners per example must satisfy 1 <= k <= " + std::to_string(m_count) +
                      ", got " + std::to_string(k));
  }
  AssignmentMatrix out;
  out.example_count = losses.example_count;
  out.member_count = m_count;
  out.winners_per_example = k;
  out.indicators.assign(losses.example_count * m_count, 0);

  std::vector<std::size_t> order(m_count);
  for (std::size_t i = 0; i < losses.example_count; ++i) {
    std::iota(order.begin(), order.end(), 0);
    const double* row = &losses.values[i * m_count];
    // (loss, index) ordering makes ties deterministic: lowest index wins.
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [row](std::size_t a, std::size_t b) {
                        if (row[a] != row[b]) return row[a] < row[b];
                        return a < b;
                      });
    for (int j = 0; j < k; ++j) out.indicators[i * m_count + order[j]] = 1;
  }
  return out;
}

double oracle_loss(const LossMatrix& losses) {
  if (losses.example_count == 0) throw ConfigError("oracle loss of an empty loss matrix");
  double sum = 0.0;
  for (std::size_t i = 0; i < losses.example_count; ++i) {
    const double* row = &losses.values[i * losses.member_count];
    double best = row[0];
    for (std::size_t m = 1; m < losses.member_count; ++m) best = std::min(best, row[m]);
    sum += best;
  }
  return sum / static_cast<double>(losses.example_count);
}

double oracle_accuracy(const Ensemble& ensemble, const Tensor& inputs,
                       const std::vector<int>& labels) {
  ensemble.validate();
  const std::size_t n = inputs.rows();
  if (n == 0) throw ConfigError("oracle accuracy of an empty batch");
  std::vector<std::uint8_t> hit(n, 0);
  for (const EnsembleMember& member : ensemble.members) {
    const Tensor logits = forward(member.spec, member.params, inputs);
    const std::vector<int> preds = predict_classes(logits);
    for (std::size_t i = 0; i < n; ++i) {
      if (preds[i] == labels[i]) hit[i] = 1;
    }
  }
  std::size_t correct = 0;
  for (std::uint8_t h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(n);
}

WinnerDistribution winner_distribution(const AssignmentMatrix& assignments,
                                       const std::vector<int>& labels, std::size_t class_count) {
  if (assignments.winners_per_example != 1) {
    throw ConfigError("winner distribution requires k=1 assignments");
  }
  if (labels.size() != assignments.example_count) {
    throw ShapeError("label count does not match assignment rows");
  }
  const std::size_t m_count = assignments.member_count;
  WinnerDistribution dist;
  dist.class_count = class_count;
  dist.member_count = m_count;
  dist.percentages.assign(class_count * m_count, 0.0);

  std::vector<std::size_t> class_totals(class_count, 0);
  for (std::size_t i = 0; i < assignments.example_count; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= class_count) throw ConfigError("label out of range in winner distribution");
    ++class_totals[c];
    for (std::size_t m = 0; m < m_count; ++m) {
      if (assignments.won(i, m)) dist.percentages[c * m_count + m] += 1.0;
    }
  }
  for (std::size_t c = 0; c < class_count; ++c) {
    if (class_totals[c] == 0) {
      for (std::size_t m = 0; m < m_count; ++m) {
        dist.percentages[c * m_count + m] = std::numeric_limits<double>::quiet_NaN();
      }
      dist.missing_classes.push_back(c);
      continue;
    }
    for (std::size_t m = 0; m < m_count; ++m) {
      dist.percentages[c * m_count + m] *= 100.0 / static_cast<double>(class_totals[c]);
    }
  }
  return dist;
}

double specialization_entropy(const WinnerDistribution& distribution) {
  if (distribution.class_count == 0) throw ConfigError("entropy of an empty distribution");
  double total = 0.0;
  std::size_t rows = 0;
  for (std::size_t c = 0; c < distribution.class_count; ++c) {
    const double first = distribution.at(c, 0);
    if (std::isnan(first)) continue;  // absent class, flagged in missing_classes
    double entropy = 0.0;
    for (std::size_t m = 0; m < distribution.member_count; ++m) {
      const double p = distribution.at(c, m) / 100.0;
      if (p > 0.0) entropy -= p * std::log(p);
    }
    total += entropy;
    ++rows;
  }
  if (rows == 0) throw ConfigError("entropy undefined: every class is absent");
  return total / static_cast<double>(rows);
}

std::string OracleReport::to_json() const {
  nlohmann::json j;
  j["oracle_loss"] = oracle_loss;
  j["oracle_accuracy"] = oracle_accuracy;
  j["per_member_accuracy"] = per_member_accuracy;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t c = 0; c < winner_distribution.class_count; ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t m = 0; m < winner_distribution.member_count; ++m) {
      row.push_back(winner_distribution.at(c, m));  // NaN dumps as null
    }
    rows.push_back(row);
  }
  j["winner_distribution"] = rows;
  if (!winner_distribution.missing_classes.empty()) {
    j["missing_classes"] = winner_distribution.missing_classes;
  }
  j["specialization_entropy"] = specialization_entropy;
  return j.dump();
}

}  // namespace oens
