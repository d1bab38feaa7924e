#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oens/tensor.hpp"

namespace oens {

/// Immutable labeled set: inputs [N x D], integer labels in [0, class_count).
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  int class_count = 0;
  std::string split_tag;
  /// Per-feature means subtracted during normalization (empty when raw).
  /// Always fitted on the training split and carried to other splits.
  std::vector<double> feature_means;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return inputs.cols(); }
  void validate() const;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the source dataset
};

/// Deterministic epoch shuffling. The permutation of epoch e is a pure
/// function of (seed, e, n); batches are consumed in permutation order and
/// the final partial batch is kept.
struct BatchPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;

  BatchPlan() = default;
  BatchPlan(std::uint64_t seed_in, std::size_t batch_size_in)
      : seed(seed_in), batch_size(batch_size_in) {}

  std::size_t batches_per_epoch(std::size_t n) const {
    return (n + batch_size - 1) / batch_size;
  }

 private:
  friend std::vector<std::size_t> batch_indices(const BatchPlan&, std::size_t, std::int64_t);
  // one-epoch permutation cache; regenerating per batch would be quadratic
  mutable std::int64_t cached_epoch_ = -1;
  mutable std::size_t cached_n_ = 0;
  mutable std::vector<std::size_t> cached_perm_;
};

/// Index set of the batch at `iteration` over a pool of n examples.
std::vector<std::size_t> batch_indices(const BatchPlan& plan, std::size_t n,
                                       std::int64_t iteration);

/// Materializes the batch at `iteration` over the whole dataset.
Batch next_batch(const BatchPlan& plan, const Dataset& dataset, std::int64_t iteration);

/// Same, restricted to a subset of dataset positions (used for partitions).
Batch next_batch_subset(const BatchPlan& plan, const Dataset& dataset,
                        std::span<const std::size_t> subset, std::int64_t iteration);

Batch gather(const Dataset& dataset, std::span<const std::size_t> indices);

/// Inputs from one standard-normal blob; labels drawn from mode_priors
/// independently of the inputs. No predictor of x can beat max(mode_priors)
/// in expectation, while a mode_count-member oracle can reach 1.0.
Dataset gen_ambiguous(std::uint64_t seed, std::size_t n, std::size_t input_dim,
                      std::size_t mode_count, const std::vector<double>& mode_priors,
                      std::string split_tag = "train");

/// One Gaussian cluster per class, balanced labels (counts within +-1).
/// Each confusable pair is moved to share its midpoint: the two centers end
/// up `pair_separation` apart, overlapping heavily for small separations.
Dataset gen_clustered_classes(std::uint64_t seed, std::size_t n, std::size_t input_dim,
                              std::size_t class_count, double cluster_spread,
                              const std::vector<std::pair<int, int>>& confusable_pairs,
                              double pair_separation = 0.1, std::string split_tag = "train");

/// Big-endian IDX pair (magic 0x803 images / 0x801 labels), pixels scaled to
/// [0, 1]. Feature centering is a separate step via fit/apply below.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::string split_tag = "train");

/// Headered numeric CSV; all non-label columns become features.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::string split_tag = "train");

std::vector<double> fit_feature_means(const Dataset& train);
void center_features(Dataset& dataset, const std::vector<double>& means);

/// CSV export (header f0..f{D-1},label) used for reproducibility audits.
void write_csv(const Dataset& dataset, const std::string& path);

}  // namespace oens
