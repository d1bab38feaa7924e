#include "oens/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "oens/rng.hpp"

namespace oens {

void Dataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset must contain at least one example");
  if (inputs.rows() != labels.size()) throw ShapeError("dataset input/label count mismatch");
  if (class_count <= 0) throw ConfigError("dataset class_count must be positive");
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw ConfigError("dataset label out of range");
  }
  if (!inputs.all_finite()) throw NumericalError("dataset inputs contain non-finite values");
}

std::vector<std::size_t> batch_indices(const BatchPlan& plan, std::size_t n,
                                       std::int64_t iteration) {
  if (n == 0) throw ConfigError("batch plan over an empty pool");
  if (plan.batch_size == 0) throw ConfigError("batch_size must be positive");
  const std::size_t bpe = plan.batches_per_epoch(n);
  const std::int64_t epoch = iteration / static_cast<std::int64_t>(bpe);
  const std::size_t pos = static_cast<std::size_t>(iteration % static_cast<std::int64_t>(bpe));

  if (plan.cached_epoch_ != epoch || plan.cached_n_ != n) {
    plan.cached_perm_.resize(n);
    std::iota(plan.cached_perm_.begin(), plan.cached_perm_.end(), std::size_t{0});
    Rng rng = Rng::derive(plan.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
      std::swap(plan.cached_perm_[i], plan.cached_perm_[j]);
    }
    plan.cached_epoch_ = epoch;
    plan.cached_n_ = n;
  }
  const std::size_t begin = pos * plan.batch_size;
  const std::size_t end = std::min(n, begin + plan.batch_size);
  return std::vector<std::size_t>(plan.cached_perm_.begin() + static_cast<std::ptrdiff_t>(begin),
                                  plan.cached_perm_.begin() + static_cast<std::ptrdiff_t>(end));
}

Batch gather(const Dataset& dataset, std::span<const std::size_t> indices) {
  const std::size_t d = dataset.input_dim();
  Batch batch;
  batch.inputs = Tensor::zeros({indices.size(), d});
  batch.labels.resize(indices.size());
  batch.indices.assign(indices.begin(), indices.end());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(dataset.inputs.data.begin() + static_cast<std::ptrdiff_t>(indices[r] * d), d,
                batch.inputs.data.begin() + static_cast<std::ptrdiff_t>(r * d));
    batch.labels[r] = dataset.labels[indices[r]];
  }
  return batch;
}

Batch next_batch(const BatchPlan& plan, const Dataset& dataset, std::int64_t iteration) {
  return gather(dataset, batch_indices(plan, dataset.size(), iteration));
}

Batch next_batch_subset(const BatchPlan& plan, const Dataset& dataset,
                        std::span<const std::size_t> subset, std::int64_t iteration) {
  const std::vector<std::size_t> positions = batch_indices(plan, subset.size(), iteration);
  std::vector<std::size_t> mapped(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) mapped[i] = subset[positions[i]];
  return gather(dataset, mapped);
}

Dataset gen_ambiguous(std::uint64_t seed, std::size_t n, std::size_t input_dim,
                      std::size_t mode_count, const std::vector<double>& mode_priors,
                      std::string split_tag) {
  if (n == 0 || input_dim == 0 || mode_count == 0) {
    throw ConfigError("gen_ambiguous: n, input_dim and mode_count must be positive");
  }
  if (mode_priors.size() != mode_count) {
    throw ConfigError("gen_ambiguous: mode_priors length must equal mode_count");
  }
  double prior_sum = 0.0;
  for (double p : mode_priors) {
    if (p < 0.0) throw ConfigError("gen_ambiguous: priors must be non-negative");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9) throw ConfigError("gen_ambiguous: priors must sum to 1");

  Rng rng = Rng::derive(seed, Stream::DataSynthesis);
  Dataset ds;
  ds.split_tag = std::move(split_tag);
  ds.class_count = static_cast<int>(mode_count);
  ds.inputs = Tensor::zeros({n, input_dim});
  ds.labels.resize(n);
  for (double& v : ds.inputs.data) v = rng.next_gaussian();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.next_unit();
    double cumulative = 0.0;
    int label = static_cast<int>(mode_count) - 1;
    for (std::size_t m = 0; m < mode_count; ++m) {
      cumulative += mode_priors[m];
      if (u < cumulative) {
        label = static_cast<int>(m);
        break;
      }
    }
    ds.labels[i] = label;
  }
  return ds;
}

Dataset gen_clustered_classes(std::uint64_t seed, std::size_t n, std::size_t input_dim,
                              std::size_t class_count, double cluster_spread,
                              const std::vector<std::pair<int, int>>& confusable_pairs,
                              double pair_separation, std::string split_tag) {
  if (class_count < 2) throw ConfigError("gen_clustered_classes: class_count must be >= 2");
  if (n == 0 || input_dim == 0) throw ConfigError("gen_clustered_classes: n and input_dim must be positive");
  if (cluster_spread < 0.0 || pair_separation < 0.0) {
    throw ConfigError("gen_clustered_classes: spread and separation must be non-negative");
  }

  // Class centers on a radius-4 circle in the first two coordinates (evenly
  // spaced on a line when input_dim == 1), so untouched classes stay apart.
  constexpr double kRadius = 4.0;
  std::vector<std::vector<double>> centers(class_count, std::vector<double>(input_dim, 0.0));
  for (std::size_t c = 0; c < class_count; ++c) {
    if (input_dim == 1) {
      centers[c][0] = kRadius * (2.0 * static_cast<double>(c) / static_cast<double>(class_count - 1) - 1.0);
    } else {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                           static_cast<double>(class_count);
      centers[c][0] = kRadius * std::cos(angle);
      centers[c][1] = kRadius * std::sin(angle);
    }
  }
  std::set<int> paired;
  for (const auto& [a, b] : confusable_pairs) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= class_count ||
        static_cast<std::size_t>(b) >= class_count || a == b) {
      throw ConfigError("gen_clustered_classes: invalid confusable pair");
    }
    if (!paired.insert(a).second || !paired.insert(b).second) {
      throw ConfigError("gen_clustered_classes: a class may appear in one confusable pair only");
    }
    std::vector<double> mid(input_dim), dir(input_dim);
    double norm = 0.0;
    for (std::size_t d = 0; d < input_dim; ++d) {
      mid[d] = 0.5 * (centers[a][d] + centers[b][d]);
      dir[d] = centers[b][d] - centers[a][d];
      norm += dir[d] * dir[d];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      dir.assign(input_dim, 0.0);
      dir[0] = 1.0;
      norm = 1.0;
    }
    for (std::size_t d = 0; d < input_dim; ++d) {
      const double unit = dir[d] / norm;
      centers[a][d] = mid[d] - 0.5 * pair_separation * unit;
      centers[b][d] = mid[d] + 0.5 * pair_separation * unit;
    }
  }

  // Balanced labels: counts differ by at most one across classes.
  std::vector<int> labels;
  labels.reserve(n);
  const std::size_t base = n / class_count;
  const std::size_t extra = n % class_count;
  for (std::size_t c = 0; c < class_count; ++c) {
    const std::size_t count = base + (c < extra ? 1 : 0);
    labels.insert(labels.end(), count, static_cast<int>(c));
  }

  Rng rng = Rng::derive(seed, Stream::DataSynthesis);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(labels[i], labels[j]);
  }

  Dataset ds;
  ds.split_tag = std::move(split_tag);
  ds.class_count = static_cast<int>(class_count);
  ds.labels = std::move(labels);
  ds.inputs = Tensor::zeros({n, input_dim});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& center = centers[static_cast<std::size_t>(ds.labels[i])];
    for (std::size_t d = 0; d < input_dim; ++d) {
      ds.inputs.data[i * input_dim + d] = center[d] + cluster_spread * rng.next_gaussian();
    }
  }
  return ds;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw IoError("truncated IDX file: " + path);
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
         (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::string split_tag) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw IoError("cannot open IDX image file: " + images_path);
  if (read_be_u32(images, images_path) != 0x00000803u) {
    throw IoError("bad IDX image magic in " + images_path + " (expected 0x00000803)");
  }
  const std::uint32_t count = read_be_u32(images, images_path);
  const std::uint32_t rows = read_be_u32(images, images_path);
  const std::uint32_t cols = read_be_u32(images, images_path);
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  if (count == 0 || dim == 0) throw IoError("empty IDX image file: " + images_path);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * dim);
  images.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (images.gcount() != static_cast<std::streamsize>(pixels.size())) {
    throw IoError("truncated IDX image payload: " + images_path);
  }

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw IoError("cannot open IDX label file: " + labels_path);
  if (read_be_u32(labels, labels_path) != 0x00000801u) {
    throw IoError("bad IDX label magic in " + labels_path + " (expected 0x00000801)");
  }
  const std::uint32_t label_count = read_be_u32(labels, labels_path);
  if (label_count != count) {
    throw IoError("IDX image/label count mismatch: " + std::to_string(count) + " images vs " +
                  std::to_string(label_count) + " labels");
  }
  std::vector<unsigned char> raw_labels(label_count);
  labels.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(label_count));
  if (labels.gcount() != static_cast<std::streamsize>(label_count)) {
    throw IoError("truncated IDX label payload: " + labels_path);
  }

  Dataset ds;
  ds.split_tag = std::move(split_tag);
  ds.inputs = Tensor::zeros({count, dim});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    ds.inputs.data[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  ds.labels.resize(label_count);
  int max_label = 0;
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    ds.labels[i] = static_cast<int>(raw_labels[i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

Dataset load_csv(const std::string& path, const std::string& label_column, std::string split_tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::set<std::string> seen;
  for (const std::string& name : header) {
    if (!seen.insert(name).second) throw IoError("duplicate CSV header column: " + name);
  }
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw IoError("CSV label column '" + label_column + "' not found in " + path);
  }
  const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t width = header.size();
  if (width < 2) throw IoError("CSV needs at least one feature column besides the label");

  std::vector<double> features;
  std::vector<int> labels;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= width) break;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw IoError("non-numeric CSV cell '" + cell + "' at row " + std::to_string(row_number));
      }
      if (col == label_idx) {
        const double rounded = std::nearbyint(value);
        if (value != rounded) {
          throw IoError("non-integer label '" + cell + "' at row " + std::to_string(row_number));
        }
        labels.push_back(static_cast<int>(rounded));
      } else {
        features.push_back(value);
      }
      ++col;
    }
    if (col != width) {
      throw IoError("ragged CSV row " + std::to_string(row_number) + ": expected " +
                    std::to_string(width) + " cells, got " + std::to_string(col));
    }
  }
  if (labels.empty()) throw IoError("CSV has a header but no data rows: " + path);

  Dataset ds;
  ds.split_tag = std::move(split_tag);
  ds.labels = std::move(labels);
  ds.inputs = Tensor({ds.labels.size(), width - 1}, std::move(features));
  int max_label = 0;
  for (int y : ds.labels) {
    if (y < 0) throw IoError("negative label in CSV file: " + path);
    max_label = std::max(max_label, y);
  }
  ds.class_count = max_label + 1;
  return ds;
}

std::vector<double> fit_feature_means(const Dataset& train) {
  const std::size_t d = train.input_dim();
  const std::size_t n = train.size();
  std::vector<double> means(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) means[j] += train.inputs.data[i * d + j];
  }
  for (double& m : means) m /= static_cast<double>(n);
  return means;
}

void center_features(Dataset& dataset, const std::vector<double>& means) {
  const std::size_t d = dataset.input_dim();
  if (means.size() != d) throw ShapeError("feature mean vector width mismatch");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) dataset.inputs.data[i * d + j] -= means[j];
  }
  dataset.feature_means = means;
}

void write_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV file: " + path);
  const std::size_t d = dataset.input_dim();
  for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << dataset.inputs.data[i * d + j] << ',';
    out << dataset.labels[i] << '\n';
  }
  if (!out) throw IoError("failed writing CSV file: " + path);
}

}  // namespace oens
