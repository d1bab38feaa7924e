#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "oens/dataset.hpp"
#include "oens/network.hpp"
#include "oens/optimizer.hpp"
#include "oens/trainers.hpp"

using namespace oens;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "oens_dataset_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

void append_be_u32(std::string& buffer, std::uint32_t v) {
  buffer.push_back(static_cast<char>((v >> 24) & 0xff));
  buffer.push_back(static_cast<char>((v >> 16) & 0xff));
  buffer.push_back(static_cast<char>((v >> 8) & 0xff));
  buffer.push_back(static_cast<char>(v & 0xff));
}

// 2x2 images so payloads stay readable in the test.
std::string tiny_idx_images(const std::vector<std::vector<unsigned char>>& images) {
  std::string buffer;
  append_be_u32(buffer, 0x00000803u);
  append_be_u32(buffer, static_cast<std::uint32_t>(images.size()));
  append_be_u32(buffer, 2);
  append_be_u32(buffer, 2);
  for (const auto& image : images) {
    for (unsigned char p : image) buffer.push_back(static_cast<char>(p));
  }
  return buffer;
}

std::string tiny_idx_labels(const std::vector<unsigned char>& labels) {
  std::string buffer;
  append_be_u32(buffer, 0x00000801u);
  append_be_u32(buffer, static_cast<std::uint32_t>(labels.size()));
  for (unsigned char y : labels) buffer.push_back(static_cast<char>(y));
  return buffer;
}

}  // namespace

TEST_CASE("gen_ambiguous is deterministic and validates priors") {
  const Dataset a = gen_ambiguous(5, 100, 3, 2, {0.5, 0.5});
  const Dataset b = gen_ambiguous(5, 100, 3, 2, {0.5, 0.5});
  CHECK(a.inputs.same_bits(b.inputs));
  CHECK(a.labels == b.labels);
  CHECK(a.class_count == 2);
  CHECK_THROWS_AS(gen_ambiguous(5, 100, 3, 2, {0.6, 0.6}), ConfigError);
  CHECK_THROWS_AS(gen_ambiguous(5, 100, 3, 3, {0.5, 0.5}), ConfigError);
}

TEST_CASE("gen_ambiguous with one mode is an ordinary dataset") {
  const Dataset ds = gen_ambiguous(9, 50, 2, 1, {1.0});
  for (int y : ds.labels) CHECK(y == 0);
}

TEST_CASE("gen_ambiguous label marginals pass a chi-square check at n=10000") {
  const std::vector<double> priors = {0.2, 0.3, 0.5};
  const Dataset ds = gen_ambiguous(17, 10000, 2, 3, priors);
  std::vector<double> counts(3, 0.0);
  for (int y : ds.labels) counts[static_cast<std::size_t>(y)] += 1.0;
  double stat = 0.0;
  for (std::size_t m = 0; m < 3; ++m) {
    const double expected = 10000.0 * priors[m];
    stat += (counts[m] - expected) * (counts[m] - expected) / expected;
  }
  // chi-square critical value, 2 dof, p = 0.001
  CHECK(stat < 13.815510557964274);
}

TEST_CASE("gen_clustered_classes keeps labels balanced within one") {
  const Dataset ds = gen_clustered_classes(3, 103, 2, 10, 0.5, {});
  std::vector<int> counts(10, 0);
  for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  CHECK(*hi - *lo <= 1);
}

TEST_CASE("gen_clustered_classes is deterministic and rejects bad pairs") {
  const Dataset a = gen_clustered_classes(11, 60, 2, 4, 0.3, {{0, 1}});
  const Dataset b = gen_clustered_classes(11, 60, 2, 4, 0.3, {{0, 1}});
  CHECK(a.inputs.same_bits(b.inputs));
  CHECK(a.labels == b.labels);
  CHECK_THROWS_AS(gen_clustered_classes(11, 60, 2, 4, 0.3, {{0, 4}}), ConfigError);
  CHECK_THROWS_AS(gen_clustered_classes(11, 60, 2, 4, 0.3, {{0, 0}}), ConfigError);
  CHECK_THROWS_AS(gen_clustered_classes(11, 60, 2, 4, 0.3, {{0, 1}, {1, 2}}), ConfigError);
}

TEST_CASE("tight clusters with no confusable pairs are linearly separable") {
  // cluster_spread -> 0: even a bias-plus-affine net should hit ~100%.
  const Dataset train = gen_clustered_classes(21, 400, 2, 4, 0.01, {});
  TrainConfig config;
  config.network = NetworkSpec::dense(2, std::vector<std::size_t>{}, 4);
  config.member_count = 1;
  config.batch_size = 32;
  config.total_iterations = 800;
  config.optimizer.learning_rate = 0.5;
  config.seed = 1;
  config.method = Method::Independent;
  const TrainResult result = train_independent(config, train, train);
  const OracleReport report = evaluate(result.ensemble, train);
  CHECK(report.oracle_accuracy >= 0.99);
}

TEST_CASE("IDX round trip with scaling") {
  const auto dir = temp_dir();
  const auto images_path = dir / "images.idx";
  const auto labels_path = dir / "labels.idx";
  write_file(images_path, tiny_idx_images({{0, 128, 255, 64}, {255, 0, 0, 0}}));
  write_file(labels_path, tiny_idx_labels({1, 0}));
  const Dataset ds = load_idx(images_path.string(), labels_path.string());
  CHECK(ds.size() == 2);
  CHECK(ds.input_dim() == 4);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.inputs.data[0] == 0.0);
  CHECK(ds.inputs.data[2] == 1.0);
  CHECK(ds.inputs.data[1] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("IDX error paths: magic, truncation, count mismatch") {
  const auto dir = temp_dir();
  const auto images_path = dir / "img2.idx";
  const auto labels_path = dir / "lab2.idx";

  write_file(images_path, std::string("\x00\x00\x08\x04", 4) + "rest");
  write_file(labels_path, tiny_idx_labels({0}));
  CHECK_THROWS_AS(load_idx(images_path.string(), labels_path.string()), IoError);

  std::string truncated = tiny_idx_images({{1, 2, 3, 4}});
  truncated.resize(truncated.size() - 2);
  write_file(images_path, truncated);
  CHECK_THROWS_AS(load_idx(images_path.string(), labels_path.string()), IoError);

  write_file(images_path, tiny_idx_images({{1, 2, 3, 4}, {5, 6, 7, 8}}));
  write_file(labels_path, tiny_idx_labels({0}));
  CHECK_THROWS_AS(load_idx(images_path.string(), labels_path.string()), IoError);
}

TEST_CASE("feature centering uses stored training statistics") {
  const auto dir = temp_dir();
  const auto images_path = dir / "img3.idx";
  const auto labels_path = dir / "lab3.idx";
  write_file(images_path, tiny_idx_images({{0, 0, 0, 0}, {255, 255, 255, 255}}));
  write_file(labels_path, tiny_idx_labels({0, 1}));
  Dataset ds = load_idx(images_path.string(), labels_path.string());
  const std::vector<double> means = fit_feature_means(ds);
  for (double m : means) CHECK(m == doctest::Approx(0.5));
  center_features(ds, means);
  // the all-zero image becomes all minus-mean
  for (std::size_t j = 0; j < 4; ++j) CHECK(ds.inputs.data[j] == doctest::Approx(-0.5));
  CHECK(ds.feature_means == means);
}

TEST_CASE("CSV loader happy path") {
  const auto dir = temp_dir();
  const auto path = dir / "ok.csv";
  write_file(path, "f0,f1,label\n1.5,2.0,0\n-1.0,0.25,2\n0.0,0.0,1\n");
  const Dataset ds = load_csv(path.string(), "label");
  CHECK(ds.size() == 3);
  CHECK(ds.input_dim() == 2);
  CHECK(ds.class_count == 3);
  CHECK(ds.labels == std::vector<int>{0, 2, 1});
  CHECK(ds.inputs.at(1, 0) == -1.0);
}

TEST_CASE("CSV error paths name the problem") {
  const auto dir = temp_dir();
  const auto path = dir / "bad.csv";

  write_file(path, "f0,f1,label\n1.0,2.0\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string(), "label"), doctest::Contains("ragged"), IoError);

  write_file(path, "f0,f1,label\n1.0,abc,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string(), "label"), doctest::Contains("non-numeric"), IoError);

  write_file(path, "f0,f1,label\n1.0,2.0,0.5\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string(), "label"), doctest::Contains("non-integer"), IoError);

  write_file(path, "f0,f0,label\n1.0,2.0,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string(), "label"), doctest::Contains("duplicate"), IoError);

  write_file(path, "f0,f1,target\n1.0,2.0,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string(), "label"), doctest::Contains("label"), IoError);
}

TEST_CASE("CSV export/import round trip") {
  const Dataset original = gen_clustered_classes(31, 40, 3, 4, 0.4, {{0, 3}});
  const auto path = temp_dir() / "export.csv";
  write_csv(original, path.string());
  const Dataset loaded = load_csv(path.string(), "label");
  CHECK(loaded.size() == original.size());
  CHECK(loaded.labels == original.labels);
  for (std::size_t i = 0; i < original.inputs.data.size(); ++i) {
    CHECK(loaded.inputs.data[i] == doctest::Approx(original.inputs.data[i]).epsilon(1e-15));
  }
}

TEST_CASE("a batch plan covering the whole set returns the epoch permutation") {
  const Dataset ds = gen_ambiguous(41, 10, 2, 2, {0.5, 0.5});
  const BatchPlan plan(7, 32);
  const Batch batch = next_batch(plan, ds, 0);
  CHECK(batch.labels.size() == 10);
  std::set<std::size_t> seen(batch.indices.begin(), batch.indices.end());
  CHECK(seen.size() == 10);
}

TEST_CASE("identical plan seeds give identical batch sequences") {
  const Dataset ds = gen_ambiguous(43, 50, 2, 2, {0.5, 0.5});
  const BatchPlan a(9, 8);
  const BatchPlan b(9, 8);
  for (std::int64_t it = 0; it < 20; ++it) {
    CHECK(next_batch(a, ds, it).indices == next_batch(b, ds, it).indices);
  }
}

TEST_CASE("each epoch is a bijection and keeps the partial final batch") {
  const std::size_t n = 23;  // deliberately not a multiple of the batch size
  const BatchPlan plan(13, 5);
  const std::size_t bpe = plan.batches_per_epoch(n);
  CHECK(bpe == 5);
  for (std::int64_t epoch = 0; epoch < 3; ++epoch) {
    std::vector<std::size_t> all;
    for (std::size_t pos = 0; pos < bpe; ++pos) {
      const auto idx = batch_indices(plan, n, epoch * static_cast<std::int64_t>(bpe) +
                                                  static_cast<std::int64_t>(pos));
      if (pos + 1 < bpe) CHECK(idx.size() == 5);
      else CHECK(idx.size() == 3);  // 23 = 4*5 + 3
      all.insert(all.end(), idx.begin(), idx.end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
  }
}

TEST_CASE("different epochs shuffle differently") {
  const BatchPlan plan(3, 64);
  const auto epoch0 = batch_indices(plan, 64, 0);
  const auto epoch1 = batch_indices(plan, 64, 1);
  CHECK(epoch0 != epoch1);
}

TEST_CASE("subset batching maps through the partition") {
  const Dataset ds = gen_ambiguous(47, 30, 2, 2, {0.5, 0.5});
  const std::vector<std::size_t> subset = {3, 7, 11, 15, 19, 23};
  const BatchPlan plan(5, 4);
  const Batch batch = next_batch_subset(plan, ds, subset, 0);
  for (std::size_t idx : batch.indices) {
    CHECK(std::find(subset.begin(), subset.end(), idx) != subset.end());
  }
}
