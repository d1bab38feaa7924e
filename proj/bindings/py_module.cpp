// Python bindings over the core operations: dataset synthesis and loading,
// the four trainers, oracle evaluation, checkpoints, and the gradient check.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "oens/checkpoint.hpp"
#include "oens/gradcheck.hpp"
#include "oens/harness.hpp"
#include "oens/trainers.hpp"
#include "oens/version.hpp"

namespace py = pybind11;

namespace {

py::array_t<double> tensor_to_numpy(const oens::Tensor& tensor) {
  std::vector<py::ssize_t> shape(tensor.shape.begin(), tensor.shape.end());
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), tensor.data.data(), tensor.data.size() * sizeof(double));
  return out;
}

oens::Tensor numpy_to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& array) {
  if (array.ndim() != 2) throw oens::ShapeError("expected a 2-d array");
  oens::Tensor t = oens::Tensor::zeros(
      {static_cast<std::size_t>(array.shape(0)), static_cast<std::size_t>(array.shape(1))});
  std::memcpy(t.data.data(), array.data(), t.data.size() * sizeof(double));
  return t;
}

oens::LossMatrix numpy_to_losses(const py::array_t<double, py::array::c_style | py::array::forcecast>& array) {
  if (array.ndim() != 2) throw oens::ShapeError("loss matrix must be 2-d");
  oens::LossMatrix losses = oens::LossMatrix::zeros(static_cast<std::size_t>(array.shape(0)),
                                                    static_cast<std::size_t>(array.shape(1)));
  std::memcpy(losses.values.data(), array.data(), losses.values.size() * sizeof(double));
  return losses;
}

py::dict report_to_dict(const oens::OracleReport& report) {
  py::dict d;
  d["oracle_loss"] = report.oracle_loss;
  d["oracle_accuracy"] = report.oracle_accuracy;
  d["per_member_accuracy"] = report.per_member_accuracy;
  const oens::WinnerDistribution& dist = report.winner_distribution;
  py::array_t<double> wd({static_cast<py::ssize_t>(dist.class_count),
                          static_cast<py::ssize_t>(dist.member_count)});
  std::memcpy(wd.mutable_data(), dist.percentages.data(),
              dist.percentages.size() * sizeof(double));
  d["winner_distribution"] = wd;
  d["missing_classes"] = dist.missing_classes;
  d["specialization_entropy"] = report.specialization_entropy;
  return d;
}

py::dict history_to_dict(const oens::TrainHistory& history) {
  std::vector<std::int64_t> iterations;
  std::vector<double> oracle, lr;
  std::vector<std::vector<double>> member_loss;
  for (const oens::HistoryRow& row : history.rows) {
    iterations.push_back(row.iteration);
    oracle.push_back(row.oracle_loss);
    lr.push_back(row.learning_rate);
    member_loss.push_back(row.member_loss);
  }
  py::dict d;
  d["iteration"] = iterations;
  d["oracle_loss"] = oracle;
  d["member_loss"] = member_loss;
  d["learning_rate"] = lr;
  return d;
}

oens::TrainConfig build_config(const std::string& method, int members, int k,
                               std::int64_t iterations, std::size_t batch_size,
                               const std::vector<std::size_t>& hidden, double learning_rate,
                               double momentum, double weight_decay,
                               const std::vector<std::pair<std::int64_t, double>>& lr_schedule,
                               std::uint64_t seed, int mcl_meta_iterations,
                               std::int64_t mcl_inner_iterations, double dey_weight_floor,
                               const std::string& loss_reduction, std::int64_t log_interval,
                               const std::optional<std::string>& init_from,
                               std::size_t input_dim, std::size_t class_count) {
  oens::TrainConfig config;
  config.network = oens::NetworkSpec::dense(input_dim, hidden, class_count);
  config.member_count = members;
  config.winners_per_example = k;
  config.batch_size = batch_size;
  config.total_iterations = iterations;
  config.optimizer.learning_rate = learning_rate;
  config.optimizer.momentum = momentum;
  config.optimizer.weight_decay = weight_decay;
  config.optimizer.lr_schedule = lr_schedule;
  config.seed = seed;
  config.method = oens::method_from_string(method);
  config.mcl_meta_iterations = mcl_meta_iterations;
  config.mcl_inner_iterations = mcl_inner_iterations;
  config.dey_weight_floor = dey_weight_floor;
  if (loss_reduction == "mean") config.loss_reduction = oens::LossReduction::Mean;
  else if (loss_reduction == "sum") config.loss_reduction = oens::LossReduction::Sum;
  else throw oens::ConfigError("loss_reduction must be 'mean' or 'sum'");
  config.log_interval = log_interval;
  config.init_from = init_from;
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "oracle-loss ensemble training engine";
  m.attr("__version__") = oens::kEngineVersion;

  py::register_exception<oens::Error>(m, "OensError", PyExc_RuntimeError);

  py::class_<oens::Dataset>(m, "Dataset")
      .def_property_readonly("inputs",
                             [](const oens::Dataset& ds) { return tensor_to_numpy(ds.inputs); })
      .def_property_readonly("labels",
                             [](const oens::Dataset& ds) {
                               py::array_t<int> out(
                                   std::vector<py::ssize_t>{static_cast<py::ssize_t>(ds.labels.size())});
                               std::memcpy(out.mutable_data(), ds.labels.data(),
                                           ds.labels.size() * sizeof(int));
                               return out;
                             })
      .def_readonly("class_count", &oens::Dataset::class_count)
      .def_readonly("split_tag", &oens::Dataset::split_tag)
      .def("__len__", &oens::Dataset::size);

  py::class_<oens::Ensemble>(m, "Ensemble")
      .def_property_readonly("member_count", &oens::Ensemble::member_count)
      .def("save", [](const oens::Ensemble& e, const std::string& path) {
        oens::save_ensemble(e, path);
      })
      .def_static("load", &oens::load_ensemble);

  m.def(
      "make_dataset",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& inputs,
         const std::vector<int>& labels, int class_count, const std::string& split_tag) {
        oens::Dataset ds;
        ds.inputs = numpy_to_matrix(inputs);
        ds.labels = labels;
        ds.class_count = class_count;
        ds.split_tag = split_tag;
        ds.validate();
        return ds;
      },
      py::arg("inputs"), py::arg("labels"), py::arg("class_count"), py::arg("split_tag") = "custom");

  m.def(
      "gen_ambiguous",
      [](std::uint64_t seed, std::size_t n, std::size_t input_dim,
         const std::vector<double>& mode_priors, const std::string& split_tag) {
        return oens::gen_ambiguous(seed, n, input_dim, mode_priors.size(), mode_priors, split_tag);
      },
      py::arg("seed"), py::arg("n"), py::arg("input_dim"), py::arg("mode_priors"),
      py::arg("split_tag") = "train");

  m.def("gen_clustered_classes", &oens::gen_clustered_classes, py::arg("seed"), py::arg("n"),
        py::arg("input_dim"), py::arg("class_count"), py::arg("cluster_spread"),
        py::arg("confusable_pairs") = std::vector<std::pair<int, int>>{},
        py::arg("pair_separation") = 0.1, py::arg("split_tag") = "train");

  m.def("load_csv", &oens::load_csv, py::arg("path"), py::arg("label_column"),
        py::arg("split_tag") = "train");
  m.def("load_idx", &oens::load_idx, py::arg("images_path"), py::arg("labels_path"),
        py::arg("split_tag") = "train");

  m.def(
      "train",
      [](const std::string& method, const oens::Dataset& train_set, const oens::Dataset& probe_set,
         int members, int k, std::int64_t iterations, std::size_t batch_size,
         const std::vector<std::size_t>& hidden, double learning_rate, double momentum,
         double weight_decay, const std::vector<std::pair<std::int64_t, double>>& lr_schedule,
         std::uint64_t seed, int mcl_meta_iterations, std::int64_t mcl_inner_iterations,
         double dey_weight_floor, const std::string& loss_reduction, std::int64_t log_interval,
         const std::optional<std::string>& init_from) {
        const oens::TrainConfig config = build_config(
            method, members, k, iterations, batch_size, hidden, learning_rate, momentum,
            weight_decay, lr_schedule, seed, mcl_meta_iterations, mcl_inner_iterations,
            dey_weight_floor, loss_reduction, log_interval, init_from, train_set.input_dim(),
            static_cast<std::size_t>(train_set.class_count));
        oens::TrainResult result = oens::train(config, train_set, probe_set);
        return py::make_tuple(std::move(result.ensemble), history_to_dict(result.history));
      },
      py::arg("method"), py::arg("train_set"), py::arg("probe_set"), py::arg("members") = 1,
      py::arg("k") = 1, py::arg("iterations") = 1000, py::arg("batch_size") = 32,
      py::arg("hidden") = std::vector<std::size_t>{32}, py::arg("learning_rate") = 0.01,
      py::arg("momentum") = 0.0, py::arg("weight_decay") = 0.0,
      py::arg("lr_schedule") = std::vector<std::pair<std::int64_t, double>>{},
      py::arg("seed") = 0, py::arg("mcl_meta_iterations") = 5,
      py::arg("mcl_inner_iterations") = 0, py::arg("dey_weight_floor") = 0.01,
      py::arg("loss_reduction") = "mean", py::arg("log_interval") = 50,
      py::arg("init_from") = std::nullopt);

  m.def(
      "evaluate",
      [](const oens::Ensemble& ensemble, const oens::Dataset& test, std::size_t batch) {
        return report_to_dict(oens::evaluate(ensemble, test, batch));
      },
      py::arg("ensemble"), py::arg("test"), py::arg("batch") = 512);

  m.def(
      "per_member_losses",
      [](const oens::Ensemble& ensemble, const oens::Dataset& dataset) {
        const oens::LossMatrix losses =
            oens::per_member_losses_chunked(ensemble, dataset.inputs, dataset.labels);
        py::array_t<double> out({static_cast<py::ssize_t>(losses.example_count),
                                 static_cast<py::ssize_t>(losses.member_count)});
        std::memcpy(out.mutable_data(), losses.values.data(),
                    losses.values.size() * sizeof(double));
        return out;
      },
      py::arg("ensemble"), py::arg("dataset"));

  m.def(
      "assign_winners",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& losses, int k) {
        const oens::AssignmentMatrix assignment = oens::assign_winners(numpy_to_losses(losses), k);
        py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(assignment.example_count),
                                       static_cast<py::ssize_t>(assignment.member_count)});
        std::memcpy(out.mutable_data(), assignment.indicators.data(),
                    assignment.indicators.size());
        return out;
      },
      py::arg("losses"), py::arg("k") = 1);

  m.def(
      "oracle_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& losses) {
        return oens::oracle_loss(numpy_to_losses(losses));
      },
      py::arg("losses"));

  m.def(
      "gradcheck",
      [](int trials, double tolerance, double epsilon, std::uint64_t seed) {
        oens::GradCheckConfig config;
        config.trials = trials;
        config.tolerance = tolerance;
        config.epsilon = epsilon;
        config.seed = seed;
        const oens::GradCheckOutcome outcome = oens::check_gradients(config);
        py::dict d;
        d["trials"] = outcome.trials_run;
        d["max_rel_error"] = outcome.max_rel_error;
        d["pass"] = outcome.passed;
        return d;
      },
      py::arg("trials") = 100, py::arg("tolerance") = 1e-4, py::arg("epsilon") = 1e-5,
      py::arg("seed") = 20240915);
}
