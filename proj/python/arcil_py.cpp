#include "arcil/attacks.hpp"
#include "arcil/checkpoint.hpp"
#include "arcil/continual.hpp"
#include "arcil/data.hpp"
#include "arcil/error.hpp"
#include "arcil/losses.hpp"
#include "arcil/metrics.hpp"
#include "arcil/network.hpp"
#include "arcil/runner.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace arcil;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Dataset dataset_of(const Array& x, std::vector<int> y, std::size_t n_classes) {
  Dataset d;
  d.inputs = to_tensor(x);
  d.labels = std::move(y);
  d.n_classes = n_classes;
  d.range = std::pair{0.0, 1.0};
  d.validate();
  return d;
}

AttackConfig attack_config(double epsilon, std::size_t steps, double step_size, bool random_start,
                           const std::string& objective, std::size_t restarts, std::uint64_t seed) {
  AttackConfig c;
  c.epsilon = epsilon;
  c.n_steps = steps;
  c.step_size = step_size < 0.0 ? epsilon / 4.0 : step_size;
  c.random_start = random_start;
  c.objective = parse_objective(objective);
  c.clamp_range = std::pair{0.0, 1.0};
  c.n_restarts = restarts;
  c.seed = seed;
  return c;
}

py::object opt(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

py::dict report_dict(const RunReport& r) {
  py::dict d;
  d["status"] = r.status;
  d["error"] = r.error;
  d["method"] = r.method;
  d["config_hash"] = r.config_hash;
  d["tasks_completed"] = r.tasks_completed;
  d["r_bwt"] = opt(r.r_bwt);
  d["gf"] = r.flatness ? py::cast(r.flatness->gf) : py::none();
  d["hf"] = r.flatness ? opt(r.flatness->hf) : py::none();
  py::list robust, clean;
  for (std::size_t i = 0; i < r.matrix.n_tasks(); ++i) {
    py::list rr, cr;
    for (std::size_t j = 0; j < r.matrix.n_tasks(); ++j) {
      const bool set = j <= i && r.matrix.has(i, j);
      rr.append(set ? py::cast(r.matrix.robust(i, j)) : py::none());
      cr.append(set ? py::cast(r.matrix.clean(i, j)) : py::none());
    }
    robust.append(rr);
    clean.append(cr);
  }
  d["robust"] = robust;
  d["clean"] = clean;
  d["wall_clock_seconds"] = r.wall_clock_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(arcil, m) {
  m.doc() = "Adversarially robust class-incremental learning toolkit";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<UndefinedValueError>(m, "UndefinedValueError", base.ptr());

  py::class_<Network>(m, "Network")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, const std::string& activation,
                       std::size_t classes, std::uint64_t seed) {
             return Network::create({input_dim, std::move(hidden), parse_activation(activation), classes, seed});
           }),
           py::arg("input_dim"), py::arg("hidden"), py::arg("activation") = "relu", py::arg("classes"),
           py::arg("seed") = 0)
      .def_property_readonly("input_dim", &Network::input_dim)
      .def_property_readonly("n_classes", &Network::n_classes)
      .def_property_readonly("head_boundaries", &Network::head_boundaries)
      .def_property_readonly("param_count", &Network::param_count)
      .def("checksum", &Network::checksum)
      .def("forward", [](const Network& n, const Array& x) { return to_array(n.forward(to_tensor(x))); })
      .def("expand_head", [](const Network& n, std::size_t classes, double scale, std::uint64_t seed) {
             return expand_head(n, classes, scale, seed);
           }, py::arg("classes"), py::arg("init_scale") = 0.01, py::arg("seed") = 0)
      .def("input_gradient", [](const Network& n, const Array& x, const std::vector<int>& labels) {
             auto loss = [&labels](ad::Tape&, const ad::Var& logits) { return ad::softmax_cross_entropy(logits, labels); };
             return to_array(grad_input(n, loss, to_tensor(x)).grad);
           }, "Input gradient of the batch-mean cross-entropy.");

  m.def("pgd", [](const Network& n, const Array& x, const std::vector<int>& y, double epsilon, std::size_t steps,
                  double step_size, bool random_start, const std::string& objective, std::size_t restarts,
                  std::uint64_t seed) {
          return to_array(pgd(n, to_tensor(x), y, attack_config(epsilon, steps, step_size, random_start, objective, restarts, seed)));
        },
        py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("epsilon"), py::arg("steps") = 10,
        py::arg("step_size") = -1.0, py::arg("random_start") = true, py::arg("objective") = "ce",
        py::arg("restarts") = 1, py::arg("seed") = 0);
  m.def("fgsm", [](const Network& n, const Array& x, const std::vector<int>& y, double epsilon) {
          return to_array(fgsm(n, to_tensor(x), y, epsilon, AttackObjective::kCe, std::pair{0.0, 1.0}));
        },
        py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("epsilon"));

  m.def("accuracy", [](const Network& n, const Array& x, std::vector<int> y) {
    return accuracy(n, dataset_of(x, std::move(y), n.n_classes()));
  });
  m.def("robust_accuracy", [](const Network& n, const Array& x, std::vector<int> y, double epsilon, std::uint64_t seed) {
          return robust_accuracy(n, dataset_of(x, std::move(y), n.n_classes()), pgd20_config(epsilon, seed));
        },
        py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("epsilon"), py::arg("seed") = 0);
  m.def("r_bwt", [](const std::vector<std::vector<double>>& robust) {
    AccuracyMatrix mat(robust.size());
    for (std::size_t i = 0; i < robust.size(); ++i) {
      if (robust[i].size() < i + 1) throw ArgumentError("row " + std::to_string(i) + " needs " + std::to_string(i + 1) + " entries");
      for (std::size_t j = 0; j <= i; ++j) mat.set(i, j, robust[i][j], 0.0);
    }
    return r_bwt(mat);
  }, "Backward transfer from a lower-triangular robust accuracy matrix.");
  m.def("flatness_forgetting", [](const std::vector<const Network*>& models, const std::vector<Array>& xs,
                                  const std::vector<std::vector<int>>& ys) {
    if (xs.size() != ys.size()) throw ArgumentError("inputs and labels differ in task count");
    std::vector<Dataset> sets;
    for (std::size_t i = 0; i < xs.size(); ++i) sets.push_back(dataset_of(xs[i], ys[i], models.back()->n_classes()));
    const FlatnessReport r = flatness_forgetting(models, sets);
    return py::make_tuple(r.gf, opt(r.hf));
  });

  m.def("herding_select", [](const Array& features, std::size_t m) { return herding_select(to_tensor(features), m); });
  m.def("gaussian_tasks", [](std::size_t classes, std::size_t d, double separation, std::size_t per_class,
                             std::uint64_t seed) {
          const Dataset data = gen_gaussian_tasks(classes, d, separation, per_class, seed);
          return py::make_tuple(to_array(data.inputs), data.labels);
        },
        py::arg("classes"), py::arg("dim"), py::arg("separation"), py::arg("per_class"), py::arg("seed") = 0);

  m.def("save_checkpoint", &save_checkpoint);
  m.def("load_checkpoint", &load_checkpoint);

  m.def("run_experiment", [](const std::string& config_text) {
    const ExperimentConfig cfg = parse_experiment_config(config_text);
    RunReport r;
    {
      py::gil_scoped_release release;
      r = run_experiment(cfg);
    }
    return report_dict(r);
  }, "Runs a key = value configuration and returns the report summary as a dict.");
}
