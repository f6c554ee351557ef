// Python bindings: environment, networks, training entry points and statistics.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "prognet/env/reacher.hpp"
#include "prognet/exp/experiment.hpp"
#include "prognet/exp/stats.hpp"
#include "prognet/net/network.hpp"
#include "prognet/rl/a2c.hpp"

namespace py = pybind11;
using namespace prognet;

namespace {

// Configs cross the boundary as JSON text, so Python callers pass dicts via json.dumps.
nlohmann::json parse(const std::string& text) { return nlohmann::json::parse(text); }

py::array_t<double> to_numpy(const nn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

nn::Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  nn::Shape shape(a.shape(), a.shape() + a.ndim());
  return nn::Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict observation(const env::Observation& o) {
  py::dict d;
  d["rgb"] = to_numpy(o.rgb);
  d["proprio"] = o.proprio ? py::object(to_numpy(*o.proprio)) : py::none();
  return d;
}

env::Observation observation_from(const py::dict& d) {
  env::Observation o;
  o.rgb = from_numpy(d["rgb"].cast<py::array_t<double>>());
  if (d.contains("proprio") && !d["proprio"].is_none()) o.proprio = from_numpy(d["proprio"].cast<py::array_t<double>>());
  return o;
}

py::dict state_dict(const env::ArmState& s) {
  py::dict d;
  d["joint_angles"] = s.joint_angles;
  d["joint_velocities"] = s.joint_velocities;
  d["target"] = py::make_tuple(s.target.x, s.target.y);
  d["step_index"] = s.step_index;
  return d;
}

net::ColumnSpec column_spec(const std::string& spec, std::size_t joints) {
  const auto j = nlohmann::json::parse(spec, nullptr, false);
  if (!j.is_discarded() && j.is_object()) return net::column_spec_from_json(j);
  return net::preset(spec, joints);
}

class PyNetwork {
 public:
  explicit PyNetwork(net::ProgressiveNetwork n) : net_(std::move(n)), state_(net_.initial_state(1)) {}
  PyNetwork(std::size_t image_size, std::size_t proprio_dim) {
    net::InputSpec in;
    in.height = in.width = image_size;
    in.proprio_dim = proprio_dim;
    net_ = net::ProgressiveNetwork(in);
  }

  std::size_t add_column(const std::string& spec, std::uint64_t seed, std::optional<std::size_t> transfer_from,
                         std::size_t joints) {
    const std::size_t k = net_.add_column(column_spec(spec, joints), seed, transfer_from);
    reset_state();
    return k;
  }

  void reset_state() { state_ = net_.initial_state(1); }

  py::tuple policy(const py::dict& obs, std::optional<std::size_t> column) {
    const auto p = rl::policy(net_, observation_from(obs), state_, column);
    py::array_t<double> probs({static_cast<py::ssize_t>(p.joints()), py::ssize_t{3}});
    auto* out = probs.mutable_data();
    for (std::size_t j = 0; j < p.joints(); ++j) {
      const double m = std::max({p.logits[3 * j], p.logits[3 * j + 1], p.logits[3 * j + 2]});
      double z = 0.0;
      for (int a = 0; a < 3; ++a) z += std::exp(p.logits[3 * j + a] - m);
      for (int a = 0; a < 3; ++a) out[3 * j + a] = std::exp(p.logits[3 * j + a] - m) / z;
    }
    return py::make_tuple(probs, p.value);
  }

  std::vector<int> act(const py::dict& obs, std::optional<std::size_t> column) {
    return rl::greedy_action(rl::policy(net_, observation_from(obs), state_, column));
  }

  py::dict parameters() const {
    py::dict d;
    for (const auto* p : net_.parameters()) d[py::str(p->name)] = to_numpy(p->value);
    return d;
  }

  net::ProgressiveNetwork& net() { return net_; }

 private:
  net::ProgressiveNetwork net_;
  net::NetworkState state_;
};

py::dict run_json(const exp::RunOutput& r) {
  auto j = exp::to_json(r.record);
  j["dir"] = r.dir.string();
  j["initial_eval_mean"] = r.initial_eval.mean_return;
  j["final_eval_mean"] = r.final_eval.mean_return;
  return py::module_::import("json").attr("loads")(j.dump());
}

exp::ExperimentConfig experiment(const std::string& config) { return exp::experiment_config_from_json(parse(config)); }

}  // namespace

PYBIND11_MODULE(_prognet, m) {
  m.doc() = "Progressive networks for pixel-based reaching";

  py::register_exception<env::EnvConfigError>(m, "EnvConfigError", PyExc_ValueError);
  py::register_exception<exp::ExperimentConfigError>(m, "ExperimentConfigError", PyExc_ValueError);
  py::register_exception<rl::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<net::SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<nn::UsageError>(m, "UsageError", PyExc_RuntimeError);
  py::register_exception<exp::IoError>(m, "IoError", PyExc_OSError);

  py::class_<env::ReacherEnv>(m, "ReacherEnv")
      .def(py::init([](const std::string& config) { return env::ReacherEnv(env::env_config_from_json(parse(config))); }),
           py::arg("config_json") = "{}")
      .def("reset", [](env::ReacherEnv& e, std::optional<std::uint64_t> seed) {
             return observation(seed ? e.reset(*seed) : e.reset());
           }, py::arg("seed") = py::none())
      .def("step", [](env::ReacherEnv& e, const std::vector<int>& actions) {
             const auto r = e.step(actions);
             return py::make_tuple(observation(r.observation), r.reward, r.terminated, env::to_string(r.reason));
           })
      .def("observe", [](const env::ReacherEnv& e) { return observation(e.observe()); })
      .def_property_readonly("alive", &env::ReacherEnv::alive)
      .def_property_readonly("state", [](const env::ReacherEnv& e) { return state_dict(e.state()); })
      .def_property_readonly("config_json", [](const env::ReacherEnv& e) { return env::to_json(e.config()).dump(); })
      .def("expert_action", [](const env::ReacherEnv& e) { return env::expert_action(e); });

  m.def("expert_return", [](const std::string& config, std::size_t episodes, std::uint64_t seed) {
          return env::expert_return(env::env_config_from_json(parse(config)), episodes, seed);
        }, py::arg("config_json"), py::arg("episodes") = 100, py::arg("seed") = 0);
  m.def("forward_kinematics", [](const std::vector<double>& angles, const std::vector<double>& links) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : env::forward_kinematics(angles, links)) out.emplace_back(p.x, p.y);
    return out;
  });

  py::class_<PyNetwork>(m, "ProgressiveNetwork")
      .def(py::init<std::size_t, std::size_t>(), py::arg("image_size") = 64, py::arg("proprio_dim") = 0)
      .def("add_column", &PyNetwork::add_column, py::arg("spec"), py::arg("seed"),
           py::arg("transfer_from") = py::none(), py::arg("joints") = 2,
           "Append a column from a preset name or a column-spec JSON string")
      .def("reset_state", &PyNetwork::reset_state)
      .def("policy", &PyNetwork::policy, py::arg("observation"), py::arg("column") = py::none(),
           "Per-joint action probabilities [K, 3] and the value; advances recurrent state")
      .def("act", &PyNetwork::act, py::arg("observation"), py::arg("column") = py::none())
      .def("param_count", [](PyNetwork& n, bool laterals) { return n.net().param_count(laterals); },
           py::arg("include_laterals") = true)
      .def_property_readonly("num_columns", [](PyNetwork& n) { return n.net().num_columns(); })
      .def("parameters", &PyNetwork::parameters)
      .def("architecture_json", [](PyNetwork& n) { return n.net().architecture().dump(); })
      .def("evaluate", [](PyNetwork& n, const std::string& env_config, std::size_t episodes, std::uint64_t seed) {
             env::ReacherEnv e(env::env_config_from_json(parse(env_config)));
             const auto r = rl::evaluate(n.net(), e, episodes, seed);
             return py::make_tuple(r.mean_return, r.returns);
           }, py::arg("env_config_json"), py::arg("episodes") = 20, py::arg("seed") = 0);

  m.def("load_run", [](const std::filesystem::path& dir, const std::string& checkpoint) {
          return PyNetwork(exp::load_run_network(dir, std::nullopt, checkpoint));
        }, py::arg("run_dir"), py::arg("checkpoint") = "checkpoint.bin");

  m.def("train_sim", [](const std::string& c) {
    auto cfg = experiment(c);
    cfg.kind = exp::ExperimentKind::train_sim;
    exp::RunOutput r;
    {
      py::gil_scoped_release release;
      r = exp::run_train_sim(cfg);
    }
    return run_json(r);
  }, py::arg("config_json"));
  m.def("transfer", [](const std::string& c, const std::string& mode) {
    auto cfg = experiment(c);
    const auto m = mode == "finetune" ? exp::TransferMode::finetune
                   : mode == "scratch" ? exp::TransferMode::scratch
                                       : exp::TransferMode::progressive;
    exp::RunOutput r;
    {
      py::gil_scoped_release release;
      r = exp::run_transfer(cfg, m);
    }
    return run_json(r);
  }, py::arg("config_json"), py::arg("mode") = "progressive");
  m.def("export_report", [](const std::filesystem::path& dir, std::size_t window) {
    std::vector<py::dict> rows;
    for (const auto& r : exp::export_report(dir, window)) {
      py::dict d;
      d["mode"] = r.mode;
      d["runs"] = r.runs;
      d["median"] = r.median;
      d["q1"] = r.q1;
      d["q3"] = r.q3;
      d["iqr"] = r.iqr;
      rows.push_back(d);
    }
    return rows;
  }, py::arg("dir"), py::arg("window") = 21);

  m.def("median_filter", [](const std::vector<double>& v, std::size_t w) { return exp::median_filter(v, w); });
  m.def("mann_whitney_greater", [](const std::vector<double>& x, const std::vector<double>& y) {
    const auto r = exp::mann_whitney_greater(x, y);
    return py::make_tuple(r.statistic, r.p_value);
  });
}
