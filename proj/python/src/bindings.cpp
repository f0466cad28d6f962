#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "lcmpc/errors.hpp"
#include "lcmpc/harness.hpp"

namespace py = pybind11;
using namespace lcmpc;

namespace {

using State6 = std::array<double, kStateDim>;

VehicleState to_state(const State6& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
State6 from_state(const VehicleState& x) { return {x.p_x, x.p_y, x.phi, x.v_x, x.v_y, x.omega}; }

py::dict trajectory_dict(const Trajectory& t) {
  std::vector<State6> states;
  for (const auto& x : t.states) states.push_back(from_state(x));
  std::vector<std::array<double, 2>> controls;
  for (const auto& c : t.controls) controls.push_back({c.a, c.delta});
  py::dict d;
  d["states"] = states;
  d["controls"] = controls;
  d["cost"] = t.cost;
  d["status"] = to_string(t.status);
  d["iterations"] = t.iterations;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lane-change MPC with a learned decision policy";

  // translators run newest first, so the base class goes in first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<InvalidInputError>(m, "InvalidInputError", PyExc_ValueError);

  py::class_<HarnessConfig>(m, "Config")
      .def(py::init<>())
      .def_static("load", &load_config, py::arg("path"))
      .def_static(
          "parse",
          [](const std::string& text) {
            std::istringstream in(text);
            return parse_config(in);
          },
          py::arg("text"))
      .def(
          "set", [](HarnessConfig& c, const std::string& a) { apply_override(c, a); },
          py::arg("assignment"), "Apply section.key=value.")
      .def("validate", &HarnessConfig::validate)
      .def(
          "dump", [](const HarnessConfig& c, bool annotate) { return dump_config(c, annotate); },
          py::arg("annotate") = true);
  m.def("config_keys", &config_keys);

  py::class_<PolicyParams>(m, "Policy")
      .def_static(
          "init", [](std::uint64_t seed) { return init_params(seed); }, py::arg("seed") = 0)
      .def_static("load", &load_policy, py::arg("path"))
      .def("save",
           [](const PolicyParams& p, const std::filesystem::path& path) { save_policy(p, path); })
      .def(
          "decide",
          [](const PolicyParams& p, const Observation& o) { return forward(o, p).to_array(); },
          py::arg("observation"), "Decision vector for a 10-entry observation.")
      .def("__eq__", [](const PolicyParams& a, const PolicyParams& b) { return a == b; });

  m.def(
      "step",
      [](const State6& x, double a, double delta, double dt) {
        return from_state(step_dynamics(to_state(x), {a, delta}, dt, VehicleParams{}));
      },
      py::arg("state"), py::arg("a"), py::arg("delta"), py::arg("dt") = 0.1,
      "One semi-implicit bicycle step with the default vehicle.");

  m.def(
      "plan",
      [](const HarnessConfig& cfg, const State6& x, const std::array<double, 2>& u_prev,
         const std::array<double, kDecisionDim>& z, double gap_p_x, double gap_v_x, double t_now) {
        const auto goal = GoalState::from_gap(gap_p_x, gap_v_x, cfg.scenario.gap_p_y);
        const auto problem =
            build_problem(to_state(x), {u_prev[0], u_prev[1]}, DecisionVector::from_array(z), goal,
                          t_now, cfg.mpc, cfg.vehicle.build());
        return trajectory_dict(solve(problem));
      },
      py::arg("config"), py::arg("state"), py::arg("u_prev"), py::arg("z"), py::arg("gap_p_x"),
      py::arg("gap_v_x"), py::arg("t_now") = 0.0);

  m.def(
      "reset",
      [](const HarnessConfig& cfg, int curriculum, std::uint64_t seed) {
        return reset(cfg.env().curriculum(curriculum), seed, cfg.scenario, cfg.vehicle.build())
            .second;
      },
      py::arg("config"), py::arg("curriculum"), py::arg("seed"),
      "Initial observation of an episode.");

  m.def(
      "run_episode",
      [](const HarnessConfig& cfg, const std::array<double, kDecisionDim>& z, int curriculum,
         std::uint64_t seed) {
        const auto r = replay_episode(DecisionVector::from_array(z), curriculum, seed, cfg);
        py::dict d;
        d["status"] = to_string(r.outcome.status);
        d["t_end"] = r.outcome.t_end;
        d["reward"] = r.reward.total;
        d["steps"] = r.outcome.steps.size();
        d["collision_speeds"] = r.outcome.collision_speeds;
        std::vector<State6> ego;
        for (const auto& s : r.outcome.steps) ego.push_back(from_state(s.ego));
        d["ego"] = ego;
        return d;
      },
      py::arg("config"), py::arg("z"), py::arg("curriculum"), py::arg("seed"));

  m.def(
      "evaluate_json",
      [](const PolicyParams& p, const HarnessConfig& cfg) {
        py::gil_scoped_release release;
        return to_json(evaluate(p, cfg)).dump();
      },
      py::arg("policy"), py::arg("config"));

  m.def(
      "train_rows",
      [](const HarnessConfig& cfg) {
        std::vector<std::string> rows;
        PolicyParams policy;
        {
          py::gil_scoped_release release;
          const auto env = cfg.env();
          auto state = initial_state(cfg.trainer, env, cfg.policy);
          for (const auto& r : run_curriculum(state, env, cfg.trainer))
            rows.push_back(training_csv_row(r));
          policy = state.policy;
        }
        return py::make_tuple(training_csv_header(), rows, policy);
      },
      py::arg("config"), "Runs the configured schedule; returns (csv header, csv rows, policy).");

  m.def(
      "learning_rate",
      [](const HarnessConfig& cfg, long k) { return learning_rate(cfg.trainer, k); },
      py::arg("config"), py::arg("k"));
  m.def("decision_names", [] {
    std::vector<std::string> out;
    for (const char* n : decision_names()) out.emplace_back(n);
    return out;
  });
}
