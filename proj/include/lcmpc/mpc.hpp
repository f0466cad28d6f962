#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcmpc/vehicle.hpp"

namespace lcmpc {

inline constexpr int kDecisionDim = 13;

using Diag6 = std::array<double, kStateDim>;
using Diag2 = std::array<double, kControlDim>;

/// Learnable MPC parameterization, flattened in the order
/// [x_tra (6), q_max (6), t_tra].
struct DecisionVector {
  VehicleState x_tra;
  Diag6 q_max{};
  double t_tra = 0.0;  // absolute episode time (s)

  std::array<double, kDecisionDim> to_array() const;
  static DecisionVector from_array(std::span<const double> z);
  bool operator==(const DecisionVector&) const = default;
};

struct MpcConfig {
  double horizon = 5.0;  // s
  double dt = 0.1;       // s
  Diag6 q_x{100.0, 100.0, 100.0, 10.0, 0.0, 0.0};
  Diag2 q_u{1.0, 1.0};
  Diag2 q_du{0.1, 0.1};
  double gamma = 1.0;  // 1/s^2
  double p_y_min = -5.0;
  double p_y_max = 5.0;
  ControlBounds bounds;

  int max_iterations = 100;
  double tolerance = 1e-4;       // projected-gradient infinity norm
  double lateral_penalty = 1e3;  // weight on squared p_y bound violation
  double penalty_escalation = 10.0;
  double lateral_tolerance = 0.05;  // m, above this the solve is infeasible-relaxed
  int lbfgs_memory = 10;

  int steps() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Target state [p_x^c, lane center, 0, v_x^c, 0, 0] tracked by the terminal
/// and running goal costs.
struct GoalState {
  VehicleState target;

  static GoalState from_gap(double gap_p_x, double gap_v_x, double lane_center = 2.5);
};

enum class SolverStatus { Converged, MaxIterations, InfeasibleRelaxed };

std::string to_string(SolverStatus s);

struct Trajectory {
  std::vector<VehicleState> states;    // N + 1
  std::vector<ControlInput> controls;  // N
  double cost = 0.0;                   // objective incl. lateral penalty
  SolverStatus status = SolverStatus::MaxIterations;
  int iterations = 0;
  double stationarity = 0.0;              // projected-gradient residual at the returned iterate
  double lateral_violation = 0.0;         // max p_y bound violation (m)
  double penalty_weight = 0.0;            // lateral penalty weight in effect at return
  std::vector<double> objective_history;  // objective at the start and after each iteration
};

/// Element-wise product q_max (.) q_x.
Diag6 scale_q_max(const Diag6& q_max, const Diag6& q_x);

/// Gaussian tracking weight for horizon step k:
/// q_max_scaled * exp(-gamma * (t_now + k*dt - t_tra)^2).
Diag6 weight_schedule(double t_tra, int k, double t_now, const Diag6& q_max_scaled, double gamma,
                      double dt);

/// Single-shooting transcription of the lane-change MPC. Decision variables
/// are the N control pairs; the states are eliminated by rolling out the
/// bicycle model.
class NlpProblem {
 public:
  NlpProblem(const VehicleState& x_init, const ControlInput& u_prev, const DecisionVector& z,
             const GoalState& goal, double t_now, const MpcConfig& cfg,
             const VehicleParams& params);

  int steps() const { return steps_; }
  const MpcConfig& config() const { return cfg_; }
  const VehicleParams& params() const { return params_; }
  const VehicleState& x_init() const { return x_init_; }
  const ControlInput& u_prev() const { return u_prev_; }
  const GoalState& goal() const { return goal_; }
  const DecisionVector& decision() const { return z_; }
  double t_now() const { return t_now_; }
  /// Tracking weights for k = 0..N-1 after scaling and scheduling.
  const std::vector<Diag6>& tracking_weights() const { return tracking_; }

  double penalty_weight() const { return penalty_; }
  void set_penalty_weight(double w) { penalty_ = w; }

  /// Objective at the given controls; +inf if the rollout is singular or
  /// non-finite.
  double objective(std::span<const ControlInput> controls) const;
  /// Objective and its gradient w.r.t. the flattened controls [a0, d0, a1, ...].
  double objective_and_gradient(std::span<const ControlInput> controls,
                                std::span<double> grad) const;

  std::vector<VehicleState> states(std::span<const ControlInput> controls) const;
  double lateral_violation(std::span<const VehicleState> states) const;

 private:
  VehicleState x_init_;
  ControlInput u_prev_;
  DecisionVector z_;
  GoalState goal_;
  double t_now_;
  MpcConfig cfg_;
  VehicleParams params_;
  int steps_;
  double penalty_;
  std::vector<Diag6> tracking_;
};

NlpProblem build_problem(const VehicleState& x_init, const ControlInput& u_prev,
                         const DecisionVector& z, const GoalState& goal, double t_now,
                         const MpcConfig& cfg, const VehicleParams& params = {});

/// Projected quasi-Newton solve with backtracking line search. The initial
/// iterate is the warm start (clamped, padded with its last control) when
/// given, zero controls otherwise.
Trajectory solve(NlpProblem problem,
                 const std::optional<std::vector<ControlInput>>& warm_start = {});

/// Shift a solution one step forward in time for warm starting.
std::vector<ControlInput> shift_controls(const std::vector<ControlInput>& controls);

/// Receding-horizon wrapper. Keeps the previous solution for warm starts.
class RecedingHorizonPlanner {
 public:
  RecedingHorizonPlanner(MpcConfig cfg, VehicleParams params, bool warm_start = true);

  Trajectory replan(const VehicleState& ego, const ControlInput& u_prev, const GoalState& goal,
                    const DecisionVector& z, double t_now);
  void reset() { previous_.reset(); }

  const MpcConfig& config() const { return cfg_; }
  const VehicleParams& params() const { return params_; }

 private:
  MpcConfig cfg_;
  VehicleParams params_;
  bool warm_start_;
  std::optional<std::vector<ControlInput>> previous_;
};

}  // namespace lcmpc
