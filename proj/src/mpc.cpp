#include "lcmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double weighted_sq(const StateVec& d, const Diag6& w) {
  double s = 0.0;
  for (int i = 0; i < kStateDim; ++i) s += w[i] * d[i] * d[i];
  return s;
}

double lateral_excess(double p_y, double lo, double hi) {
  if (p_y > hi) return p_y - hi;
  if (p_y < lo) return p_y - lo;  // negative
  return 0.0;
}

std::vector<double> flatten(std::span<const ControlInput> u) {
  std::vector<double> out(2 * u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    out[2 * k] = u[k].a;
    out[2 * k + 1] = u[k].delta;
  }
  return out;
}

std::vector<ControlInput> unflatten(std::span<const double> v) {
  std::vector<ControlInput> out(v.size() / 2);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {v[2 * k], v[2 * k + 1]};
  return out;
}

struct Box {
  std::vector<double> lo, hi;

  Box(int steps, const ControlBounds& b) : lo(2 * steps), hi(2 * steps) {
    for (int k = 0; k < steps; ++k) {
      lo[2 * k] = b.a_min;
      hi[2 * k] = b.a_max;
      lo[2 * k + 1] = -b.delta_max;
      hi[2 * k + 1] = b.delta_max;
    }
  }

  double project(std::size_t i, double v) const { return std::clamp(v, lo[i], hi[i]); }

  double residual(std::span<const double> u, std::span<const double> g) const {
    double r = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
      r = std::max(r, std::abs(project(i, u[i] - g[i]) - u[i]));
    return r;
  }

  // Bound-active variables whose gradient pushes further out.
  bool active(std::size_t i, double u, double g) const {
    return (u <= lo[i] && g > 0.0) || (u >= hi[i] && g < 0.0);
  }
};

/// Limited-memory inverse-Hessian product restricted to the free variables.
class LbfgsMemory {
 public:
  explicit LbfgsMemory(int size) : size_(size) {}

  void clear() { pairs_.clear(); }

  void push(std::vector<double> s, std::vector<double> y) {
    const double sy = dot(s, y);
    if (!(sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y)))) return;
    pairs_.push_back({std::move(s), std::move(y), 1.0 / sy});
    if (static_cast<int>(pairs_.size()) > size_) pairs_.pop_front();
  }

  bool empty() const { return pairs_.empty(); }

  std::vector<double> apply(std::span<const double> g, const std::vector<bool>& free) const {
    const std::size_t n = g.size();
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = free[i] ? g[i] : 0.0;
    std::vector<double> alpha(pairs_.size());
    for (std::size_t j = pairs_.size(); j-- > 0;) {
      const auto& p = pairs_[j];
      alpha[j] = p.rho * masked_dot(p.s, q, free);
      for (std::size_t i = 0; i < n; ++i)
        if (free[i]) q[i] -= alpha[j] * p.y[i];
    }
    const auto& last = pairs_.back();
    const double scale = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : q) v *= scale;
    for (std::size_t j = 0; j < pairs_.size(); ++j) {
      const auto& p = pairs_[j];
      const double beta = p.rho * masked_dot(p.y, q, free);
      for (std::size_t i = 0; i < n; ++i)
        if (free[i]) q[i] += (alpha[j] - beta) * p.s[i];
    }
    return q;
  }

 private:
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };

  static double masked_dot(const std::vector<double>& a, const std::vector<double>& b,
                           const std::vector<bool>& free) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (free[i]) s += a[i] * b[i];
    return s;
  }

  int size_;
  std::deque<Pair> pairs_;
};

struct SolveResult {
  std::vector<double> u;
  double f;
  int iterations;
  double residual;
  bool converged;
};

SolveResult run_projected_lbfgs(const NlpProblem& problem, std::vector<double> u,
                                std::vector<double>& history) {
  const auto& cfg = problem.config();
  const int steps = problem.steps();
  const Box box(steps, cfg.bounds);
  const std::size_t n = u.size();

  auto eval_f = [&](const std::vector<double>& v) {
    const auto c = unflatten(v);
    return problem.objective(c);
  };
  auto eval_fg = [&](const std::vector<double>& v, std::vector<double>& g) {
    const auto c = unflatten(v);
    return problem.objective_and_gradient(c, g);
  };

  std::vector<double> g(n), g_new(n), u_new(n), d(n);
  double f = eval_fg(u, g);
  if (!std::isfinite(f)) {
    throw NumericalFailureError("MPC objective is not finite at the initial iterate", u);
  }
  history.push_back(f);

  LbfgsMemory memory(cfg.lbfgs_memory);
  std::vector<bool> free(n);
  int it = 0;
  double residual = box.residual(u, g);
  while (residual > cfg.tolerance && it < cfg.max_iterations) {
    for (std::size_t i = 0; i < n; ++i) free[i] = !box.active(i, u[i], g[i]);

    bool steepest = memory.empty();
    if (!steepest) {
      d = memory.apply(g, free);
      for (double& v : d) v = -v;
      if (!(dot(d, g) < 0.0)) steepest = true;
    }
    double alpha = 1.0;
    if (steepest) {
      double gmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = free[i] ? -g[i] : 0.0;
        gmax = std::max(gmax, std::abs(d[i]));
      }
      alpha = gmax > 1.0 ? 1.0 / gmax : 1.0;
    }

    // Backtracking along the projected path.
    double f_new = kInf;
    bool accepted = false;
    while (alpha >= kMinStep) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        u_new[i] = box.project(i, u[i] + alpha * d[i]);
        decrease += g[i] * (u_new[i] - u[i]);
      }
      f_new = eval_f(u_new);
      if (std::isfinite(f_new) && f_new <= f + kArmijo * decrease && decrease < 0.0) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;  // retry once from steepest descent
      }
      break;
    }

    f_new = eval_fg(u_new, g_new);
    if (!std::isfinite(f_new)) {
      throw NumericalFailureError("MPC objective became non-finite", u_new);
    }
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u_new[i] - u[i];
      y[i] = g_new[i] - g[i];
    }
    memory.push(std::move(s), std::move(y));
    u.swap(u_new);
    g.swap(g_new);
    f = f_new;
    history.push_back(f);
    ++it;
    residual = box.residual(u, g);
  }
  return {std::move(u), f, it, residual, residual <= cfg.tolerance};
}

}  // namespace

std::array<double, kDecisionDim> DecisionVector::to_array() const {
  return {x_tra.p_x, x_tra.p_y, x_tra.phi, x_tra.v_x, x_tra.v_y, x_tra.omega, q_max[0],
          q_max[1],  q_max[2],  q_max[3],  q_max[4],  q_max[5],  t_tra};
}

DecisionVector DecisionVector::from_array(std::span<const double> z) {
  if (z.size() != kDecisionDim) {
    throw InvalidInputError("decision vector must have 13 entries, got " +
                            std::to_string(z.size()));
  }
  DecisionVector out;
  out.x_tra = {z[0], z[1], z[2], z[3], z[4], z[5]};
  std::copy(z.begin() + 6, z.begin() + 12, out.q_max.begin());
  out.t_tra = z[12];
  return out;
}

int MpcConfig::steps() const { return static_cast<int>(std::lround(horizon / dt)); }

void MpcConfig::validate() const {
  if (!(dt > 0)) throw ConfigError("mpc.dt", "must be positive");
  if (!(horizon > 0) || steps() < 2) throw ConfigError("mpc.horizon", "must span at least 2 steps");
  for (int i = 0; i < kStateDim; ++i)
    if (!(q_x[i] >= 0)) throw ConfigError("mpc.q_x", "weights must be nonnegative");
  for (int i = 0; i < kControlDim; ++i) {
    if (!(q_u[i] >= 0)) throw ConfigError("mpc.q_u", "weights must be nonnegative");
    if (!(q_du[i] >= 0)) throw ConfigError("mpc.q_du", "weights must be nonnegative");
  }
  if (!(gamma > 0)) throw ConfigError("mpc.gamma", "must be positive");
  if (!(p_y_min < p_y_max)) throw ConfigError("mpc.p_y_min", "must be below mpc.p_y_max");
  if (!(bounds.a_min < bounds.a_max)) throw ConfigError("mpc.a_min", "must be below mpc.a_max");
  if (!(bounds.delta_max > 0)) throw ConfigError("mpc.delta_max", "must be positive");
  if (max_iterations < 1) throw ConfigError("mpc.max_iterations", "must be at least 1");
  if (!(tolerance > 0)) throw ConfigError("mpc.tolerance", "must be positive");
  if (!(lateral_penalty > 0)) throw ConfigError("mpc.lateral_penalty", "must be positive");
  if (!(penalty_escalation >= 1)) throw ConfigError("mpc.penalty_escalation", "must be >= 1");
  if (!(lateral_tolerance >= 0)) throw ConfigError("mpc.lateral_tolerance", "must be >= 0");
  if (lbfgs_memory < 1) throw ConfigError("mpc.lbfgs_memory", "must be at least 1");
}

GoalState GoalState::from_gap(double gap_p_x, double gap_v_x, double lane_center) {
  return {VehicleState{gap_p_x, lane_center, 0.0, gap_v_x, 0.0, 0.0}};
}

std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged:
      return "converged";
    case SolverStatus::MaxIterations:
      return "max-iterations";
    case SolverStatus::InfeasibleRelaxed:
      return "infeasible-relaxed";
  }
  return "unknown";
}

Diag6 scale_q_max(const Diag6& q_max, const Diag6& q_x) {
  Diag6 out;
  for (int i = 0; i < kStateDim; ++i) out[i] = q_max[i] * q_x[i];
  return out;
}

Diag6 weight_schedule(double t_tra, int k, double t_now, const Diag6& q_max_scaled, double gamma,
                      double dt) {
  const double tau = t_now + k * dt - t_tra;
  const double w = std::exp(-gamma * tau * tau);
  Diag6 out;
  for (int i = 0; i < kStateDim; ++i) out[i] = q_max_scaled[i] * w;
  return out;
}

NlpProblem::NlpProblem(const VehicleState& x_init, const ControlInput& u_prev,
                       const DecisionVector& z, const GoalState& goal, double t_now,
                       const MpcConfig& cfg, const VehicleParams& params)
    : x_init_(x_init),
      u_prev_(u_prev),
      z_(z),
      goal_(goal),
      t_now_(t_now),
      cfg_(cfg),
      params_(params),
      steps_(cfg.steps()),
      penalty_(cfg.lateral_penalty) {
  cfg_.validate();
  if (!x_init.finite()) throw InvalidInputError("build_problem: non-finite initial state");
  const Diag6 scaled = scale_q_max(z.q_max, cfg.q_x);
  tracking_.reserve(steps_);
  for (int k = 0; k < steps_; ++k) {
    tracking_.push_back(weight_schedule(z.t_tra, k, t_now, scaled, cfg.gamma, cfg.dt));
  }
}

std::vector<VehicleState> NlpProblem::states(std::span<const ControlInput> controls) const {
  std::vector<VehicleState> xs;
  xs.reserve(controls.size() + 1);
  xs.push_back(x_init_);
  for (const auto& u : controls)
    xs.push_back(step_dynamics_jac(xs.back(), u, cfg_.dt, params_, nullptr));
  return xs;
}

double NlpProblem::lateral_violation(std::span<const VehicleState> xs) const {
  double v = 0.0;
  for (std::size_t k = 1; k < xs.size(); ++k)
    v = std::max(v, std::abs(lateral_excess(xs[k].p_y, cfg_.p_y_min, cfg_.p_y_max)));
  return v;
}

double NlpProblem::objective(std::span<const ControlInput> controls) const {
  std::vector<double> unused;
  return objective_and_gradient(controls, unused);
}

double NlpProblem::objective_and_gradient(std::span<const ControlInput> controls,
                                          std::span<double> grad) const {
  const bool want_grad = !grad.empty();
  const int n = steps_;
  if (static_cast<int>(controls.size()) != n) {
    throw InvalidInputError("control sequence length does not match the horizon");
  }

  const StateVec goal = goal_.target.vec();
  const StateVec ref = z_.x_tra.vec();

  std::vector<StepJacobian> jac(want_grad ? n : 0);
  std::vector<StateVec> xs(n + 1);
  xs[0] = x_init_.vec();
  VehicleState x = x_init_;
  try {
    for (int k = 0; k < n; ++k) {
      x = step_dynamics_jac(x, controls[k], cfg_.dt, params_, want_grad ? &jac[k] : nullptr);
      xs[k + 1] = x.vec();
    }
  } catch (const SingularDynamicsError&) {
    return kInf;
  }

  double cost = 0.0;
  for (int k = 0; k <= n; ++k) {
    cost += weighted_sq(xs[k] - goal, cfg_.q_x);
    if (k < n) cost += weighted_sq(xs[k] - ref, tracking_[k]);
    if (k > 0) {
      const double e = lateral_excess(xs[k][1], cfg_.p_y_min, cfg_.p_y_max);
      cost += penalty_ * e * e;
    }
  }
  ControlInput prev = u_prev_;
  for (int k = 0; k < n; ++k) {
    const auto& u = controls[k];
    const double da = u.a - prev.a;
    const double dd = u.delta - prev.delta;
    cost += cfg_.q_u[0] * u.a * u.a + cfg_.q_u[1] * u.delta * u.delta;
    cost += cfg_.q_du[0] * da * da + cfg_.q_du[1] * dd * dd;
    prev = u;
  }
  if (!std::isfinite(cost)) return kInf;
  if (!want_grad) return cost;

  auto state_grad = [&](int k) {
    StateVec g;
    const StateVec dg = xs[k] - goal;
    for (int i = 0; i < kStateDim; ++i) g[i] = 2.0 * cfg_.q_x[i] * dg[i];
    if (k < n) {
      const StateVec dr = xs[k] - ref;
      for (int i = 0; i < kStateDim; ++i) g[i] += 2.0 * tracking_[k][i] * dr[i];
    }
    if (k > 0) g[1] += 2.0 * penalty_ * lateral_excess(xs[k][1], cfg_.p_y_min, cfg_.p_y_max);
    return g;
  };

  StateVec lambda = state_grad(n);
  for (int k = n - 1; k >= 0; --k) {
    const auto& u = controls[k];
    const ControlInput& before = k > 0 ? controls[k - 1] : u_prev_;
    double ga = 2.0 * cfg_.q_u[0] * u.a + 2.0 * cfg_.q_du[0] * (u.a - before.a);
    double gd = 2.0 * cfg_.q_u[1] * u.delta + 2.0 * cfg_.q_du[1] * (u.delta - before.delta);
    if (k + 1 < n) {
      const auto& after = controls[k + 1];
      ga -= 2.0 * cfg_.q_du[0] * (after.a - u.a);
      gd -= 2.0 * cfg_.q_du[1] * (after.delta - u.delta);
    }
    const ControlVec gu = jac[k].du.transpose() * lambda;
    grad[2 * k] = ga + gu[0];
    grad[2 * k + 1] = gd + gu[1];
    lambda = state_grad(k) + jac[k].dx.transpose() * lambda;
  }
  return cost;
}

NlpProblem build_problem(const VehicleState& x_init, const ControlInput& u_prev,
                         const DecisionVector& z, const GoalState& goal, double t_now,
                         const MpcConfig& cfg, const VehicleParams& params) {
  return NlpProblem(x_init, u_prev, z, goal, t_now, cfg, params);
}

Trajectory solve(NlpProblem problem, const std::optional<std::vector<ControlInput>>& warm_start) {
  const auto& cfg = problem.config();
  const int n = problem.steps();
  std::vector<ControlInput> init(n);
  if (warm_start && !warm_start->empty()) {
    for (int k = 0; k < n; ++k) {
      const auto idx = std::min<std::size_t>(k, warm_start->size() - 1);
      init[k] = cfg.bounds.clamp((*warm_start)[idx]);
    }
  }

  Trajectory traj;
  auto result = run_projected_lbfgs(problem, flatten(init), traj.objective_history);
  int iterations = result.iterations;
  auto controls = unflatten(result.u);
  auto states = problem.states(controls);
  double violation = problem.lateral_violation(states);

  if (result.converged && violation > 1e-3 && cfg.penalty_escalation > 1.0) {
    problem.set_penalty_weight(problem.penalty_weight() * cfg.penalty_escalation);
    std::vector<double> escalated_history;
    result = run_projected_lbfgs(problem, result.u, escalated_history);
    iterations += result.iterations;
    controls = unflatten(result.u);
    states = problem.states(controls);
    violation = problem.lateral_violation(states);
  }

  traj.states = std::move(states);
  traj.controls = std::move(controls);
  traj.cost = result.f;
  traj.iterations = iterations;
  traj.stationarity = result.residual;
  traj.lateral_violation = violation;
  traj.penalty_weight = problem.penalty_weight();
  if (violation > cfg.lateral_tolerance) {
    traj.status = SolverStatus::InfeasibleRelaxed;
  } else {
    traj.status = result.converged ? SolverStatus::Converged : SolverStatus::MaxIterations;
  }
  return traj;
}

std::vector<ControlInput> shift_controls(const std::vector<ControlInput>& controls) {
  if (controls.size() < 2) return controls;
  std::vector<ControlInput> out(controls.begin() + 1, controls.end());
  out.push_back(controls.back());
  return out;
}

RecedingHorizonPlanner::RecedingHorizonPlanner(MpcConfig cfg, VehicleParams params, bool warm_start)
    : cfg_(std::move(cfg)), params_(std::move(params)), warm_start_(warm_start) {
  cfg_.validate();
}

Trajectory RecedingHorizonPlanner::replan(const VehicleState& ego, const ControlInput& u_prev,
                                          const GoalState& goal, const DecisionVector& z,
                                          double t_now) {
  auto problem = build_problem(ego, u_prev, z, goal, t_now, cfg_, params_);
  std::optional<std::vector<ControlInput>> init;
  if (warm_start_ && previous_) init = shift_controls(*previous_);
  auto traj = solve(std::move(problem), init);
  previous_ = traj.controls;
  return traj;
}

}  // namespace lcmpc
