#pragma once

// Independent reference computations used by the tests. None of them call
// into the code under test beyond plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lcmpc/harness.hpp"

namespace oracle {

using State = std::array<double, 6>;

/// Continuous bicycle ODE right-hand side for v_x > 0.
inline State bicycle_rhs(const State& x, double a, double delta, const lcmpc::VehicleParams& p) {
  const double m = p.mass(), lf = p.l_f(), lr = p.l_r(), kf = p.k_f(), kr = p.k_r(), iz = p.i_z();
  const double lk = lf * kf - lr * kr;
  const double phi = x[2], vx = x[3], vy = x[4], w = x[5];
  State d;
  d[0] = vx * std::cos(phi) - vy * std::sin(phi);
  d[1] = vx * std::sin(phi) + vy * std::cos(phi);
  d[2] = w;
  d[3] = a;
  d[4] = ((kf + kr) * vy + lk * w - kf * delta * vx - m * vx * vx * w) / (m * vx);
  d[5] = (lk * vy - lf * kf * delta * vx + (lf * lf * kf + lr * lr * kr) * w) / (iz * vx);
  return d;
}

/// Classic fourth-order Runge-Kutta over `t` seconds with `steps` substeps.
inline State rk4(State x, double a, double delta, double t, int steps,
                 const lcmpc::VehicleParams& p) {
  const double h = t / steps;
  auto axpy = [](const State& x, const State& d, double s) {
    State r;
    for (int i = 0; i < 6; ++i) r[i] = x[i] + s * d[i];
    return r;
  };
  for (int n = 0; n < steps; ++n) {
    const State k1 = bicycle_rhs(x, a, delta, p);
    const State k2 = bicycle_rhs(axpy(x, k1, h / 2), a, delta, p);
    const State k3 = bicycle_rhs(axpy(x, k2, h / 2), a, delta, p);
    const State k4 = bicycle_rhs(axpy(x, k3, h), a, delta, p);
    for (int i = 0; i < 6; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return x;
}

/// Semi-implicit discrete step written out from the model equations.
inline State discrete_step(const State& x, double a, double delta, double dt,
                           const lcmpc::VehicleParams& p) {
  const double m = p.mass(), lf = p.l_f(), lr = p.l_r(), kf = p.k_f(), kr = p.k_r(), iz = p.i_z();
  const double lk = lf * kf - lr * kr;
  const double phi = x[2], vx = x[3], vy = x[4], w = x[5];
  State n;
  n[0] = x[0] + dt * (vx * std::cos(phi) - vy * std::sin(phi));
  n[1] = x[1] + dt * (vy * std::cos(phi) + vx * std::sin(phi));
  n[2] = phi + dt * w;
  n[3] = vx + dt * a;
  n[4] = (m * vx * vy + dt * lk * w - dt * kf * delta * vx - dt * m * vx * vx * w) /
         (m * vx - dt * (kf + kr));
  n[5] = (iz * vx * w + dt * lk * vy - dt * lf * kf * delta * vx) /
         (iz * vx - dt * (lf * lf * kf + lr * lr * kr));
  return n;
}

/// Lane-change MPC objective summed term by term along a straight rollout of
/// discrete_step. `penalty` weighs the squared lateral bound excess.
inline double mpc_cost(const State& x0, const std::array<double, 2>& u_prev,
                       const std::vector<std::array<double, 2>>& u, const State& goal,
                       const lcmpc::DecisionVector& z, double t_now, const lcmpc::MpcConfig& cfg,
                       const lcmpc::VehicleParams& p, double penalty) {
  const int n = static_cast<int>(u.size());
  std::vector<State> xs{x0};
  for (int k = 0; k < n; ++k) xs.push_back(discrete_step(xs.back(), u[k][0], u[k][1], cfg.dt, p));
  const auto ref = z.to_array();
  double cost = 0.0;
  for (int k = 0; k <= n; ++k) {
    for (int i = 0; i < 6; ++i) {
      const double e = xs[k][i] - goal[i];
      cost += cfg.q_x[i] * e * e;
    }
    if (k < n) {
      const double dt_tra = t_now + k * cfg.dt - z.t_tra;
      const double bell = std::exp(-cfg.gamma * dt_tra * dt_tra);
      for (int i = 0; i < 6; ++i) {
        const double e = xs[k][i] - ref[i];
        cost += z.q_max[i] * cfg.q_x[i] * bell * e * e;
      }
    }
    if (k > 0) {
      double excess = 0.0;
      if (xs[k][1] > cfg.p_y_max) excess = xs[k][1] - cfg.p_y_max;
      if (xs[k][1] < cfg.p_y_min) excess = cfg.p_y_min - xs[k][1];
      cost += penalty * excess * excess;
    }
  }
  std::array<double, 2> prev = u_prev;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < 2; ++j) {
      cost += cfg.q_u[j] * u[k][j] * u[k][j];
      const double d = u[k][j] - prev[j];
      cost += cfg.q_du[j] * d * d;
    }
    prev = u[k];
  }
  return cost;
}

using Point = std::array<double, 2>;
using Quad = std::array<Point, 4>;

inline Quad rectangle(double cx, double cy, double heading, double length, double width) {
  const double c = std::cos(heading), s = std::sin(heading);
  const double hl = length / 2, hw = width / 2;
  const std::array<Point, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  Quad q;
  for (int i = 0; i < 4; ++i) {
    q[i] = {cx + c * local[i][0] - s * local[i][1], cy + s * local[i][0] + c * local[i][1]};
  }
  return q;
}

inline double cross(const Point& o, const Point& a, const Point& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

/// Strict containment of p in a counter-clockwise convex quad.
inline bool inside(const Quad& q, const Point& p) {
  for (int i = 0; i < 4; ++i) {
    if (cross(q[i], q[(i + 1) % 4], p) <= 0) return false;
  }
  return true;
}

inline bool segments_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

/// Interior overlap of two convex quads via edge crossings and containment.
inline bool quads_overlap(const Quad& a, const Quad& b) {
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (segments_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
    }
  }
  return inside(a, b[0]) || inside(b, a[0]);
}

/// Plain-loop forward pass of the policy network.
inline std::vector<double> mlp_forward(const lcmpc::Observation& o, const lcmpc::PolicyParams& p) {
  std::vector<double> h(o.size());
  for (std::size_t i = 0; i < o.size(); ++i) h[i] = (o[i] - p.norm.mean[i]) / p.norm.std[i];
  for (int l = 0; l < lcmpc::kLayers; ++l) {
    const auto& w = p.net.w[l];
    std::vector<double> out(w.rows());
    for (int r = 0; r < w.rows(); ++r) {
      double s = p.net.b[l][r];
      for (int c = 0; c < w.cols(); ++c) s += w(r, c) * h[c];
      if (l + 1 < lcmpc::kLayers && s < 0) s *= 0.01;
      out[r] = s;
    }
    h = std::move(out);
  }
  return h;
}

/// Addresses of every weight and bias in flattened (row-major, weights then
/// bias per layer) order.
inline std::vector<double*> parameter_slots(lcmpc::MlpTensors& t) {
  std::vector<double*> out;
  for (int l = 0; l < lcmpc::kLayers; ++l) {
    for (Eigen::Index r = 0; r < t.w[l].rows(); ++r)
      for (Eigen::Index c = 0; c < t.w[l].cols(); ++c) out.push_back(&t.w[l](r, c));
    for (Eigen::Index r = 0; r < t.b[l].size(); ++r) out.push_back(&t.b[l][r]);
  }
  return out;
}

/// Largest relative error between `grad` (flattened) and central differences
/// of g . forward(o, p) over every parameter. The denominator is
/// max(|analytic|, |numeric|, floor).
inline double policy_gradient_error(const lcmpc::Observation& o, const lcmpc::PolicyParams& p,
                                    const std::array<double, lcmpc::kDecisionDim>& g,
                                    const std::vector<double>& grad, double h, double floor) {
  lcmpc::PolicyParams q = p;
  const auto slots = parameter_slots(q.net);
  auto objective = [&] {
    const auto z = lcmpc::forward(o, q).to_array();
    double s = 0;
    for (int i = 0; i < lcmpc::kDecisionDim; ++i) s += z[i] * g[i];
    return s;
  };
  double worst = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double keep = *slots[i];
    *slots[i] = keep + h;
    const double up = objective();
    *slots[i] = keep - h;
    const double dn = objective();
    *slots[i] = keep;
    const double fd = (up - dn) / (2 * h);
    const double den = std::max({std::abs(grad[i]), std::abs(fd), floor});
    worst = std::max(worst, std::abs(grad[i] - fd) / den);
  }
  return worst;
}

/// Term-by-term dense shaping reward.
inline double shaping(const lcmpc::DecisionVector& z, const lcmpc::Observation& o, double t,
                      const lcmpc::RewardConfig& c) {
  auto outside = [](double v, double lo, double hi) {
    if (v > hi) return v - hi;
    if (v < lo) return lo - v;
    return 0.0;
  };
  double r = -c.c_x * std::fabs(z.x_tra.p_x - o[4]);
  r -= c.c_y * outside(z.x_tra.p_y, c.p_y_min, c.p_y_max);
  r -= c.c_t * std::fabs(t);
  r -= c.c_dt * outside(z.t_tra, c.t_min, c.t_max);
  r -= c.c_dphi * outside(z.x_tra.phi, c.phi_min, c.phi_max);
  for (int i = 0; i < 6; ++i) {
    if (z.q_max[i] < 0) r -= c.c_q[i] * -z.q_max[i];
  }
  return r;
}

inline lcmpc::DecisionVector random_decision(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::array<double, lcmpc::kDecisionDim> a;
  for (auto& v : a) v = u(rng);
  return lcmpc::DecisionVector::from_array(a);
}

}  // namespace oracle
