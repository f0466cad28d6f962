#include "lcmpc/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

constexpr double kMinDenominator = 1e-9;

bool all_finite(std::initializer_list<double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

bool VehicleState::finite() const { return all_finite({p_x, p_y, phi, v_x, v_y, omega}); }

ControlInput ControlBounds::clamp(const ControlInput& u) const {
  return {std::clamp(u.a, a_min, a_max), std::clamp(u.delta, -delta_max, delta_max)};
}

bool ControlBounds::contains(const ControlInput& u, double tol) const {
  return u.a >= a_min - tol && u.a <= a_max + tol && u.delta >= -delta_max - tol &&
         u.delta <= delta_max + tol;
}

VehicleParams::VehicleParams()
    : VehicleParams(1412.0, 1.06, 1.85, -128916.0, -85944.0, 1536.7, 4.5, 2.0) {}

VehicleParams::VehicleParams(double mass, double l_f, double l_r, double k_f, double k_r,
                             double i_z, double length, double width)
    : mass_(mass),
      l_f_(l_f),
      l_r_(l_r),
      k_f_(k_f),
      k_r_(k_r),
      i_z_(i_z),
      length_(length),
      width_(width),
      l_k_(l_f * k_f - l_r * k_r) {
  if (!all_finite({mass, l_f, l_r, k_f, k_r, i_z, length, width})) {
    throw InvalidInputError("vehicle parameters must be finite");
  }
  if (mass <= 0 || l_f <= 0 || l_r <= 0 || i_z <= 0) {
    throw InvalidInputError("vehicle mass, axle distances and inertia must be positive");
  }
  if (k_f >= 0 || k_r >= 0) {
    throw InvalidInputError("cornering stiffnesses must be negative");
  }
  if (length <= 0 || width <= 0) {
    throw InvalidInputError("vehicle body dimensions must be positive");
  }
}

VehicleState step_dynamics_jac(const VehicleState& x, const ControlInput& u, double dt,
                               const VehicleParams& p, StepJacobian* jac) {
  const double m = p.mass();
  const double kf = p.k_f();
  const double kr = p.k_r();
  const double lf = p.l_f();
  const double lr = p.l_r();
  const double iz = p.i_z();
  const double lk = p.l_k();

  const double c = std::cos(x.phi);
  const double s = std::sin(x.phi);
  const double vx = x.v_x;

  const double den_v = m * vx - (kf + kr) * dt;
  const double num_v =
      m * vx * x.v_y + lk * x.omega * dt - kf * u.delta * vx * dt - m * vx * vx * x.omega * dt;
  const double yaw_stiff = lf * lf * kf + lr * lr * kr;
  const double den_w = iz * vx - yaw_stiff * dt;
  const double num_w = iz * vx * x.omega + lk * x.v_y * dt - lf * kf * u.delta * vx * dt;

  if (std::abs(den_v) < kMinDenominator || std::abs(den_w) < kMinDenominator) {
    throw SingularDynamicsError("bicycle model denominator vanished at v_x = " +
                                std::to_string(vx));
  }

  VehicleState next;
  next.p_x = x.p_x + (vx * c - x.v_y * s) * dt;
  next.p_y = x.p_y + (vx * s + x.v_y * c) * dt;
  next.phi = x.phi + x.omega * dt;
  next.v_x = vx + u.a * dt;
  next.v_y = num_v / den_v;
  next.omega = num_w / den_w;

  if (jac != nullptr) {
    auto& A = jac->dx;
    auto& B = jac->du;
    A.setIdentity();
    B.setZero();

    A(0, 2) = (-vx * s - x.v_y * c) * dt;
    A(0, 3) = c * dt;
    A(0, 4) = -s * dt;

    A(1, 2) = (vx * c - x.v_y * s) * dt;
    A(1, 3) = s * dt;
    A(1, 4) = c * dt;

    A(2, 5) = dt;
    B(3, 0) = dt;

    const double dnum_v_dvx = m * x.v_y - kf * u.delta * dt - 2.0 * m * vx * x.omega * dt;
    A(4, 3) = (dnum_v_dvx * den_v - num_v * m) / (den_v * den_v);
    A(4, 4) = m * vx / den_v;
    A(4, 5) = (lk * dt - m * vx * vx * dt) / den_v;
    B(4, 1) = -kf * vx * dt / den_v;

    const double dnum_w_dvx = iz * x.omega - lf * kf * u.delta * dt;
    A(5, 3) = (dnum_w_dvx * den_w - num_w * iz) / (den_w * den_w);
    A(5, 4) = lk * dt / den_w;
    A(5, 5) = iz * vx / den_w;
    B(5, 1) = -lf * kf * vx * dt / den_w;
  }
  return next;
}

VehicleState step_dynamics(const VehicleState& x, const ControlInput& u, double dt,
                           const VehicleParams& p) {
  if (!x.finite() || !all_finite({u.a, u.delta, dt})) {
    throw InvalidInputError("step_dynamics: non-finite state, control or step");
  }
  if (dt <= 0) {
    throw InvalidInputError("step_dynamics: dt must be positive");
  }
  return step_dynamics_jac(x, u, dt, p, nullptr);
}

std::vector<VehicleState> rollout(const VehicleState& x0, std::span<const ControlInput> controls,
                                  double dt, const VehicleParams& p) {
  if (controls.empty()) {
    throw InvalidInputError("rollout: empty control sequence");
  }
  std::vector<VehicleState> states;
  states.reserve(controls.size() + 1);
  states.push_back(x0);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    try {
      states.push_back(step_dynamics(states.back(), controls[k], dt, p));
    } catch (const InvalidInputError& e) {
      throw InvalidInputError("rollout step " + std::to_string(k) + ": " + e.what());
    } catch (const SingularDynamicsError& e) {
      throw SingularDynamicsError("rollout step " + std::to_string(k) + ": " + e.what());
    }
  }
  return states;
}

}  // namespace lcmpc
