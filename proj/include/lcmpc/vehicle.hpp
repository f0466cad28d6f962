#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

namespace lcmpc {

inline constexpr int kStateDim = 6;
inline constexpr int kControlDim = 2;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using ControlVec = Eigen::Matrix<double, kControlDim, 1>;

/// Planar vehicle state [p_x, p_y, phi, v_x, v_y, omega] in SI units.
/// The heading is never wrapped.
struct VehicleState {
  double p_x = 0.0;
  double p_y = 0.0;
  double phi = 0.0;
  double v_x = 0.0;
  double v_y = 0.0;
  double omega = 0.0;

  StateVec vec() const { return StateVec(p_x, p_y, phi, v_x, v_y, omega); }
  static VehicleState from_vec(const StateVec& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

  double operator[](int i) const { return vec()[i]; }
  bool finite() const;
  bool operator==(const VehicleState&) const = default;
};

/// Acceleration (m/s^2) and front steering angle (rad).
struct ControlInput {
  double a = 0.0;
  double delta = 0.0;

  ControlVec vec() const { return ControlVec(a, delta); }
  bool operator==(const ControlInput&) const = default;
};

/// Box limits on the control input.
struct ControlBounds {
  double a_min = -6.0;
  double a_max = 3.0;
  double delta_max = 0.6;

  ControlInput clamp(const ControlInput& u) const;
  bool contains(const ControlInput& u, double tol = 0.0) const;
};

/// Linear-tire bicycle parameters. Cornering stiffnesses are negative so
/// that the semi-implicit lateral update stays well defined at v_x = 0.
class VehicleParams {
 public:
  VehicleParams();  // mid-size sedan defaults
  VehicleParams(double mass, double l_f, double l_r, double k_f, double k_r, double i_z,
                double length, double width);

  double mass() const { return mass_; }
  double l_f() const { return l_f_; }
  double l_r() const { return l_r_; }
  double k_f() const { return k_f_; }
  double k_r() const { return k_r_; }
  double i_z() const { return i_z_; }
  double l_k() const { return l_k_; }
  double length() const { return length_; }
  double width() const { return width_; }

  bool operator==(const VehicleParams&) const = default;

 private:
  double mass_, l_f_, l_r_, k_f_, k_r_, i_z_, length_, width_;
  double l_k_;
};

/// Partial derivatives of one discrete step with respect to state and control.
struct StepJacobian {
  Eigen::Matrix<double, kStateDim, kStateDim> dx;
  Eigen::Matrix<double, kStateDim, kControlDim> du;
};

/// One step of the discrete dynamic bicycle model. Position, heading and
/// longitudinal speed use explicit Euler; v_y and omega use the semi-implicit
/// update whose denominators m*v_x - (k_f + k_r)*dt and
/// I_z*v_x - (l_f^2 k_f + l_r^2 k_r)*dt stay positive for v_x >= 0.
VehicleState step_dynamics(const VehicleState& x, const ControlInput& u, double dt,
                           const VehicleParams& p);

/// Same as step_dynamics, also returning its Jacobian. No input validation,
/// used on the solver hot path.
VehicleState step_dynamics_jac(const VehicleState& x, const ControlInput& u, double dt,
                               const VehicleParams& p, StepJacobian* jac);

/// Returns controls.size() + 1 states starting at x0.
std::vector<VehicleState> rollout(const VehicleState& x0, std::span<const ControlInput> controls,
                                  double dt, const VehicleParams& p);

}  // namespace lcmpc
