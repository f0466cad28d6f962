#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lcmpc/mpc.hpp"
#include "lcmpc/vehicle.hpp"

namespace lcmpc {

inline constexpr int kObservationDim = 10;

enum class RewardMode { Shaping, LaneChange, LaneChangeEnhanced };

std::string to_string(RewardMode m);

/// Traffic-flow speed distribution and reward mode of one training phase.
struct CurriculumSpec {
  int id = 1;
  double mu = 0.0;     // mean flow speed (m/s)
  double sigma = 0.0;  // flow speed std (m/s)
  RewardMode mode = RewardMode::Shaping;

  /// The three default phases: static flow, slow flow, normal flow.
  static CurriculumSpec standard(int id);
};

/// Scenario constants. Lanes are 5 m wide: the ego starts on the lower lane
/// (center -2.5), the chance moves on the middle lane (center 2.5).
struct ScenarioConfig {
  double ego_p_x_mean = 30.0;
  double ego_p_x_std = 2.5;
  double ego_p_y = -2.5;
  double ego_v_x = 1.5;

  double gap_p_x_mean = 50.0;
  double gap_p_x_std = 10.0;
  double gap_p_y = 2.5;
  double gap_width = 12.0;  // free space between the bounding flow vehicles

  int flow_per_lane = 4;
  double flow_spacing = 4.0;  // bumper-to-bumper distance away from the chance
  bool upper_lane = true;
  double lane_width = 5.0;

  int front_count = 2;
  double front_speed = 1.5;
  double front_lead = 25.0;  // nearest front vehicle ahead of the chance center
  double front_spacing = 10.0;

  double other_length = 4.5;
  double other_width = 2.0;

  double t_max = 10.0;

  double success_lateral_tol = 0.5;
  double success_heading_tol = 0.1;
  double success_speed_tol = 1.5;
  double success_clearance_fraction = 0.2;

  void validate() const;
};

/// Everything needed to run an episode besides the decision vector.
struct EpisodeConfig {
  VehicleParams vehicle;
  MpcConfig mpc;
  ScenarioConfig scenario;
};

struct OtherVehicle {
  int lane = 0;  // 0 lower, 1 middle, 2 upper
  double p_x = 0.0;
  double p_y = 0.0;
  double v_x = 0.0;
  double length = 4.5;
  double width = 2.0;

  bool operator==(const OtherVehicle&) const = default;
};

struct Gap {
  double p_x = 0.0;
  double p_y = 2.5;
  double v_x = 0.0;
  double width = 12.0;

  bool operator==(const Gap&) const = default;
};

/// Episode-start observation
/// [ego p_x, p_y, phi, v_x, gap p_x, p_y, v_x, front p_x, p_y, v_x].
using Observation = std::array<double, kObservationDim>;

struct TrafficScene {
  VehicleState ego;
  VehicleParams ego_params;
  std::vector<OtherVehicle> flow;   // middle and upper lanes
  std::vector<OtherVehicle> front;  // slow vehicles on the ego lane
  Gap gap;
  double middle_speed = 0.0;  // speed process shared by the middle-lane flow and the gap
  double upper_speed = 0.0;
  double front_lane_speed = 0.0;
  double t_now = 0.0;
  int step = 0;
  std::uint64_t seed = 0;
  CurriculumSpec curriculum;
  ScenarioConfig scenario;
  std::mt19937_64 rng;

  /// Nearest front vehicle ahead of the ego (the last one behind if none is ahead).
  const OtherVehicle& nearest_front() const;
  Observation observe() const;
};

/// Samples a new scene. Deterministic for a given seed.
std::pair<TrafficScene, Observation> reset(const CurriculumSpec& curriculum, std::uint64_t seed,
                                           const ScenarioConfig& scenario = {},
                                           const VehicleParams& ego_params = {});

/// Advances the ego with the bicycle model (v_x clamped at 0) and every
/// lane at its noisy common speed.
TrafficScene step_scene(TrafficScene scene, const ControlInput& ego_control, double dt);

struct CollisionCheck {
  bool collided = false;
  double ego_speed = 0.0;  // sqrt(v_x^2 + v_y^2)
};

/// Oriented ego rectangle against another vehicle's axis-aligned rectangle.
bool boxes_overlap(const VehicleState& ego, double ego_length, double ego_width,
                   const OtherVehicle& other);

CollisionCheck check_collision(const TrafficScene& scene);
bool check_success(const TrafficScene& scene);

GoalState goal_from_scene(const TrafficScene& scene);

/// Receding-horizon replan against the live gap.
Trajectory replan(RecedingHorizonPlanner& planner, const TrafficScene& scene,
                  const DecisionVector& z, const ControlInput& u_prev);

enum class EpisodeStatus { Success, Collision, TimeOut };

std::string to_string(EpisodeStatus s);

struct StepRecord {
  double t = 0.0;
  VehicleState ego;
  ControlInput control;  // control executed to reach this state (zero for the first record)
  Gap gap;
  double plan_cost = 0.0;
  SolverStatus plan_status = SolverStatus::Converged;
  int plan_iterations = 0;
  std::vector<VehicleState> plan;  // planned trajectory behind this step, if recorded
  std::vector<ControlInput> plan_controls;
};

struct EpisodeOutcome {
  EpisodeStatus status = EpisodeStatus::TimeOut;
  double t_end = 0.0;
  std::vector<double> collision_speeds;
  bool aborted = false;  // MPC numerical failure, counted as a collision
  std::string abort_reason;
  std::vector<StepRecord> steps;  // initial record plus one per executed step
  Observation observation{};
  std::uint64_t seed = 0;
};

struct EpisodeOptions {
  bool record_plans = false;
  bool warm_start = true;
};

EpisodeOutcome run_episode(const DecisionVector& z, const CurriculumSpec& curriculum,
                           std::uint64_t seed, const EpisodeConfig& cfg,
                           const EpisodeOptions& opts = {});

}  // namespace lcmpc
