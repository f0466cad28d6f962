#include "lcmpc/traffic.hpp"

#include <algorithm>
#include <cmath>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

double sample_normal(std::mt19937_64& rng, double mean, double stddev) {
  if (stddev <= 0.0) return mean;
  std::normal_distribution<double> dist(mean, stddev);
  return dist(rng);
}

struct Interval {
  double lo, hi;
};

Interval project_box(const std::array<std::array<double, 2>, 4>& corners, double ax, double ay) {
  Interval iv{corners[0][0] * ax + corners[0][1] * ay, corners[0][0] * ax + corners[0][1] * ay};
  for (int i = 1; i < 4; ++i) {
    const double p = corners[i][0] * ax + corners[i][1] * ay;
    iv.lo = std::min(iv.lo, p);
    iv.hi = std::max(iv.hi, p);
  }
  return iv;
}

}  // namespace

std::string to_string(RewardMode m) {
  switch (m) {
    case RewardMode::Shaping:
      return "shaping";
    case RewardMode::LaneChange:
      return "lane-change";
    case RewardMode::LaneChangeEnhanced:
      return "lane-change-enhanced";
  }
  return "unknown";
}

std::string to_string(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Success:
      return "success";
    case EpisodeStatus::Collision:
      return "collision";
    case EpisodeStatus::TimeOut:
      return "time-out";
  }
  return "unknown";
}

CurriculumSpec CurriculumSpec::standard(int id) {
  switch (id) {
    case 1:
      return {1, 0.0, 0.0, RewardMode::Shaping};
    case 2:
      return {2, 2.0, 0.5, RewardMode::LaneChange};
    case 3:
      return {3, 4.0, 1.0, RewardMode::LaneChangeEnhanced};
    default:
      throw InvalidInputError("unknown curriculum id " + std::to_string(id));
  }
}

void ScenarioConfig::validate() const {
  if (!(ego_p_x_std >= 0)) throw ConfigError("scenario.ego_p_x_std", "must be >= 0");
  if (!(ego_v_x >= 0)) throw ConfigError("scenario.ego_v_x", "must be >= 0");
  if (!(gap_p_x_std >= 0)) throw ConfigError("scenario.gap_p_x_std", "must be >= 0");
  if (!(gap_width > 0)) throw ConfigError("scenario.gap_width", "must be positive");
  if (flow_per_lane < 2) throw ConfigError("scenario.flow_per_lane", "must be at least 2");
  if (!(flow_spacing >= 0)) throw ConfigError("scenario.flow_spacing", "must be >= 0");
  if (!(lane_width > 0)) throw ConfigError("scenario.lane_width", "must be positive");
  if (front_count < 1) throw ConfigError("scenario.front_count", "must be at least 1");
  if (!(front_speed >= 0)) throw ConfigError("scenario.front_speed", "must be >= 0");
  if (!(front_spacing > other_length)) {
    throw ConfigError("scenario.front_spacing", "must exceed the vehicle length");
  }
  if (!(other_length > 0)) throw ConfigError("scenario.other_length", "must be positive");
  if (!(other_width > 0)) throw ConfigError("scenario.other_width", "must be positive");
  if (!(t_max > 0)) throw ConfigError("scenario.t_max", "must be positive");
  if (!(success_lateral_tol > 0))
    throw ConfigError("scenario.success_lateral_tol", "must be positive");
  if (!(success_heading_tol > 0))
    throw ConfigError("scenario.success_heading_tol", "must be positive");
  if (!(success_speed_tol > 0)) throw ConfigError("scenario.success_speed_tol", "must be positive");
  if (!(success_clearance_fraction >= 0 && success_clearance_fraction <= 1)) {
    throw ConfigError("scenario.success_clearance_fraction", "must lie in [0, 1]");
  }
}

const OtherVehicle& TrafficScene::nearest_front() const {
  const OtherVehicle* best = nullptr;
  for (const auto& v : front) {
    if (v.p_x >= ego.p_x && (best == nullptr || v.p_x < best->p_x)) best = &v;
  }
  if (best == nullptr) {
    for (const auto& v : front)
      if (best == nullptr || v.p_x > best->p_x) best = &v;
  }
  return *best;
}

Observation TrafficScene::observe() const {
  const auto& f = nearest_front();
  return {ego.p_x, ego.p_y, ego.phi, ego.v_x, gap.p_x, gap.p_y, gap.v_x, f.p_x, f.p_y, f.v_x};
}

std::pair<TrafficScene, Observation> reset(const CurriculumSpec& curriculum, std::uint64_t seed,
                                           const ScenarioConfig& scenario,
                                           const VehicleParams& ego_params) {
  scenario.validate();
  TrafficScene s{.ego = {},
                 .ego_params = ego_params,
                 .flow = {},
                 .front = {},
                 .gap = {},
                 .seed = seed,
                 .curriculum = curriculum,
                 .scenario = scenario,
                 .rng = std::mt19937_64(seed)};
  auto& rng = s.rng;

  s.ego = {sample_normal(rng, scenario.ego_p_x_mean, scenario.ego_p_x_std),
           scenario.ego_p_y,
           0.0,
           scenario.ego_v_x,
           0.0,
           0.0};
  const double gap_x = sample_normal(rng, scenario.gap_p_x_mean, scenario.gap_p_x_std);
  s.middle_speed = std::max(0.0, sample_normal(rng, curriculum.mu, curriculum.sigma));
  s.upper_speed = std::max(0.0, sample_normal(rng, curriculum.mu, curriculum.sigma));
  s.front_lane_speed = scenario.front_speed;
  s.gap = {gap_x, scenario.gap_p_y, s.middle_speed, scenario.gap_width};

  const double len = scenario.other_length;
  const double pitch = len + scenario.flow_spacing;
  const double middle_y = scenario.gap_p_y;
  const int behind = scenario.flow_per_lane / 2;
  const int ahead = scenario.flow_per_lane - behind;
  for (int j = behind - 1; j >= 0; --j) {
    const double x = gap_x - 0.5 * scenario.gap_width - 0.5 * len - j * pitch;
    s.flow.push_back({1, x, middle_y, s.middle_speed, len, scenario.other_width});
  }
  for (int j = 0; j < ahead; ++j) {
    const double x = gap_x + 0.5 * scenario.gap_width + 0.5 * len + j * pitch;
    s.flow.push_back({1, x, middle_y, s.middle_speed, len, scenario.other_width});
  }
  if (scenario.upper_lane) {
    const double upper_y = middle_y + scenario.lane_width;
    const double start = gap_x - 0.5 * (scenario.flow_per_lane - 1) * pitch;
    for (int j = 0; j < scenario.flow_per_lane; ++j) {
      s.flow.push_back({2, start + j * pitch, upper_y, s.upper_speed, len, scenario.other_width});
    }
  }
  for (int j = 0; j < scenario.front_count; ++j) {
    const double x = gap_x + scenario.front_lead + j * scenario.front_spacing;
    s.front.push_back({0, x, scenario.ego_p_y, s.front_lane_speed, len, scenario.other_width});
  }

  const Observation obs = s.observe();
  return {std::move(s), obs};
}

TrafficScene step_scene(TrafficScene scene, const ControlInput& ego_control, double dt) {
  scene.ego = step_dynamics(scene.ego, ego_control, dt, scene.ego_params);
  scene.ego.v_x = std::max(0.0, scene.ego.v_x);

  for (auto& v : scene.flow) v.p_x += v.v_x * dt;
  for (auto& v : scene.front) v.p_x += v.v_x * dt;
  scene.gap.p_x += scene.middle_speed * dt;

  const double noise = scene.curriculum.sigma * std::sqrt(dt);
  scene.middle_speed = std::max(0.0, scene.middle_speed + sample_normal(scene.rng, 0.0, noise));
  scene.upper_speed = std::max(0.0, scene.upper_speed + sample_normal(scene.rng, 0.0, noise));
  scene.front_lane_speed =
      std::max(0.0, scene.front_lane_speed + sample_normal(scene.rng, 0.0, noise));
  for (auto& v : scene.flow) v.v_x = v.lane == 1 ? scene.middle_speed : scene.upper_speed;
  for (auto& v : scene.front) v.v_x = scene.front_lane_speed;
  scene.gap.v_x = scene.middle_speed;

  scene.step += 1;
  scene.t_now = scene.step * dt;
  return scene;
}

bool boxes_overlap(const VehicleState& ego, double ego_length, double ego_width,
                   const OtherVehicle& other) {
  const double c = std::cos(ego.phi);
  const double s = std::sin(ego.phi);
  const double hl = 0.5 * ego_length;
  const double hw = 0.5 * ego_width;
  std::array<std::array<double, 2>, 4> ego_corners;
  const std::array<std::array<double, 2>, 4> local{{{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}}};
  for (int i = 0; i < 4; ++i) {
    ego_corners[i] = {ego.p_x + c * local[i][0] - s * local[i][1],
                      ego.p_y + s * local[i][0] + c * local[i][1]};
  }
  const double ol = 0.5 * other.length;
  const double ow = 0.5 * other.width;
  const std::array<std::array<double, 2>, 4> other_corners{{{other.p_x + ol, other.p_y + ow},
                                                            {other.p_x + ol, other.p_y - ow},
                                                            {other.p_x - ol, other.p_y - ow},
                                                            {other.p_x - ol, other.p_y + ow}}};
  const std::array<std::array<double, 2>, 4> axes{{{1.0, 0.0}, {0.0, 1.0}, {c, s}, {-s, c}}};
  for (const auto& ax : axes) {
    const Interval a = project_box(ego_corners, ax[0], ax[1]);
    const Interval b = project_box(other_corners, ax[0], ax[1]);
    if (a.hi <= b.lo || b.hi <= a.lo) return false;
  }
  return true;
}

CollisionCheck check_collision(const TrafficScene& scene) {
  CollisionCheck out;
  out.ego_speed = std::hypot(scene.ego.v_x, scene.ego.v_y);
  const double len = scene.ego_params.length();
  const double wid = scene.ego_params.width();
  auto hits = [&](const OtherVehicle& v) { return boxes_overlap(scene.ego, len, wid, v); };
  out.collided = std::any_of(scene.flow.begin(), scene.flow.end(), hits) ||
                 std::any_of(scene.front.begin(), scene.front.end(), hits);
  return out;
}

bool check_success(const TrafficScene& scene) {
  const auto& sc = scene.scenario;
  const auto& ego = scene.ego;
  const double len = scene.ego_params.length();
  if (std::abs(ego.p_y - scene.gap.p_y) > sc.success_lateral_tol) return false;
  if (std::abs(ego.phi) > sc.success_heading_tol) return false;
  if (std::abs(ego.v_x - scene.gap.v_x) > sc.success_speed_tol) return false;
  const double clearance = 0.5 * (scene.gap.width - len) * sc.success_clearance_fraction;
  const double front_room = (scene.gap.p_x + 0.5 * scene.gap.width) - (ego.p_x + 0.5 * len);
  const double rear_room = (ego.p_x - 0.5 * len) - (scene.gap.p_x - 0.5 * scene.gap.width);
  return front_room >= clearance && rear_room >= clearance;
}

GoalState goal_from_scene(const TrafficScene& scene) {
  return GoalState::from_gap(scene.gap.p_x, scene.gap.v_x, scene.gap.p_y);
}

Trajectory replan(RecedingHorizonPlanner& planner, const TrafficScene& scene,
                  const DecisionVector& z, const ControlInput& u_prev) {
  return planner.replan(scene.ego, u_prev, goal_from_scene(scene), z, scene.t_now);
}

EpisodeOutcome run_episode(const DecisionVector& z, const CurriculumSpec& curriculum,
                           std::uint64_t seed, const EpisodeConfig& cfg,
                           const EpisodeOptions& opts) {
  auto [scene, obs] = reset(curriculum, seed, cfg.scenario, cfg.vehicle);
  RecedingHorizonPlanner planner(cfg.mpc, cfg.vehicle, opts.warm_start);
  const double dt = cfg.mpc.dt;
  const int max_steps = static_cast<int>(std::ceil(cfg.scenario.t_max / dt - 1e-9));

  EpisodeOutcome out;
  out.observation = obs;
  out.seed = seed;
  out.steps.reserve(max_steps + 1);
  out.steps.push_back({.t = 0.0,
                       .ego = scene.ego,
                       .control = {},
                       .gap = scene.gap,
                       .plan = {},
                       .plan_controls = {}});

  ControlInput u_prev{};
  for (int step = 0; step < max_steps; ++step) {
    Trajectory plan;
    try {
      plan = replan(planner, scene, z, u_prev);
    } catch (const Error& e) {
      out.status = EpisodeStatus::Collision;
      out.aborted = true;
      out.abort_reason = e.what();
      out.collision_speeds.push_back(std::hypot(scene.ego.v_x, scene.ego.v_y));
      out.t_end = scene.t_now;
      return out;
    }
    const ControlInput u = cfg.mpc.bounds.clamp(plan.controls.front());
    scene = step_scene(std::move(scene), u, dt);
    u_prev = u;

    StepRecord rec{.t = scene.t_now,
                   .ego = scene.ego,
                   .control = u,
                   .gap = scene.gap,
                   .plan_cost = plan.cost,
                   .plan_status = plan.status,
                   .plan_iterations = plan.iterations,
                   .plan = {},
                   .plan_controls = {}};
    if (opts.record_plans) {
      rec.plan = std::move(plan.states);
      rec.plan_controls = std::move(plan.controls);
    }
    out.steps.push_back(std::move(rec));

    const auto col = check_collision(scene);
    if (col.collided) {
      out.status = EpisodeStatus::Collision;
      out.collision_speeds.push_back(col.ego_speed);
      out.t_end = scene.t_now;
      return out;
    }
    if (check_success(scene)) {
      out.status = EpisodeStatus::Success;
      out.t_end = scene.t_now;
      return out;
    }
  }
  out.status = EpisodeStatus::TimeOut;
  out.t_end = scene.t_now;
  return out;
}

}  // namespace lcmpc
