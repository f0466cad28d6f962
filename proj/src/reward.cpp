#include "lcmpc/reward.hpp"

#include <algorithm>
#include <cmath>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

// Distance to the nearer bound when outside [lo, hi], 0 inside.
double bound_violation(double v, double lo, double hi) {
  if (v >= lo && v <= hi) return 0.0;
  return std::min(std::abs(v - hi), std::abs(v - lo));
}

constexpr std::array<const char*, kStateDim> kWeightNames{"q_p_x", "q_p_y", "q_phi",
                                                          "q_v_x", "q_v_y", "q_omega"};

}  // namespace

void RewardConfig::validate() const {
  const std::array<std::pair<const char*, double>, 8> nonneg{
      {{"reward.r_max", r_max},
       {"reward.c_collision", c_collision},
       {"reward.c_x", c_x},
       {"reward.c_y", c_y},
       {"reward.c_t", c_t},
       {"reward.c_dt", c_dt},
       {"reward.c_dphi", c_dphi},
       {"reward.c_collision_enhanced", c_collision_enhanced}}};
  for (const auto& [key, v] : nonneg)
    if (!(v >= 0)) throw ConfigError(key, "must be >= 0");
  for (double c : c_q)
    if (!(c >= 0)) throw ConfigError("reward.c_q", "coefficients must be >= 0");
  if (c_collision_enhanced < c_collision) {
    throw ConfigError("reward.c_collision_enhanced", "must be >= reward.c_collision");
  }
  if (!(t_min < t_max)) throw ConfigError("reward.t_min", "must be below reward.t_max");
  if (!(phi_min < phi_max)) throw ConfigError("reward.phi_min", "must be below reward.phi_max");
  if (!(p_y_min < p_y_max)) throw ConfigError("reward.p_y_min", "must be below reward.p_y_max");
}

void RewardBreakdown::add(std::string name, double value) {
  terms.emplace_back(std::move(name), value);
  total += value;
}

RewardBreakdown lane_change_breakdown(const EpisodeOutcome& outcome, double r_max, double c_c) {
  RewardBreakdown r;
  r.add("goal", outcome.status == EpisodeStatus::Success ? r_max : 0.0);
  double penalty = 0.0;
  for (double v : outcome.collision_speeds) penalty += v * v;
  r.add("collision", -c_c * penalty);
  return r;
}

double lane_change_reward(const EpisodeOutcome& outcome, double r_max, double c_c) {
  return lane_change_breakdown(outcome, r_max, c_c).total;
}

RewardBreakdown shaping_breakdown(const DecisionVector& z, const Observation& o, double t,
                                  const RewardConfig& cfg) {
  RewardBreakdown r;
  const double gap_p_x = o[4];
  r.add("p_x", -cfg.c_x * std::abs(z.x_tra.p_x - gap_p_x));
  r.add("p_y", -cfg.c_y * bound_violation(z.x_tra.p_y, cfg.p_y_min, cfg.p_y_max));
  r.add("time", -cfg.c_t * std::abs(t));
  r.add("t_tra", -cfg.c_dt * bound_violation(z.t_tra, cfg.t_min, cfg.t_max));
  r.add("phi", -cfg.c_dphi * bound_violation(z.x_tra.phi, cfg.phi_min, cfg.phi_max));
  for (int i = 0; i < kStateDim; ++i) {
    const double q = z.q_max[i];
    r.add(kWeightNames[i], q < 0.0 ? -cfg.c_q[i] * std::abs(q) : 0.0);
  }
  return r;
}

double shaping_reward(const DecisionVector& z, const Observation& o, double t,
                      const RewardConfig& cfg) {
  return shaping_breakdown(z, o, t, cfg).total;
}

RewardBreakdown episode_breakdown(const CurriculumSpec& curriculum, const DecisionVector& z,
                                  const Observation& o, const EpisodeOutcome* outcome,
                                  const RewardConfig& cfg) {
  if (curriculum.id < 1 || curriculum.id > 3) {
    throw InvalidInputError("unknown curriculum id " + std::to_string(curriculum.id));
  }
  switch (curriculum.mode) {
    case RewardMode::Shaping:
      return shaping_breakdown(z, o, 0.0, cfg);
    case RewardMode::LaneChange:
    case RewardMode::LaneChangeEnhanced: {
      if (outcome == nullptr)
        throw InvalidInputError("lane-change reward needs an episode outcome");
      const double c_c =
          curriculum.mode == RewardMode::LaneChange ? cfg.c_collision : cfg.c_collision_enhanced;
      return lane_change_breakdown(*outcome, cfg.r_max, c_c);
    }
  }
  throw InvalidInputError("unknown reward mode");
}

double episode_reward(const CurriculumSpec& curriculum, const DecisionVector& z,
                      const Observation& o, const EpisodeOutcome* outcome,
                      const RewardConfig& cfg) {
  return episode_breakdown(curriculum, z, o, outcome, cfg).total;
}

}  // namespace lcmpc
