#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lcmpc/mpc.hpp"
#include "lcmpc/traffic.hpp"

namespace lcmpc {

struct RewardConfig {
  double r_max = 100.0;
  double c_collision = 1.0;           // curricula 2
  double c_collision_enhanced = 5.0;  // curriculum 3

  double c_x = 0.1;
  double c_y = 1.0;
  double c_t = 1.0;
  double c_dt = 1.0;
  double c_dphi = 1.0;
  Diag6 c_q{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};  // p_x, p_y, phi, v_x, v_y, omega

  double t_min = 0.0;
  double t_max = 10.0;
  double phi_min = -0.6;
  double phi_max = 0.6;
  double p_y_min = -5.0;
  double p_y_max = 5.0;

  void validate() const;
};

/// Named reward terms; `total` is their sum.
struct RewardBreakdown {
  std::vector<std::pair<std::string, double>> terms;
  double total = 0.0;

  void add(std::string name, double value);
};

/// Sparse lane-change reward: r_max on success minus c_c * sum |v_k|^2 over
/// the colliding steps.
RewardBreakdown lane_change_breakdown(const EpisodeOutcome& outcome, double r_max, double c_c);
double lane_change_reward(const EpisodeOutcome& outcome, double r_max, double c_c);

/// Dense penalty on the decision vector itself. `t` is the episode time at
/// which the vector is evaluated.
RewardBreakdown shaping_breakdown(const DecisionVector& z, const Observation& o, double t,
                                  const RewardConfig& cfg);
double shaping_reward(const DecisionVector& z, const Observation& o, double t,
                      const RewardConfig& cfg);

/// Curriculum dispatch: shaping for mode Shaping, lane-change with the base
/// or enhanced collision weight otherwise. `outcome` may be null for Shaping.
RewardBreakdown episode_breakdown(const CurriculumSpec& curriculum, const DecisionVector& z,
                                  const Observation& o, const EpisodeOutcome* outcome,
                                  const RewardConfig& cfg);
double episode_reward(const CurriculumSpec& curriculum, const DecisionVector& z,
                      const Observation& o, const EpisodeOutcome* outcome, const RewardConfig& cfg);

}  // namespace lcmpc
