#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcmpc/policy.hpp"
#include "lcmpc/reward.hpp"
#include "lcmpc/traffic.hpp"

namespace lcmpc {

/// One curriculum phase of the training schedule.
struct Stage {
  int curriculum = 1;
  int episodes = 0;

  bool operator==(const Stage&) const = default;
};

struct TrainerConfig {
  double epsilon = 1e-2;        // relative finite-difference step
  double epsilon_floor = 1e-3;  // absolute lower bound on the step
  double lr0 = 3e-4;
  double lr_decay = 0.96;
  int lr_decay_every = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip = 10.0;  // global norm; 0 disables clipping
  std::vector<Stage> schedule{{1, 100}, {2, 100}, {3, 100}};
  std::uint64_t seed = 1;       // episode seed stream
  std::uint64_t init_seed = 0;  // policy weights
  std::uint64_t norm_seed = 0;  // normalization resets
  int norm_samples = 1000;
  int workers = 1;

  void validate() const;
  int total_episodes() const;
  /// Episode numbers (1-based) at which a new stage starts, excluding the first.
  std::vector<int> switch_points() const;
  /// Stage index of a 1-based episode number.
  int stage_of(int episode) const;
  int curriculum_of(int episode) const;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Seed of a 1-based episode number; the same for every run with this base.
std::uint64_t episode_seed(std::uint64_t base, int episode);

/// lr0 * lr_decay^floor(k / lr_decay_every), k = steps taken in the stage.
double learning_rate(const TrainerConfig& cfg, long k);

struct AdamState {
  MlpTensors m = MlpTensors::zeros();
  MlpTensors v = MlpTensors::zeros();
  long t = 0;

  bool operator==(const AdamState& o) const { return m == o.m && v == o.v && t == o.t; }
};

/// One Adam step that increases the objective: theta += lr * mhat / (sqrt(vhat) + eps).
void adam_ascent(MlpTensors& theta, const MlpTensors& grad, AdamState& state, double lr,
                 const TrainerConfig& cfg);

/// Runs fn(0..n-1) on up to `workers` threads. Each index is handled exactly
/// once; the first exception by index is rethrown after all work finishes.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

struct Evaluation {
  double reward = 0.0;
  bool failed = false;  // the episode hit an MPC numerical failure
};

/// Reward of one episode rolled out with a candidate decision vector. Must be
/// a pure function of z (the episode seed is fixed by the caller).
using EpisodeEvaluator = std::function<Evaluation(const DecisionVector&)>;

struct GradientEstimate {
  std::array<double, kDecisionDim> g{};
  std::array<double, kDecisionDim> step{};
  std::array<bool, kDecisionDim> failed{};
  int failed_count() const;
};

/// Per-coordinate step max(epsilon_floor, epsilon * max(1, |z_j|)).
std::array<double, kDecisionDim> perturbation_steps(const DecisionVector& z,
                                                    const TrainerConfig& cfg);

/// Forward differences g_j = (R(z + eps_j e_j) - R(z)) / eps_j with the
/// perturbed rewards from `evaluate`. Failed coordinates get g_j = 0.
GradientEstimate estimate_dR_dz(const DecisionVector& z, double baseline_reward,
                                const EpisodeEvaluator& evaluate, const TrainerConfig& cfg);

struct TrainingEnv {
  EpisodeConfig episode;
  RewardConfig reward;
  std::array<CurriculumSpec, 3> curricula{CurriculumSpec::standard(1), CurriculumSpec::standard(2),
                                          CurriculumSpec::standard(3)};

  const CurriculumSpec& curriculum(int id) const;
};

/// Evaluator that replays the episode (curriculum, seed) with a candidate z.
/// Shaping curricula only need the observation, so no episode is run.
EpisodeEvaluator make_episode_evaluator(const CurriculumSpec& curriculum, std::uint64_t seed,
                                        const Observation& o, const TrainingEnv& env);

struct TrainingRow {
  int episode = 0;
  int curriculum = 0;
  std::uint64_t seed = 0;
  double reward = 0.0;
  EpisodeStatus status = EpisodeStatus::TimeOut;
  double t_end = 0.0;
  double lr = 0.0;
  long stage_step = 0;     // steps taken in the stage before this one
  double dz_norm = 0.0;    // |dR/dz|
  double grad_norm = 0.0;  // |dR/dtheta| before clipping
  bool clipped = false;
  bool skipped = false;  // non-finite gradient, parameters untouched
  int failed_coords = 0;
  std::array<double, kDecisionDim> z{};
};

/// Everything needed to continue a run bit-identically.
struct TrainerState {
  PolicyParams policy;
  AdamState adam;
  int episode = 0;      // completed episodes
  int stage = -1;       // stage of the last completed episode
  long stage_step = 0;  // steps taken in that stage

  bool operator==(const TrainerState&) const = default;
};

/// Statistics of `samples` seeded resets of `curriculum`.
NormStats normalization_from_resets(int samples, std::uint64_t seed,
                                    const CurriculumSpec& curriculum,
                                    const ScenarioConfig& scenario, const VehicleParams& vehicle);

/// Fresh state: initialized weights and normalization statistics frozen from
/// Curriculum-1 resets.
TrainerState initial_state(const TrainerConfig& cfg, const TrainingEnv& env,
                           const PolicyInit& init = {});

/// One policy update for `curriculum` on `seed`, in place.
TrainingRow train_step(TrainerState& state, const CurriculumSpec& curriculum, std::uint64_t seed,
                       const TrainingEnv& env, const TrainerConfig& cfg);

struct TrainingHooks {
  std::function<void(const TrainingRow&)> on_row;
  /// Called after the last episode of every stage.
  std::function<void(const TrainerState&, int stage)> on_stage_end;
};

/// Continues from state.episode + 1 to the end of the schedule. Crossing into a
/// new stage keeps the policy and resets the Adam moments and the lr clock.
std::vector<TrainingRow> run_curriculum(TrainerState& state, const TrainingEnv& env,
                                        const TrainerConfig& cfg, const TrainingHooks& hooks = {});

nlohmann::json to_json(const TrainerState& state);
TrainerState trainer_state_from_json(const nlohmann::json& j);
void save_checkpoint(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_checkpoint(const std::filesystem::path& path);

std::string training_csv_header();
std::string training_csv_row(const TrainingRow& row);

/// Names of the 13 decision-vector entries in order.
const std::array<const char*, kDecisionDim>& decision_names();

}  // namespace lcmpc
