#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcmpc/policy.hpp"
#include "lcmpc/reward.hpp"
#include "lcmpc/trainer.hpp"

namespace lcmpc {

/// Plain vehicle constants as they appear in the config file.
struct VehicleValues {
  double mass = 1412.0;
  double l_f = 1.06;
  double l_r = 1.85;
  double k_f = -128916.0;
  double k_r = -85944.0;
  double i_z = 1536.7;
  double length = 4.5;
  double width = 2.0;

  VehicleParams build() const;
};

struct EvalConfig {
  int trials = 100;
  int curriculum = 3;
  std::uint64_t seed = 1000;
  int workers = 1;
};

struct ReplayConfig {
  int curriculum = 3;
  std::uint64_t seed = 1000;
  bool record_plans = true;
};

struct HarnessConfig {
  VehicleValues vehicle;
  MpcConfig mpc;
  ScenarioConfig scenario;
  std::array<CurriculumSpec, 3> curricula{CurriculumSpec::standard(1), CurriculumSpec::standard(2),
                                          CurriculumSpec::standard(3)};
  RewardConfig reward;
  PolicyInit policy;
  TrainerConfig trainer;
  EvalConfig eval;
  ReplayConfig replay;

  /// Throws ConfigError naming the first invalid key.
  void validate() const;
  TrainingEnv env() const;
};

/// Every key the config file must contain, as "section.key", in file order.
std::vector<std::string> config_keys();

/// Parses an INI file. Every key must be present exactly once; unknown
/// sections or keys are rejected. The result is validated.
HarnessConfig parse_config(std::istream& in, const std::string& source = "<config>");
HarnessConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" on top of a parsed config (no validation).
void apply_override(HarnessConfig& cfg, const std::string& assignment);

/// Writes a complete config file. With `annotate`, each key gets a comment
/// with its provenance ([paper] or [chosen]) and meaning.
std::string dump_config(const HarnessConfig& cfg, bool annotate = true);

struct TrialResult {
  int index = 0;
  std::uint64_t seed = 0;
  EpisodeStatus status = EpisodeStatus::TimeOut;
  double t_end = 0.0;
  double reward = 0.0;
  bool aborted = false;
  std::vector<double> collision_speeds;
  std::array<double, kDecisionDim> z{};
};

struct EvalReport {
  int curriculum = 3;
  std::uint64_t seed = 0;
  std::vector<TrialResult> trials;

  int count(EpisodeStatus s) const;
  double rate(EpisodeStatus s) const;  // percent of trials
  /// Mean t_end over successful trials, 0 when there are none.
  double mean_time_to_merge() const;
};

/// Success / collision / time-out rates reported for the method in its
/// original evaluation, used as the comparison reference.
inline constexpr std::array<double, 3> kReferenceRates{96.0, 4.0, 0.0};

/// Runs eval.trials seeded episodes of eval.curriculum with the policy.
EvalReport evaluate(const PolicyParams& policy, const HarnessConfig& cfg);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const TrialResult& trial);
std::string format_table(const EvalReport& report);

struct ReplayResult {
  int curriculum = 3;
  std::uint64_t seed = 0;
  DecisionVector z;
  EpisodeOutcome outcome;
  RewardBreakdown reward;
};

ReplayResult replay_episode(const DecisionVector& z, int curriculum, std::uint64_t seed,
                            const HarnessConfig& cfg);

/// Per-step CSV: time, ego state, executed control, gap state and solver info.
std::string replay_csv(const ReplayResult& r);
/// Planned trajectories, one row per (step, horizon index).
std::string plans_csv(const ReplayResult& r);
/// One JSON record per step plus a closing summary record.
std::string replay_jsonl(const ReplayResult& r);

/// Creates `base/<prefix>-<UTC timestamp>[-n]` and returns it.
std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& prefix);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace lcmpc
