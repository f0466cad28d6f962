// lcmpc: train, evaluate and replay the learned-MPC lane-change policy.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcmpc/errors.hpp"
#include "lcmpc/harness.hpp"

namespace fs = std::filesystem;
using namespace lcmpc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out = "runs";
  std::string run_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "complete INI config file")->required();
  cmd->add_option("--seed", c.seed, "seed of this command's episode stream");
  cmd->add_option("--set", c.overrides, "override a config entry, section.key=value")->take_all();
  cmd->add_option("--out", c.out, "parent directory of the timestamped run directory");
  cmd->add_option("--run-dir", c.run_dir, "use this run directory instead of a timestamped one");
  cmd->add_flag("--quiet", c.quiet, "no per-episode progress lines");
}

HarnessConfig load(const Common& c) {
  HarnessConfig cfg = load_config(c.config);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

fs::path open_run_dir(const Common& c, const std::string& prefix) {
  if (c.run_dir.empty()) return make_run_dir(c.out, prefix);
  fs::create_directories(c.run_dir);
  return c.run_dir;
}

int cmd_train(const Common& c, const std::string& resume) {
  HarnessConfig cfg = load(c);
  if (c.seed) cfg.trainer.seed = *c.seed;
  const fs::path dir = open_run_dir(c, "train");
  write_file_atomic(dir / "config.ini", dump_config(cfg));
  const TrainingEnv env = cfg.env();

  TrainerState state =
      resume.empty() ? initial_state(cfg.trainer, env, cfg.policy) : load_checkpoint(resume);
  const int total = cfg.trainer.total_episodes();
  std::ofstream csv(dir / "training.csv.partial", std::ios::binary);
  std::ofstream jsonl(dir / "training.jsonl.partial", std::ios::binary);
  if (!csv || !jsonl) throw Error("cannot write the training log in " + dir.string());
  csv << training_csv_header() << '\n';

  TrainingHooks hooks;
  hooks.on_row = [&](const TrainingRow& r) {
    csv << training_csv_row(r) << '\n';
    nlohmann::json z;
    for (int j = 0; j < kDecisionDim; ++j) z[decision_names()[j]] = r.z[j];
    jsonl << nlohmann::json{{"episode", r.episode},
                            {"curriculum", r.curriculum},
                            {"seed", r.seed},
                            {"reward", r.reward},
                            {"status", to_string(r.status)},
                            {"t_end", r.t_end},
                            {"lr", r.lr},
                            {"stage_step", r.stage_step},
                            {"dz_norm", r.dz_norm},
                            {"grad_norm", r.grad_norm},
                            {"clipped", r.clipped},
                            {"skipped", r.skipped},
                            {"failed_coords", r.failed_coords},
                            {"z", z}}
                 .dump()
          << '\n';
    csv.flush();
    jsonl.flush();
    if (!c.quiet) {
      std::printf("episode %d/%d curriculum %d reward %.3f %s lr %.3g\n", r.episode, total,
                  r.curriculum, r.reward, to_string(r.status).c_str(), r.lr);
      std::fflush(stdout);
    }
  };
  hooks.on_stage_end = [&](const TrainerState& s, int) {
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_ep%04d.json", s.episode);
    save_checkpoint(s, dir / name);
  };
  run_curriculum(state, env, cfg.trainer, hooks);
  csv.close();
  jsonl.close();
  if (!csv || !jsonl) throw Error("failed writing the training log in " + dir.string());
  fs::rename(dir / "training.csv.partial", dir / "training.csv");
  fs::rename(dir / "training.jsonl.partial", dir / "training.jsonl");
  save_policy(state.policy, dir / "policy.json");
  std::printf("run directory %s\n", dir.string().c_str());
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint) {
  HarnessConfig cfg = load(c);
  if (c.seed) cfg.eval.seed = *c.seed;
  const PolicyParams policy = load_policy(checkpoint);
  const fs::path dir = open_run_dir(c, "eval");
  write_file_atomic(dir / "config.ini", dump_config(cfg));
  const EvalReport report = evaluate(policy, cfg);
  std::string trials;
  for (const auto& t : report.trials) trials += to_json(t).dump() + '\n';
  write_file_atomic(dir / "trials.jsonl", trials);
  const auto j = to_json(report);
  write_file_atomic(dir / "report.json", j.dump(2) + '\n');
  std::fputs(format_table(report).c_str(), stdout);
  std::printf("%s\n", j.at("gap_to_reference").at("note").get<std::string>().c_str());
  std::printf("run directory %s\n", dir.string().c_str());
  return kExitOk;
}

DecisionVector parse_z(const std::string& text) {
  std::vector<double> v;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw CLI::ValidationError("--z", "'" + item + "' is not a number");
    }
  }
  if (v.size() != kDecisionDim)
    throw CLI::ValidationError("--z", "needs 13 comma-separated numbers");
  return DecisionVector::from_array(v);
}

int cmd_replay(const Common& c, const std::string& checkpoint, const std::string& z_text,
               std::optional<int> curriculum) {
  HarnessConfig cfg = load(c);
  if (c.seed) cfg.replay.seed = *c.seed;
  if (curriculum) cfg.replay.curriculum = *curriculum;
  cfg.validate();
  DecisionVector z;
  if (!z_text.empty()) {
    z = parse_z(z_text);
  } else {
    const PolicyParams policy = load_policy(checkpoint);
    const TrainingEnv env = cfg.env();
    const auto o = reset(env.curriculum(cfg.replay.curriculum), cfg.replay.seed,
                         env.episode.scenario, env.episode.vehicle)
                       .second;
    z = forward(o, policy);
  }
  const fs::path dir = open_run_dir(c, "replay");
  write_file_atomic(dir / "config.ini", dump_config(cfg));
  const ReplayResult r = replay_episode(z, cfg.replay.curriculum, cfg.replay.seed, cfg);
  write_file_atomic(dir / "replay.csv", replay_csv(r));
  if (cfg.replay.record_plans) write_file_atomic(dir / "plans.csv", plans_csv(r));
  write_file_atomic(dir / "episode.jsonl", replay_jsonl(r));
  std::printf("curriculum %d seed %llu: %s at %.1f s, reward %.6g\n", r.curriculum,
              static_cast<unsigned long long>(r.seed), to_string(r.outcome.status).c_str(),
              r.outcome.t_end, r.reward.total);
  std::printf("run directory %s\n", dir.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned-MPC lane change in dense traffic: train, eval, replay"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, replay_opts;
  std::string resume, eval_checkpoint, replay_checkpoint, z_text;
  std::optional<int> replay_curriculum;
  bool annotate = true;

  auto* train = app.add_subcommand("train", "run curriculum training");
  add_common(train, train_opts);
  train->add_option("--resume", resume, "continue from a trainer checkpoint")
      ->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over seeded trials");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_checkpoint, "policy or trainer checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  auto* replay = app.add_subcommand("replay", "re-run one episode and dump per-step data");
  add_common(replay, replay_opts);
  auto* ck = replay->add_option("--checkpoint", replay_checkpoint, "policy or trainer checkpoint")
                 ->check(CLI::ExistingFile);
  auto* zopt = replay->add_option("--z", z_text, "13 comma-separated decision-vector entries");
  ck->excludes(zopt);
  replay->add_option("--curriculum", replay_curriculum, "traffic conditions (1, 2 or 3)")
      ->check(CLI::Range(1, 3));

  auto* defaults = app.add_subcommand("defaults", "print the default config file");
  defaults->add_flag("!--plain", annotate, "omit provenance comments");

  try {
    app.parse(argc, argv);
    if (replay->parsed() && replay_checkpoint.empty() && z_text.empty()) {
      throw CLI::RequiredError("--checkpoint or --z");
    }
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_opts, resume);
    if (eval->parsed()) return cmd_eval(eval_opts, eval_checkpoint);
    if (replay->parsed())
      return cmd_replay(replay_opts, replay_checkpoint, z_text, replay_curriculum);
    if (defaults->parsed()) {
      std::fputs(dump_config(HarnessConfig{}, annotate).c_str(), stdout);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
