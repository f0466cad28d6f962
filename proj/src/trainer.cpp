#include "lcmpc/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

constexpr const char* kCheckpointFormat = "lcmpc-trainer";
constexpr int kCheckpointVersion = 1;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json tensors_to_json(const MlpTensors& t) { return t.flatten(); }

MlpTensors tensors_from_json(const nlohmann::json& j) {
  MlpTensors t = MlpTensors::zeros();
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != t.size()) throw CheckpointError("optimizer moments have the wrong size");
  t.assign(flat);
  return t;
}

}  // namespace

void TrainerConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("trainer.epsilon", "must be > 0");
  if (!(epsilon_floor > 0)) throw ConfigError("trainer.epsilon_floor", "must be > 0");
  if (!(lr0 > 0)) throw ConfigError("trainer.lr0", "must be > 0");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("trainer.lr_decay", "must be in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("trainer.lr_decay_every", "must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("trainer.beta1", "must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("trainer.beta2", "must be in [0, 1)");
  if (!(adam_epsilon > 0)) throw ConfigError("trainer.adam_epsilon", "must be > 0");
  if (!(grad_clip >= 0)) throw ConfigError("trainer.grad_clip", "must be >= 0");
  if (schedule.empty()) throw ConfigError("trainer.schedule", "needs at least one stage");
  for (const auto& s : schedule) {
    if (s.curriculum < 1 || s.curriculum > 3) {
      throw ConfigError("trainer.schedule", "curriculum ids must be 1, 2 or 3");
    }
    if (s.episodes < 1) throw ConfigError("trainer.schedule", "stage lengths must be >= 1");
  }
  if (norm_samples < 1) throw ConfigError("trainer.norm_samples", "must be >= 1");
  if (workers < 1) throw ConfigError("trainer.workers", "must be >= 1");
}

int TrainerConfig::total_episodes() const {
  int n = 0;
  for (const auto& s : schedule) n += s.episodes;
  return n;
}

std::vector<int> TrainerConfig::switch_points() const {
  std::vector<int> out;
  int end = 0;
  for (std::size_t i = 0; i + 1 < schedule.size(); ++i) {
    end += schedule[i].episodes;
    out.push_back(end + 1);
  }
  return out;
}

int TrainerConfig::stage_of(int episode) const {
  if (episode < 1) throw InvalidInputError("episode numbers start at 1");
  int end = 0;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    end += schedule[i].episodes;
    if (episode <= end) return static_cast<int>(i);
  }
  throw InvalidInputError("episode " + std::to_string(episode) + " is past the schedule");
}

int TrainerConfig::curriculum_of(int episode) const {
  return schedule[stage_of(episode)].curriculum;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t episode_seed(std::uint64_t base, int episode) {
  return splitmix64(splitmix64(base) + static_cast<std::uint64_t>(episode));
}

double learning_rate(const TrainerConfig& cfg, long k) {
  if (k < 0) throw InvalidInputError("step count must be >= 0");
  return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(k / cfg.lr_decay_every));
}

void adam_ascent(MlpTensors& theta, const MlpTensors& grad, AdamState& state, double lr,
                 const TrainerConfig& cfg) {
  state.t += 1;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() += lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
  };
  for (int l = 0; l < kLayers; ++l) {
    update(theta.w[l], grad.w[l], state.m.w[l], state.v.w[l]);
    update(theta.b[l], grad.b[l], state.m.b[l], state.v.b[l]);
  }
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int GradientEstimate::failed_count() const {
  int n = 0;
  for (bool f : failed) n += f ? 1 : 0;
  return n;
}

std::array<double, kDecisionDim> perturbation_steps(const DecisionVector& z,
                                                    const TrainerConfig& cfg) {
  const auto a = z.to_array();
  std::array<double, kDecisionDim> eps{};
  for (int j = 0; j < kDecisionDim; ++j) {
    eps[j] = std::max(cfg.epsilon_floor, cfg.epsilon * std::max(1.0, std::abs(a[j])));
  }
  return eps;
}

namespace {

GradientEstimate finish_estimate(const std::array<double, kDecisionDim>& eps,
                                 const std::array<Evaluation, kDecisionDim>& perturbed,
                                 double baseline) {
  GradientEstimate est;
  est.step = eps;
  for (int j = 0; j < kDecisionDim; ++j) {
    if (perturbed[j].failed) {
      est.failed[j] = true;
      est.g[j] = 0.0;
    } else {
      est.g[j] = (perturbed[j].reward - baseline) / eps[j];
    }
  }
  return est;
}

DecisionVector perturbed(const DecisionVector& z, int j, double eps) {
  auto a = z.to_array();
  a[j] += eps;
  return DecisionVector::from_array(a);
}

}  // namespace

GradientEstimate estimate_dR_dz(const DecisionVector& z, double baseline_reward,
                                const EpisodeEvaluator& evaluate, const TrainerConfig& cfg) {
  const auto eps = perturbation_steps(z, cfg);
  std::array<Evaluation, kDecisionDim> results{};
  parallel_for(kDecisionDim, cfg.workers,
               [&](std::size_t j) { results[j] = evaluate(perturbed(z, int(j), eps[j])); });
  return finish_estimate(eps, results, baseline_reward);
}

EpisodeEvaluator make_episode_evaluator(const CurriculumSpec& curriculum, std::uint64_t seed,
                                        const Observation& o, const TrainingEnv& env) {
  if (curriculum.mode == RewardMode::Shaping) {
    return [o, env](const DecisionVector& z) {
      return Evaluation{shaping_reward(z, o, 0.0, env.reward), false};
    };
  }
  return [curriculum, seed, o, env](const DecisionVector& z) {
    const auto outcome = run_episode(z, curriculum, seed, env.episode);
    return Evaluation{episode_reward(curriculum, z, o, &outcome, env.reward), outcome.aborted};
  };
}

const CurriculumSpec& TrainingEnv::curriculum(int id) const {
  if (id < 1 || id > 3) throw InvalidInputError("unknown curriculum id " + std::to_string(id));
  return curricula[id - 1];
}

NormStats normalization_from_resets(int samples, std::uint64_t seed,
                                    const CurriculumSpec& curriculum,
                                    const ScenarioConfig& scenario, const VehicleParams& vehicle) {
  std::vector<Observation> obs;
  obs.reserve(samples);
  for (int i = 1; i <= samples; ++i) {
    obs.push_back(reset(curriculum, episode_seed(seed, i), scenario, vehicle).second);
  }
  return NormStats::from_samples(obs);
}

TrainerState initial_state(const TrainerConfig& cfg, const TrainingEnv& env,
                           const PolicyInit& init) {
  TrainerState s;
  s.policy = init_params(cfg.init_seed, init);
  s.policy.norm = normalization_from_resets(cfg.norm_samples, cfg.norm_seed, env.curriculum(1),
                                            env.episode.scenario, env.episode.vehicle);
  return s;
}

TrainingRow train_step(TrainerState& state, const CurriculumSpec& curriculum, std::uint64_t seed,
                       const TrainingEnv& env, const TrainerConfig& cfg) {
  const auto [scene, o] = reset(curriculum, seed, env.episode.scenario, env.episode.vehicle);
  const DecisionVector z = forward(o, state.policy);

  // baseline and the 13 perturbations share the seed and run as one batch
  const auto eps = perturbation_steps(z, cfg);
  const auto evaluate = make_episode_evaluator(curriculum, seed, o, env);
  EpisodeOutcome baseline;
  double baseline_reward = 0.0;
  std::array<Evaluation, kDecisionDim> results{};
  parallel_for(kDecisionDim + 1, cfg.workers, [&](std::size_t i) {
    if (i == 0) {
      baseline = run_episode(z, curriculum, seed, env.episode);
      baseline_reward = episode_reward(curriculum, z, o, &baseline, env.reward);
    } else {
      const int j = static_cast<int>(i) - 1;
      results[j] = evaluate(perturbed(z, j, eps[j]));
    }
  });
  const GradientEstimate est = finish_estimate(eps, results, baseline_reward);

  TrainingRow row;
  row.curriculum = curriculum.id;
  row.seed = seed;
  row.reward = baseline_reward;
  row.status = baseline.status;
  row.t_end = baseline.t_end;
  row.lr = learning_rate(cfg, state.stage_step);
  row.stage_step = state.stage_step;
  row.failed_coords = est.failed_count();
  row.z = z.to_array();
  double g2 = 0.0;
  for (double g : est.g) g2 += g * g;
  row.dz_norm = std::sqrt(g2);

  PolicyGradient grad = backward(o, state.policy, est.g);
  row.grad_norm = std::sqrt(grad.squared_norm());
  if (!std::isfinite(row.grad_norm) || !grad.finite()) {
    row.skipped = true;
  } else {
    if (cfg.grad_clip > 0 && row.grad_norm > cfg.grad_clip) {
      grad *= cfg.grad_clip / row.grad_norm;
      row.clipped = true;
    }
    adam_ascent(state.policy.net, grad, state.adam, row.lr, cfg);
  }
  state.stage_step += 1;
  return row;
}

std::vector<TrainingRow> run_curriculum(TrainerState& state, const TrainingEnv& env,
                                        const TrainerConfig& cfg, const TrainingHooks& hooks) {
  cfg.validate();
  const int total = cfg.total_episodes();
  if (state.episode < 0 || state.episode > total) {
    throw InvalidInputError("checkpoint episode " + std::to_string(state.episode) +
                            " is outside the schedule");
  }
  std::vector<TrainingRow> rows;
  for (int e = state.episode + 1; e <= total; ++e) {
    const int stage = cfg.stage_of(e);
    if (stage != state.stage) {
      // policy transfer: keep theta, restart the optimizer and the lr clock
      state.adam = AdamState{};
      state.stage = stage;
      state.stage_step = 0;
    }
    const auto& curriculum = env.curriculum(cfg.schedule[stage].curriculum);
    TrainingRow row = train_step(state, curriculum, episode_seed(cfg.seed, e), env, cfg);
    row.episode = e;
    state.episode = e;
    if (hooks.on_row) hooks.on_row(row);
    rows.push_back(row);
    const bool stage_end = e == total || cfg.stage_of(e + 1) != stage;
    if (stage_end && hooks.on_stage_end) hooks.on_stage_end(state, stage);
  }
  return rows;
}

nlohmann::json to_json(const TrainerState& state) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"episode", state.episode},
          {"stage", state.stage},
          {"stage_step", state.stage_step},
          {"policy", to_json(state.policy)},
          {"adam",
           {{"t", state.adam.t},
            {"m", tensors_to_json(state.adam.m)},
            {"v", tensors_to_json(state.adam.v)}}}};
}

TrainerState trainer_state_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw CheckpointError("not a trainer checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported trainer checkpoint version");
    }
    TrainerState s;
    s.episode = j.at("episode").get<int>();
    s.stage = j.at("stage").get<int>();
    s.stage_step = j.at("stage_step").get<long>();
    s.policy = policy_from_json(j.at("policy"));
    const auto& adam = j.at("adam");
    s.adam.t = adam.at("t").get<long>();
    s.adam.m = tensors_from_json(adam.at("m"));
    s.adam.v = tensors_from_json(adam.at("v"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed trainer checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << to_json(state).dump() << '\n';
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("cannot parse " + path.string() + ": " + e.what());
  }
  return trainer_state_from_json(j);
}

const std::array<const char*, kDecisionDim>& decision_names() {
  static const std::array<const char*, kDecisionDim> names{
      "x_tra_p_x", "x_tra_p_y", "x_tra_phi", "x_tra_v_x", "x_tra_v_y", "x_tra_omega", "q_p_x",
      "q_p_y",     "q_phi",     "q_v_x",     "q_v_y",     "q_omega",   "t_tra"};
  return names;
}

std::string training_csv_header() {
  std::string h =
      "episode,curriculum,seed,reward,status,t_end,lr,stage_step,dz_norm,grad_norm,clipped,"
      "skipped,failed_coords";
  for (const char* n : decision_names()) h += std::string(",") + n;
  return h;
}

std::string training_csv_row(const TrainingRow& r) {
  std::string s = std::to_string(r.episode) + ',' + std::to_string(r.curriculum) + ',' +
                  std::to_string(r.seed) + ',' + fmt_double(r.reward) + ',' + to_string(r.status) +
                  ',' + fmt_double(r.t_end) + ',' + fmt_double(r.lr) + ',' +
                  std::to_string(r.stage_step) + ',' + fmt_double(r.dz_norm) + ',' +
                  fmt_double(r.grad_norm) + ',' + (r.clipped ? "1" : "0") + ',' +
                  (r.skipped ? "1" : "0") + ',' + std::to_string(r.failed_coords);
  for (double v : r.z) s += ',' + fmt_double(v);
  return s;
}

}  // namespace lcmpc
