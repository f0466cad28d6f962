#include "lcmpc/harness.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError(key, "expected a finite number, got '" + text + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  Int v{};
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

template <std::size_t N>
std::array<double, N> parse_list(const std::string& key, const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != N) {
    throw ConfigError(key, "expected " + std::to_string(N) + " comma-separated numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_double(key, parts[i]);
  return out;
}

template <std::size_t N>
std::string fmt_list(const std::array<double, N>& v) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

std::vector<Stage> parse_schedule(const std::string& key, const std::string& text) {
  std::vector<Stage> out;
  for (const auto& item : split(text, ',')) {
    const auto pair = split(item, ':');
    if (pair.size() != 2) {
      throw ConfigError(key, "expected curriculum:episodes pairs such as 1:100,2:100,3:100");
    }
    out.push_back({parse_integer<int>(key, pair[0]), parse_integer<int>(key, pair[1])});
  }
  return out;
}

std::string fmt_schedule(const std::vector<Stage>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += (i ? "," : "") + std::to_string(s[i].curriculum) + ":" + std::to_string(s[i].episodes);
  }
  return out;
}

struct Entry {
  std::string key;
  const char* tag;  // "paper" or "chosen"
  const char* doc;
  std::function<std::string(const HarnessConfig&)> get;
  std::function<void(HarnessConfig&, const std::string&)> set;
};

template <class Get>
Entry number(const std::string& key, const char* tag, const char* doc, Get field) {
  return {
      key, tag, doc, [field](const HarnessConfig& c) { return fmt(field(c)); },
      [key, field](HarnessConfig& c, const std::string& v) { field(c) = parse_double(key, v); }};
}

template <class Int, class Get>
Entry integer(const std::string& key, const char* tag, const char* doc, Get field) {
  return {key, tag, doc, [field](const HarnessConfig& c) { return std::to_string(field(c)); },
          [key, field](HarnessConfig& c, const std::string& v) {
            field(c) = parse_integer<Int>(key, v);
          }};
}

template <class Get>
Entry boolean(const std::string& key, const char* tag, const char* doc, Get field) {
  return {key, tag, doc,
          [field](const HarnessConfig& c) { return std::string(field(c) ? "true" : "false"); },
          [key, field](HarnessConfig& c, const std::string& v) { field(c) = parse_bool(key, v); }};
}

template <std::size_t N, class Get>
Entry list(const std::string& key, const char* tag, const char* doc, Get field) {
  return {
      key, tag, doc, [field](const HarnessConfig& c) { return fmt_list<N>(field(c)); },
      [key, field](HarnessConfig& c, const std::string& v) { field(c) = parse_list<N>(key, v); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    // vehicle
    e.push_back(number("vehicle.mass", "chosen", "kg", FIELD(c.vehicle.mass)));
    e.push_back(
        number("vehicle.l_f", "chosen", "centre of mass to front axle, m", FIELD(c.vehicle.l_f)));
    e.push_back(
        number("vehicle.l_r", "chosen", "centre of mass to rear axle, m", FIELD(c.vehicle.l_r)));
    e.push_back(number("vehicle.k_f", "chosen", "front cornering stiffness, N/rad (negative)",
                       FIELD(c.vehicle.k_f)));
    e.push_back(number("vehicle.k_r", "chosen", "rear cornering stiffness, N/rad (negative)",
                       FIELD(c.vehicle.k_r)));
    e.push_back(
        number("vehicle.i_z", "chosen", "yaw moment of inertia, kg m^2", FIELD(c.vehicle.i_z)));
    e.push_back(number("vehicle.length", "chosen", "ego body length, m", FIELD(c.vehicle.length)));
    e.push_back(number("vehicle.width", "chosen", "ego body width, m", FIELD(c.vehicle.width)));
    // mpc
    e.push_back(number("mpc.horizon", "paper", "prediction horizon T, s", FIELD(c.mpc.horizon)));
    e.push_back(number("mpc.dt", "paper", "step time, s", FIELD(c.mpc.dt)));
    e.push_back(list<6>("mpc.q_x", "paper",
                        "state weights p_x, p_y, phi, v_x, v_y, omega (v_y, omega zero: chosen)",
                        FIELD(c.mpc.q_x)));
    e.push_back(list<2>("mpc.q_u", "paper", "control weights a, delta", FIELD(c.mpc.q_u)));
    e.push_back(list<2>("mpc.q_du", "paper", "control-rate weights a, delta", FIELD(c.mpc.q_du)));
    e.push_back(
        number("mpc.gamma", "chosen", "tracking schedule width, 1/s^2", FIELD(c.mpc.gamma)));
    e.push_back(number("mpc.p_y_min", "chosen", "lateral lower bound, m", FIELD(c.mpc.p_y_min)));
    e.push_back(number("mpc.p_y_max", "chosen", "lateral upper bound, m", FIELD(c.mpc.p_y_max)));
    e.push_back(number("mpc.a_min", "paper", "m/s^2", FIELD(c.mpc.bounds.a_min)));
    e.push_back(number("mpc.a_max", "paper", "m/s^2", FIELD(c.mpc.bounds.a_max)));
    e.push_back(number("mpc.delta_max", "paper", "steering bound, rad (symmetric)",
                       FIELD(c.mpc.bounds.delta_max)));
    e.push_back(integer<int>("mpc.max_iterations", "chosen", "solver iterations per replan",
                             FIELD(c.mpc.max_iterations)));
    e.push_back(number("mpc.tolerance", "chosen", "projected-gradient stationarity",
                       FIELD(c.mpc.tolerance)));
    e.push_back(number("mpc.lateral_penalty", "chosen", "weight on squared lateral bound violation",
                       FIELD(c.mpc.lateral_penalty)));
    e.push_back(number("mpc.penalty_escalation", "chosen",
                       "penalty factor applied once when violated",
                       FIELD(c.mpc.penalty_escalation)));
    e.push_back(number("mpc.lateral_tolerance", "chosen",
                       "violation above which a solve is infeasible-relaxed, m",
                       FIELD(c.mpc.lateral_tolerance)));
    e.push_back(integer<int>("mpc.lbfgs_memory", "chosen", "stored curvature pairs",
                             FIELD(c.mpc.lbfgs_memory)));
    // scenario
    e.push_back(number("scenario.ego_p_x_mean", "paper", "ego spawn x mean, m",
                       FIELD(c.scenario.ego_p_x_mean)));
    e.push_back(number("scenario.ego_p_x_std", "paper", "ego spawn x std, m",
                       FIELD(c.scenario.ego_p_x_std)));
    e.push_back(
        number("scenario.ego_p_y", "paper", "ego lane centre, m", FIELD(c.scenario.ego_p_y)));
    e.push_back(
        number("scenario.ego_v_x", "chosen", "ego initial speed, m/s", FIELD(c.scenario.ego_v_x)));
    e.push_back(number("scenario.gap_p_x_mean", "paper", "gap centre x mean, m",
                       FIELD(c.scenario.gap_p_x_mean)));
    e.push_back(number("scenario.gap_p_x_std", "paper", "gap centre x std, m",
                       FIELD(c.scenario.gap_p_x_std)));
    e.push_back(
        number("scenario.gap_p_y", "paper", "target lane centre, m", FIELD(c.scenario.gap_p_y)));
    e.push_back(number("scenario.gap_width", "chosen",
                       "free space between the bounding flow vehicles, m",
                       FIELD(c.scenario.gap_width)));
    e.push_back(integer<int>("scenario.flow_per_lane", "chosen", "flow vehicles per populated lane",
                             FIELD(c.scenario.flow_per_lane)));
    e.push_back(number("scenario.flow_spacing", "chosen", "bumper gap between flow vehicles, m",
                       FIELD(c.scenario.flow_spacing)));
    e.push_back(boolean("scenario.upper_lane", "chosen", "populate the upper lane",
                        FIELD(c.scenario.upper_lane)));
    e.push_back(number("scenario.lane_width", "chosen", "m", FIELD(c.scenario.lane_width)));
    e.push_back(integer<int>("scenario.front_count", "chosen",
                             "slow vehicles ahead on the ego lane", FIELD(c.scenario.front_count)));
    e.push_back(number("scenario.front_speed", "chosen", "front vehicle speed, m/s",
                       FIELD(c.scenario.front_speed)));
    e.push_back(number("scenario.front_lead", "chosen",
                       "nearest front vehicle ahead of the initial gap centre, m",
                       FIELD(c.scenario.front_lead)));
    e.push_back(number("scenario.front_spacing", "chosen", "distance between front vehicles, m",
                       FIELD(c.scenario.front_spacing)));
    e.push_back(number("scenario.other_length", "chosen", "other vehicle length, m",
                       FIELD(c.scenario.other_length)));
    e.push_back(number("scenario.other_width", "chosen", "other vehicle width, m",
                       FIELD(c.scenario.other_width)));
    e.push_back(number("scenario.t_max", "chosen", "episode duration, s", FIELD(c.scenario.t_max)));
    e.push_back(number("scenario.success_lateral_tol", "chosen",
                       "|p_y - lane centre| bound for success, m",
                       FIELD(c.scenario.success_lateral_tol)));
    e.push_back(number("scenario.success_heading_tol", "chosen", "|phi| bound for success, rad",
                       FIELD(c.scenario.success_heading_tol)));
    e.push_back(number("scenario.success_speed_tol", "chosen",
                       "|v_x - gap speed| bound for success, m/s",
                       FIELD(c.scenario.success_speed_tol)));
    e.push_back(number("scenario.success_clearance_fraction", "chosen",
                       "required share of the half free space on each side",
                       FIELD(c.scenario.success_clearance_fraction)));
    // curricula
    e.push_back(
        number("curricula.mu_1", "paper", "static flow mean speed, m/s", FIELD(c.curricula[0].mu)));
    e.push_back(number("curricula.sigma_1", "paper", "static flow speed std, m/s",
                       FIELD(c.curricula[0].sigma)));
    e.push_back(
        number("curricula.mu_2", "paper", "slow flow mean speed, m/s", FIELD(c.curricula[1].mu)));
    e.push_back(number("curricula.sigma_2", "paper", "slow flow speed std, m/s",
                       FIELD(c.curricula[1].sigma)));
    e.push_back(
        number("curricula.mu_3", "paper", "normal flow mean speed, m/s", FIELD(c.curricula[2].mu)));
    e.push_back(number("curricula.sigma_3", "paper", "normal flow speed std, m/s",
                       FIELD(c.curricula[2].sigma)));
    // reward
    e.push_back(number("reward.r_max", "chosen", "goal reward", FIELD(c.reward.r_max)));
    e.push_back(number("reward.c_collision", "chosen", "collision weight, curriculum 2",
                       FIELD(c.reward.c_collision)));
    e.push_back(number("reward.c_collision_enhanced", "chosen", "collision weight, curriculum 3",
                       FIELD(c.reward.c_collision_enhanced)));
    e.push_back(
        number("reward.c_x", "chosen", "shaping: x_tra distance to the gap", FIELD(c.reward.c_x)));
    e.push_back(number("reward.c_y", "chosen", "shaping: lateral reference out of bounds",
                       FIELD(c.reward.c_y)));
    e.push_back(number("reward.c_t", "chosen", "shaping: episode time", FIELD(c.reward.c_t)));
    e.push_back(
        number("reward.c_dt", "chosen", "shaping: t_tra out of bounds", FIELD(c.reward.c_dt)));
    e.push_back(number("reward.c_dphi", "chosen", "shaping: heading reference out of bounds",
                       FIELD(c.reward.c_dphi)));
    e.push_back(
        list<6>("reward.c_q", "chosen", "shaping: negative q_max entries", FIELD(c.reward.c_q)));
    e.push_back(number("reward.t_min", "chosen", "s", FIELD(c.reward.t_min)));
    e.push_back(number("reward.t_max", "chosen", "s", FIELD(c.reward.t_max)));
    e.push_back(number("reward.phi_min", "chosen", "rad", FIELD(c.reward.phi_min)));
    e.push_back(number("reward.phi_max", "chosen", "rad", FIELD(c.reward.phi_max)));
    e.push_back(number("reward.p_y_min", "chosen", "m", FIELD(c.reward.p_y_min)));
    e.push_back(number("reward.p_y_max", "chosen", "m", FIELD(c.reward.p_y_max)));
    // policy
    e.push_back(integer<std::uint64_t>("policy.init_seed", "chosen", "weight initialization seed",
                                       FIELD(c.trainer.init_seed)));
    e.push_back(list<kDecisionDim>("policy.output_bias", "chosen",
                                   "initial z: x_tra (6), q_max (6), t_tra",
                                   FIELD(c.policy.output_bias)));
    e.push_back(number("policy.output_weight_scale", "chosen", "output layer shrink factor at init",
                       FIELD(c.policy.output_weight_scale)));
    // trainer
    e.push_back(number("trainer.epsilon", "chosen", "relative finite-difference step",
                       FIELD(c.trainer.epsilon)));
    e.push_back(number("trainer.epsilon_floor", "chosen", "absolute finite-difference floor",
                       FIELD(c.trainer.epsilon_floor)));
    e.push_back(number("trainer.lr0", "paper", "initial learning rate", FIELD(c.trainer.lr0)));
    e.push_back(
        number("trainer.lr_decay", "paper", "learning-rate factor", FIELD(c.trainer.lr_decay)));
    e.push_back(integer<int>("trainer.lr_decay_every", "paper", "steps between decays",
                             FIELD(c.trainer.lr_decay_every)));
    e.push_back(
        number("trainer.beta1", "chosen", "Adam first-moment decay", FIELD(c.trainer.beta1)));
    e.push_back(
        number("trainer.beta2", "chosen", "Adam second-moment decay", FIELD(c.trainer.beta2)));
    e.push_back(number("trainer.adam_epsilon", "chosen", "Adam denominator guard",
                       FIELD(c.trainer.adam_epsilon)));
    e.push_back(number("trainer.grad_clip", "chosen", "global gradient-norm clip, 0 disables",
                       FIELD(c.trainer.grad_clip)));
    e.push_back({"trainer.schedule", "paper", "curriculum:episodes stages in order",
                 [](const HarnessConfig& c) { return fmt_schedule(c.trainer.schedule); },
                 [](HarnessConfig& c, const std::string& v) {
                   c.trainer.schedule = parse_schedule("trainer.schedule", v);
                 }});
    e.push_back(integer<std::uint64_t>("trainer.seed", "chosen", "episode seed stream",
                                       FIELD(c.trainer.seed)));
    e.push_back(integer<std::uint64_t>("trainer.norm_seed", "chosen",
                                       "seed stream of the normalization resets",
                                       FIELD(c.trainer.norm_seed)));
    e.push_back(integer<int>("trainer.norm_samples", "chosen",
                             "curriculum-1 resets behind the normalization",
                             FIELD(c.trainer.norm_samples)));
    e.push_back(integer<int>("trainer.workers", "chosen", "threads for the 14 episodes of a step",
                             FIELD(c.trainer.workers)));
    // eval
    e.push_back(
        integer<int>("eval.trials", "paper", "seeded evaluation episodes", FIELD(c.eval.trials)));
    e.push_back(integer<int>("eval.curriculum", "chosen", "traffic conditions of the evaluation",
                             FIELD(c.eval.curriculum)));
    e.push_back(integer<std::uint64_t>("eval.seed", "chosen", "evaluation seed stream",
                                       FIELD(c.eval.seed)));
    e.push_back(integer<int>("eval.workers", "chosen", "threads for evaluation episodes",
                             FIELD(c.eval.workers)));
    // replay
    e.push_back(integer<int>("replay.curriculum", "chosen", "traffic conditions of the replay",
                             FIELD(c.replay.curriculum)));
    e.push_back(
        integer<std::uint64_t>("replay.seed", "chosen", "episode seed", FIELD(c.replay.seed)));
    e.push_back(boolean("replay.record_plans", "chosen",
                        "write the planned trajectory of every replan",
                        FIELD(c.replay.record_plans)));
    return e;
  }();
  return entries;
}

#undef FIELD

const Entry* find_entry(const std::string& key) {
  for (const auto& e : schema())
    if (e.key == key) return &e;
  return nullptr;
}

void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) throw ConfigError(key, msg);
}

}  // namespace

VehicleParams VehicleValues::build() const {
  return VehicleParams(mass, l_f, l_r, k_f, k_r, i_z, length, width);
}

void HarnessConfig::validate() const {
  require(vehicle.mass > 0, "vehicle.mass", "must be > 0");
  require(vehicle.l_f > 0, "vehicle.l_f", "must be > 0");
  require(vehicle.l_r > 0, "vehicle.l_r", "must be > 0");
  require(vehicle.k_f < 0, "vehicle.k_f", "must be < 0");
  require(vehicle.k_r < 0, "vehicle.k_r", "must be < 0");
  require(vehicle.i_z > 0, "vehicle.i_z", "must be > 0");
  require(vehicle.length > 0, "vehicle.length", "must be > 0");
  require(vehicle.width > 0, "vehicle.width", "must be > 0");
  mpc.validate();
  scenario.validate();
  for (int i = 0; i < 3; ++i) {
    const std::string n = std::to_string(i + 1);
    require(curricula[i].mu >= 0, "curricula.mu_" + n, "must be >= 0");
    require(curricula[i].sigma >= 0, "curricula.sigma_" + n, "must be >= 0");
  }
  reward.validate();
  require(policy.output_weight_scale >= 0, "policy.output_weight_scale", "must be >= 0");
  trainer.validate();
  require(eval.trials >= 1, "eval.trials", "must be >= 1");
  require(eval.curriculum >= 1 && eval.curriculum <= 3, "eval.curriculum", "must be 1, 2 or 3");
  require(eval.workers >= 1, "eval.workers", "must be >= 1");
  require(replay.curriculum >= 1 && replay.curriculum <= 3, "replay.curriculum",
          "must be 1, 2 or 3");
}

TrainingEnv HarnessConfig::env() const {
  TrainingEnv env;
  env.episode = {vehicle.build(), mpc, scenario};
  env.reward = reward;
  env.curricula = curricula;
  return env;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : schema()) keys.push_back(e.key);
  return keys;
}

HarnessConfig parse_config(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "unknown key outside any known section");
    for (const auto& [name, leaf] : body) {
      const std::string key = section + "." + name;
      if (find_entry(key) == nullptr) throw ConfigError(key, "unknown key in " + source);
      values[key] = leaf.data();
    }
  }
  HarnessConfig cfg;
  for (const auto& e : schema()) {
    const auto it = values.find(e.key);
    if (it == values.end()) throw ConfigError(e.key, "missing from " + source);
    e.set(cfg, it->second);
  }
  cfg.validate();
  return cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  return parse_config(in, path.string());
}

void apply_override(HarnessConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(trim(assignment), "override must look like section.key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const Entry* e = find_entry(key);
  if (e == nullptr) throw ConfigError(key, "unknown key");
  e->set(cfg, assignment.substr(eq + 1));
}

std::string dump_config(const HarnessConfig& cfg, bool annotate) {
  std::string out;
  std::string section;
  for (const auto& e : schema()) {
    const auto dot = e.key.find('.');
    const std::string sec = e.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    if (annotate) out += std::string("; [") + e.tag + "] " + e.doc + "\n";
    out += e.key.substr(dot + 1) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

int EvalReport::count(EpisodeStatus s) const {
  int n = 0;
  for (const auto& t : trials) n += t.status == s ? 1 : 0;
  return n;
}

double EvalReport::rate(EpisodeStatus s) const {
  if (trials.empty()) return 0.0;
  return 100.0 * count(s) / static_cast<double>(trials.size());
}

double EvalReport::mean_time_to_merge() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : trials) {
    if (t.status == EpisodeStatus::Success) {
      sum += t.t_end;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

EvalReport evaluate(const PolicyParams& policy, const HarnessConfig& cfg) {
  cfg.validate();
  const TrainingEnv env = cfg.env();
  const CurriculumSpec& curriculum = env.curriculum(cfg.eval.curriculum);
  EvalReport report;
  report.curriculum = curriculum.id;
  report.seed = cfg.eval.seed;
  report.trials.resize(cfg.eval.trials);
  parallel_for(report.trials.size(), cfg.eval.workers, [&](std::size_t i) {
    TrialResult& t = report.trials[i];
    t.index = static_cast<int>(i) + 1;
    t.seed = episode_seed(cfg.eval.seed, t.index);
    const auto o = reset(curriculum, t.seed, env.episode.scenario, env.episode.vehicle).second;
    const DecisionVector z = forward(o, policy);
    const auto outcome = run_episode(z, curriculum, t.seed, env.episode);
    t.status = outcome.status;
    t.t_end = outcome.t_end;
    t.aborted = outcome.aborted;
    t.collision_speeds = outcome.collision_speeds;
    t.reward = episode_reward(curriculum, z, o, &outcome, env.reward);
    t.z = z.to_array();
  });
  return report;
}

nlohmann::json to_json(const TrialResult& t) {
  nlohmann::json z;
  for (int j = 0; j < kDecisionDim; ++j) z[decision_names()[j]] = t.z[j];
  return {{"trial", t.index},
          {"seed", t.seed},
          {"status", to_string(t.status)},
          {"t_end", t.t_end},
          {"reward", t.reward},
          {"aborted", t.aborted},
          {"collision_speeds", t.collision_speeds},
          {"z", z}};
}

nlohmann::json to_json(const EvalReport& r) {
  const double success = r.rate(EpisodeStatus::Success);
  const double collision = r.rate(EpisodeStatus::Collision);
  const double timeout = r.rate(EpisodeStatus::TimeOut);
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) trials.push_back(to_json(t));
  const double gap = kReferenceRates[0] - success;
  const auto pct = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", x);
    return std::string(buf);
  };
  std::ostringstream note;
  note << "success " << pct(success) << "% vs reference " << pct(kReferenceRates[0]) << "% ("
       << (gap >= 0 ? pct(gap) + " points below" : pct(-gap) + " points above")
       << "); the reference used an interior-point NLP solver and unpublished reward and "
          "scenario constants, so the absolute rates are not expected to match";
  return {{"curriculum", r.curriculum},
          {"seed", r.seed},
          {"trials", r.trials.size()},
          {"counts",
           {{"success", r.count(EpisodeStatus::Success)},
            {"collision", r.count(EpisodeStatus::Collision)},
            {"time_out", r.count(EpisodeStatus::TimeOut)}}},
          {"success_rate", success},
          {"collision_rate", collision},
          {"timeout_rate", timeout},
          {"mean_time_to_merge", r.mean_time_to_merge()},
          {"reference",
           {{"success_rate", kReferenceRates[0]},
            {"collision_rate", kReferenceRates[1]},
            {"timeout_rate", kReferenceRates[2]}}},
          {"gap_to_reference",
           {{"success_points", kReferenceRates[0] - success},
            {"collision_points", collision - kReferenceRates[1]},
            {"timeout_points", timeout - kReferenceRates[2]},
            {"note", note.str()}}},
          {"per_trial", std::move(trials)}};
}

std::string format_table(const EvalReport& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "curriculum %d, %zu trials, seed %llu\n", r.curriculum,
                r.trials.size(), static_cast<unsigned long long>(r.seed));
  out += buf;
  out += "outcome     count   rate %   reference %\n";
  const std::array<std::pair<const char*, EpisodeStatus>, 3> rows{
      {{"success", EpisodeStatus::Success},
       {"collision", EpisodeStatus::Collision},
       {"time-out", EpisodeStatus::TimeOut}}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-10s %6d %8.1f %13.1f\n", rows[i].first,
                  r.count(rows[i].second), r.rate(rows[i].second), kReferenceRates[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean time to merge %.2f s\n", r.mean_time_to_merge());
  out += buf;
  return out;
}

ReplayResult replay_episode(const DecisionVector& z, int curriculum_id, std::uint64_t seed,
                            const HarnessConfig& cfg) {
  cfg.validate();
  const TrainingEnv env = cfg.env();
  const CurriculumSpec& curriculum = env.curriculum(curriculum_id);
  ReplayResult r;
  r.curriculum = curriculum_id;
  r.seed = seed;
  r.z = z;
  r.outcome = run_episode(z, curriculum, seed, env.episode,
                          EpisodeOptions{.record_plans = cfg.replay.record_plans});
  r.reward = episode_breakdown(curriculum, z, r.outcome.observation, &r.outcome, env.reward);
  return r;
}

std::string replay_csv(const ReplayResult& r) {
  std::string out =
      "t,p_x,p_y,phi,v_x,v_y,omega,a,delta,gap_p_x,gap_p_y,gap_v_x,plan_cost,plan_status,"
      "plan_iterations\n";
  for (const auto& s : r.outcome.steps) {
    const auto& x = s.ego;
    out += fmt17(s.t) + ',' + fmt17(x.p_x) + ',' + fmt17(x.p_y) + ',' + fmt17(x.phi) + ',' +
           fmt17(x.v_x) + ',' + fmt17(x.v_y) + ',' + fmt17(x.omega) + ',' + fmt17(s.control.a) +
           ',' + fmt17(s.control.delta) + ',' + fmt17(s.gap.p_x) + ',' + fmt17(s.gap.p_y) + ',' +
           fmt17(s.gap.v_x) + ',' + fmt17(s.plan_cost) + ',' + to_string(s.plan_status) + ',' +
           std::to_string(s.plan_iterations) + '\n';
  }
  return out;
}

std::string plans_csv(const ReplayResult& r) {
  std::string out = "step,t_plan,t,p_x,p_y,phi,v_x,v_y,omega,a,delta,cost\n";
  const auto& steps = r.outcome.steps;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const double t_plan = steps[i - 1].t;
    const double dt = s.t - t_plan;
    for (std::size_t k = 0; k < s.plan.size(); ++k) {
      const auto& x = s.plan[k];
      const bool has_u = k < s.plan_controls.size();
      out += std::to_string(i - 1) + ',' + fmt17(t_plan) + ',' + fmt17(t_plan + k * dt) + ',' +
             fmt17(x.p_x) + ',' + fmt17(x.p_y) + ',' + fmt17(x.phi) + ',' + fmt17(x.v_x) + ',' +
             fmt17(x.v_y) + ',' + fmt17(x.omega) + ',' +
             (has_u ? fmt17(s.plan_controls[k].a) : "") + ',' +
             (has_u ? fmt17(s.plan_controls[k].delta) : "") + ',' + fmt17(s.plan_cost) + '\n';
    }
  }
  return out;
}

std::string replay_jsonl(const ReplayResult& r) {
  std::string out;
  const auto& steps = r.outcome.steps;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const nlohmann::json rec{{"type", "step"},
                             {"k", i},
                             {"t", s.t},
                             {"ego",
                              {{"p_x", s.ego.p_x},
                               {"p_y", s.ego.p_y},
                               {"phi", s.ego.phi},
                               {"v_x", s.ego.v_x},
                               {"v_y", s.ego.v_y},
                               {"omega", s.ego.omega}}},
                             {"control", {{"a", s.control.a}, {"delta", s.control.delta}}},
                             {"gap", {{"p_x", s.gap.p_x}, {"p_y", s.gap.p_y}, {"v_x", s.gap.v_x}}},
                             {"plan_cost", s.plan_cost},
                             {"plan_status", to_string(s.plan_status)},
                             {"plan_iterations", s.plan_iterations}};
    out += rec.dump() + '\n';
  }
  nlohmann::json z;
  const auto za = r.z.to_array();
  for (int j = 0; j < kDecisionDim; ++j) z[decision_names()[j]] = za[j];
  nlohmann::json terms;
  for (const auto& [name, value] : r.reward.terms) terms[name] = value;
  const nlohmann::json summary{{"type", "summary"},
                               {"curriculum", r.curriculum},
                               {"seed", r.seed},
                               {"status", to_string(r.outcome.status)},
                               {"t_end", r.outcome.t_end},
                               {"aborted", r.outcome.aborted},
                               {"abort_reason", r.outcome.abort_reason},
                               {"collision_speeds", r.outcome.collision_speeds},
                               {"observation", r.outcome.observation},
                               {"z", z},
                               {"reward", {{"total", r.reward.total}, {"terms", terms}}}};
  out += summary.dump() + '\n';
  return out;
}

std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& prefix) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  std::filesystem::create_directories(base);
  const std::string stem = prefix + "-" + stamp;
  for (int n = 0;; ++n) {
    const auto dir = base / (n == 0 ? stem : stem + "-" + std::to_string(n));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lcmpc
