#include "lcmpc/policy.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "lcmpc/errors.hpp"

namespace lcmpc {

namespace {

constexpr const char* kFormat = "lcmpc-policy";
constexpr int kFormatVersion = 1;

double leaky(double x) { return x >= 0.0 ? x : kLeakySlope * x; }
double leaky_grad(double x) { return x >= 0.0 ? 1.0 : kLeakySlope; }

struct Activations {
  std::array<Eigen::VectorXd, kLayers + 1> input;  // input[l] feeds layer l
  std::array<Eigen::VectorXd, kLayers> pre;
};

Activations run(const Observation& o, const PolicyParams& p) {
  Activations act;
  act.input[0] = normalize(o, p.norm);
  for (int l = 0; l < kLayers; ++l) {
    act.pre[l] = p.net.w[l] * act.input[l] + p.net.b[l];
    if (l + 1 < kLayers) {
      act.input[l + 1] = act.pre[l].unaryExpr(&leaky);
    } else {
      act.input[l + 1] = act.pre[l];
    }
  }
  return act;
}

}  // namespace

MlpTensors MlpTensors::zeros() {
  MlpTensors t;
  for (int l = 0; l < kLayers; ++l) {
    t.w[l] = Eigen::MatrixXd::Zero(kArchitecture[l + 1], kArchitecture[l]);
    t.b[l] = Eigen::VectorXd::Zero(kArchitecture[l + 1]);
  }
  return t;
}

std::size_t MlpTensors::size() const {
  std::size_t n = 0;
  for (int l = 0; l < kLayers; ++l) n += w[l].size() + b[l].size();
  return n;
}

double MlpTensors::squared_norm() const {
  double s = 0.0;
  for (int l = 0; l < kLayers; ++l) s += w[l].squaredNorm() + b[l].squaredNorm();
  return s;
}

bool MlpTensors::finite() const {
  for (int l = 0; l < kLayers; ++l)
    if (!w[l].allFinite() || !b[l].allFinite()) return false;
  return true;
}

std::vector<double> MlpTensors::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (int l = 0; l < kLayers; ++l) {
    // row-major so the flat order matches the checkpoint layout
    for (Eigen::Index r = 0; r < w[l].rows(); ++r)
      for (Eigen::Index c = 0; c < w[l].cols(); ++c) out.push_back(w[l](r, c));
    for (Eigen::Index r = 0; r < b[l].size(); ++r) out.push_back(b[l][r]);
  }
  return out;
}

void MlpTensors::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw InvalidInputError("flat parameter vector has the wrong size");
  std::size_t i = 0;
  for (int l = 0; l < kLayers; ++l) {
    for (Eigen::Index r = 0; r < w[l].rows(); ++r)
      for (Eigen::Index c = 0; c < w[l].cols(); ++c) w[l](r, c) = flat[i++];
    for (Eigen::Index r = 0; r < b[l].size(); ++r) b[l][r] = flat[i++];
  }
}

MlpTensors& MlpTensors::operator*=(double s) {
  for (int l = 0; l < kLayers; ++l) {
    w[l] *= s;
    b[l] *= s;
  }
  return *this;
}

bool MlpTensors::operator==(const MlpTensors& o) const {
  for (int l = 0; l < kLayers; ++l) {
    if (w[l].rows() != o.w[l].rows() || w[l].cols() != o.w[l].cols()) return false;
    if (w[l] != o.w[l] || b[l] != o.b[l]) return false;
  }
  return true;
}

NormStats NormStats::from_samples(std::span<const Observation> samples) {
  NormStats s;
  if (samples.empty()) return s;
  const double n = static_cast<double>(samples.size());
  for (int i = 0; i < kObservationDim; ++i) {
    double mean = 0.0;
    for (const auto& o : samples) mean += o[i];
    mean /= n;
    double var = 0.0;
    for (const auto& o : samples) var += (o[i] - mean) * (o[i] - mean);
    var /= n;
    const double sd = std::sqrt(var);
    s.mean[i] = mean;
    s.std[i] = sd > 1e-6 ? sd : 1.0;
  }
  return s;
}

Eigen::VectorXd normalize(const Observation& o, const NormStats& stats) {
  Eigen::VectorXd v(kObservationDim);
  for (int i = 0; i < kObservationDim; ++i) v[i] = (o[i] - stats.mean[i]) / stats.std[i];
  return v;
}

DecisionVector forward(const Observation& o, const PolicyParams& params) {
  const auto act = run(o, params);
  const auto& out = act.input[kLayers];
  return DecisionVector::from_array(std::span<const double>(out.data(), kDecisionDim));
}

PolicyGradient backward(const Observation& o, const PolicyParams& params,
                        std::span<const double> g_z) {
  if (g_z.size() != kDecisionDim) throw InvalidInputError("backward expects a 13-vector");
  const auto act = run(o, params);
  PolicyGradient grad = MlpTensors::zeros();
  Eigen::VectorXd delta = Eigen::Map<const Eigen::VectorXd>(g_z.data(), kDecisionDim);
  for (int l = kLayers - 1; l >= 0; --l) {
    if (l + 1 < kLayers) {
      delta = delta.cwiseProduct(act.pre[l].unaryExpr(&leaky_grad));
    }
    grad.w[l].noalias() = delta * act.input[l].transpose();
    grad.b[l] = delta;
    if (l > 0) delta = params.net.w[l].transpose() * delta;
  }
  return grad;
}

PolicyParams init_params(std::uint64_t seed, const PolicyInit& init) {
  std::mt19937_64 rng(seed);
  PolicyParams p;
  p.net = MlpTensors::zeros();
  for (int l = 0; l < kLayers; ++l) {
    const double fan_in = kArchitecture[l];
    const bool hidden = l + 1 < kLayers;
    const double bound = hidden ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = p.net.w[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
  }
  p.net.w[kLayers - 1] *= init.output_weight_scale;
  for (int i = 0; i < kDecisionDim; ++i) p.net.b[kLayers - 1][i] = init.output_bias[i];
  return p;
}

nlohmann::json to_json(const PolicyParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < kLayers; ++l) {
    const auto& w = params.net.w[l];
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      std::vector<double> row(w.cols());
      for (Eigen::Index c = 0; c < w.cols(); ++c) row[c] = w(r, c);
      rows.push_back(std::move(row));
    }
    const auto& b = params.net.b[l];
    layers.push_back({{"weight", std::move(rows)},
                      {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return {{"format", kFormat},
          {"version", kFormatVersion},
          {"architecture", kArchitecture},
          {"activation", "leaky_relu"},
          {"negative_slope", kLeakySlope},
          {"norm", {{"mean", params.norm.mean}, {"std", params.norm.std}}},
          {"layers", std::move(layers)}};
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      throw CheckpointError("not a policy checkpoint");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw CheckpointError("unsupported checkpoint version");
    }
    if (j.at("architecture").get<std::vector<int>>() !=
        std::vector<int>(kArchitecture.begin(), kArchitecture.end())) {
      throw CheckpointError("checkpoint architecture does not match 10-128-128-128-128-13");
    }
    PolicyParams p;
    p.net = MlpTensors::zeros();
    p.norm.mean = j.at("norm").at("mean").get<std::array<double, kObservationDim>>();
    p.norm.std = j.at("norm").at("std").get<std::array<double, kObservationDim>>();
    const auto& layers = j.at("layers");
    if (layers.size() != kLayers) throw CheckpointError("checkpoint has the wrong layer count");
    for (int l = 0; l < kLayers; ++l) {
      const auto& rows = layers[l].at("weight");
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      auto& w = p.net.w[l];
      if (static_cast<Eigen::Index>(rows.size()) != w.rows() ||
          static_cast<Eigen::Index>(bias.size()) != w.rows()) {
        throw CheckpointError("checkpoint layer " + std::to_string(l) + " has the wrong shape");
      }
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != w.cols()) {
          throw CheckpointError("checkpoint layer " + std::to_string(l) + " has the wrong shape");
        }
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = row[c];
        p.net.b[l][r] = bias[r];
      }
    }
    for (double s : p.norm.std)
      if (!(s > 0)) throw CheckpointError("normalization std must be positive");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed policy checkpoint: ") + e.what());
  }
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << to_json(params).dump() << '\n';
  if (!out) throw CheckpointError("failed writing " + path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("cannot parse " + path.string() + ": " + e.what());
  }
  // trainer checkpoints nest the policy
  if (j.contains("policy")) return policy_from_json(j.at("policy"));
  return policy_from_json(j);
}

}  // namespace lcmpc
