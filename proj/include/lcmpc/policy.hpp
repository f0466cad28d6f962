#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcmpc/mpc.hpp"
#include "lcmpc/traffic.hpp"

namespace lcmpc {

inline constexpr int kHiddenLayers = 4;
inline constexpr int kHiddenWidth = 128;
inline constexpr int kLayers = kHiddenLayers + 1;
inline constexpr std::array<int, kLayers + 1> kArchitecture{
    kObservationDim, kHiddenWidth, kHiddenWidth, kHiddenWidth, kHiddenWidth, kDecisionDim};
inline constexpr double kLeakySlope = 0.01;

/// Weights and biases of the 10-128-128-128-128-13 network. Also used for
/// gradients and optimizer moments, which share the shape.
struct MlpTensors {
  std::array<Eigen::MatrixXd, kLayers> w;  // w[l] is out x in
  std::array<Eigen::VectorXd, kLayers> b;

  static MlpTensors zeros();
  std::size_t size() const;
  double squared_norm() const;
  bool finite() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  MlpTensors& operator*=(double s);
  bool operator==(const MlpTensors& o) const;
};

using PolicyGradient = MlpTensors;

/// Per-feature z-score statistics of the observation.
struct NormStats {
  std::array<double, kObservationDim> mean{};
  std::array<double, kObservationDim> std{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

  /// Statistics of a sample; features with (near) zero spread get std 1.
  static NormStats from_samples(std::span<const Observation> samples);
  bool operator==(const NormStats&) const = default;
};

struct PolicyParams {
  MlpTensors net;
  NormStats norm;

  bool operator==(const PolicyParams& o) const { return net == o.net && norm == o.norm; }
};

/// Output-layer bias used at initialization, in decision-vector order.
struct PolicyInit {
  std::array<double, kDecisionDim> output_bias{50.0, 2.5, 0.0, 2.0, 0.0, 0.0, 1.0,
                                               1.0,  1.0, 1.0, 1.0, 1.0, 2.0};
  double output_weight_scale = 0.1;
};

Eigen::VectorXd normalize(const Observation& o, const NormStats& stats);

DecisionVector forward(const Observation& o, const PolicyParams& params);

/// Gradient of g_z . forward(o, params) with respect to every weight and bias.
PolicyGradient backward(const Observation& o, const PolicyParams& params,
                        std::span<const double> g_z);

/// Fan-in uniform weights: U(-sqrt(6/fan_in), sqrt(6/fan_in)) on hidden layers,
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) times output_weight_scale on the output
/// layer. Hidden biases are zero; the output bias is the init band.
PolicyParams init_params(std::uint64_t seed, const PolicyInit& init = {});

nlohmann::json to_json(const PolicyParams& params);
PolicyParams policy_from_json(const nlohmann::json& j);

void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace lcmpc
