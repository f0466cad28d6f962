#include <cmath>
#include <random>

#include "doctest.h"
#include "lcmpc/errors.hpp"
#include "lcmpc/reward.hpp"
#include "oracles.hpp"

using namespace lcmpc;

namespace {

EpisodeOutcome outcome(EpisodeStatus status, std::vector<double> speeds = {}) {
  EpisodeOutcome o;
  o.status = status;
  o.collision_speeds = std::move(speeds);
  return o;
}

Observation gap_at(double p_x) {
  Observation o{};
  o[4] = p_x;
  return o;
}

}  // namespace

TEST_CASE("lane-change reward worked examples") {
  CHECK(lane_change_reward(outcome(EpisodeStatus::Success), 100, 1) == 100.0);
  CHECK(lane_change_reward(outcome(EpisodeStatus::Collision, {5.0}), 100, 1) == -25.0);
  CHECK(lane_change_reward(outcome(EpisodeStatus::TimeOut), 100, 1) == 0.0);
  CHECK(lane_change_reward(outcome(EpisodeStatus::Collision, {3.0, 4.0}), 100, 2) == -50.0);
  const auto b = lane_change_breakdown(outcome(EpisodeStatus::Success), 100, 1);
  REQUIRE(b.terms.size() == 2);
  CHECK(b.terms[0].first == "goal");
  CHECK(b.terms[0].second + b.terms[1].second == b.total);
}

TEST_CASE("shaping worked examples") {
  const RewardConfig c;
  DecisionVector z;
  z.x_tra.p_x = 50.0;
  z.t_tra = 2.0;
  CHECK(shaping_reward(z, gap_at(50.0), 0.0, c) == 0.0);
  CHECK(shaping_reward(z, gap_at(40.0), 0.0, c) == doctest::Approx(-1.0).epsilon(1e-15));
  z.x_tra.p_y = 7.0;  // 2 m above the band
  CHECK(shaping_reward(z, gap_at(50.0), 0.0, c) == -2.0);
  z.x_tra.p_y = 0.0;
  z.t_tra = -0.5;
  CHECK(shaping_reward(z, gap_at(50.0), 0.0, c) == -0.5);
  z.t_tra = 2.0;
  z.x_tra.phi = -1.0;
  CHECK(shaping_reward(z, gap_at(50.0), 0.0, c) == doctest::Approx(-0.4).epsilon(1e-15));
  z.x_tra.phi = 0.0;
  z.q_max = {0, -0.25, 0, 0, 0, 0.5};
  CHECK(shaping_reward(z, gap_at(50.0), 0.0, c) == -0.25);
  z.q_max = {};
  CHECK(shaping_reward(z, gap_at(50.0), 3.0, c) == -3.0);
}

TEST_CASE("shaping matches the term-by-term oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RewardConfig c;
  c.c_x = 0.3;
  c.c_q = {0.5, 1.5, 2.0, 0.1, 0.7, 1.1};
  for (int i = 0; i < 1000; ++i) {
    auto z = oracle::random_decision(rng);
    z.x_tra.p_x *= 80;
    z.x_tra.p_y *= 8;
    z.x_tra.phi *= 1.5;
    z.t_tra *= 15;
    const auto o = gap_at(50 + 10 * u(rng));
    const double t = 5 * std::abs(u(rng));
    CHECK(shaping_reward(z, o, t, c) ==
          doctest::Approx(oracle::shaping(z, o, t, c)).epsilon(1e-12).scale(1.0));
    CHECK(shaping_reward(z, o, t, c) <= 0.0);
  }
}

TEST_CASE("shaping is monotone in each violation") {
  const RewardConfig c;
  DecisionVector z;
  z.x_tra.p_x = 50;
  double prev = shaping_reward(z, gap_at(50), 0, c);
  for (double d = 1; d <= 10; d += 1) {
    z.x_tra.p_y = 5 + d;
    const double r = shaping_reward(z, gap_at(50), 0, c);
    CHECK(r < prev);
    prev = r;
  }
  z.x_tra.p_y = 0;
  prev = shaping_reward(z, gap_at(50), 0, c);
  for (double d = 1; d <= 10; d += 1) {
    z.x_tra.p_x = 50 + d;
    const double r = shaping_reward(z, gap_at(50), 0, c);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("lane-change reward never exceeds r_max") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> speeds(i % 4);
    for (auto& s : speeds) s = u(rng);
    const auto status = i % 3 == 0
                            ? EpisodeStatus::Success
                            : (speeds.empty() ? EpisodeStatus::TimeOut : EpisodeStatus::Collision);
    CHECK(lane_change_reward(outcome(status, speeds), 100, 1) <= 100.0);
  }
}

TEST_CASE("curriculum dispatch") {
  const RewardConfig c;
  DecisionVector z;
  z.x_tra.p_x = 40;
  const auto o = gap_at(50);
  const auto crash = outcome(EpisodeStatus::Collision, {4.0});
  const auto c1 = CurriculumSpec::standard(1);
  const auto c2 = CurriculumSpec::standard(2);
  const auto c3 = CurriculumSpec::standard(3);

  CHECK(episode_reward(c1, z, o, nullptr, c) == shaping_reward(z, o, 0.0, c));
  CHECK(episode_reward(c2, z, o, &crash, c) == -16.0 * c.c_collision);
  CHECK(episode_reward(c3, z, o, &crash, c) == -16.0 * c.c_collision_enhanced);
  CHECK(episode_reward(c3, z, o, &crash, c) < episode_reward(c2, z, o, &crash, c));

  const auto win = outcome(EpisodeStatus::Success);
  CHECK(episode_reward(c2, z, o, &win, c) == c.r_max);
  CHECK(episode_reward(c3, z, o, &win, c) == c.r_max);

  CHECK_THROWS_AS(episode_reward(c2, z, o, nullptr, c), InvalidInputError);
  auto bad = c2;
  bad.id = 4;
  CHECK_THROWS_AS(episode_reward(bad, z, o, &crash, c), InvalidInputError);
  bad.id = 0;
  CHECK_THROWS_AS(episode_reward(bad, z, o, &crash, c), InvalidInputError);
}

TEST_CASE("reward config validation names the key") {
  RewardConfig c;
  c.c_x = -1;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("reward.c_x") != std::string::npos);
  }
  c = {};
  c.c_collision_enhanced = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.t_min = c.t_max;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(RewardConfig{}.validate());
}
