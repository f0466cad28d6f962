#include <algorithm>
#include <cmath>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "lcmpc/traffic.hpp"
#include "lcmpc/trainer.hpp"
#include "oracles.hpp"

using namespace lcmpc;

namespace {

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

bool same_outcome(const EpisodeOutcome& a, const EpisodeOutcome& b) {
  if (a.status != b.status || a.t_end != b.t_end || a.collision_speeds != b.collision_speeds ||
      a.steps.size() != b.steps.size() || a.observation != b.observation) {
    return false;
  }
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    if (!(a.steps[k].ego == b.steps[k].ego) || !(a.steps[k].control == b.steps[k].control)) {
      return false;
    }
  }
  return true;
}

DecisionVector sensible_z() {
  DecisionVector z;
  z.x_tra = {50, 2.5, 0, 2, 0, 0};
  z.q_max = {1, 1, 1, 1, 1, 1};
  z.t_tra = 2.0;
  return z;
}

/// Scene with a hand-placed ego for predicate checks.
TrafficScene scene_with_ego(const VehicleState& ego, double gap_v = 4.0) {
  auto scene = reset(CurriculumSpec::standard(1), 1).first;
  scene.gap = {50.0, 2.5, gap_v, 12.0};
  scene.ego = ego;
  return scene;
}

}  // namespace

TEST_CASE("reset is deterministic per seed") {
  for (int id = 1; id <= 3; ++id) {
    const auto a = reset(CurriculumSpec::standard(id), 99);
    const auto b = reset(CurriculumSpec::standard(id), 99);
    CHECK(a.second == b.second);
    CHECK(a.first.flow == b.first.flow);
    CHECK(a.first.front == b.first.front);
    CHECK(a.first.gap == b.first.gap);
    CHECK(a.first.ego == b.first.ego);
    CHECK(a.first.rng == b.first.rng);
  }
  CHECK(reset(CurriculumSpec::standard(3), 1).second !=
        reset(CurriculumSpec::standard(3), 2).second);
}

TEST_CASE("static flow in the first curriculum") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto scene = reset(CurriculumSpec::standard(1), seed).first;
    for (const auto& v : scene.flow) CHECK(v.v_x == 0.0);
    CHECK(scene.gap.v_x == 0.0);
    const auto before = scene.flow;
    for (int k = 0; k < 20; ++k) scene = step_scene(std::move(scene), {}, 0.1);
    CHECK(scene.flow == before);
  }
}

TEST_CASE("spawn layout") {
  const auto [scene, o] = reset(CurriculumSpec::standard(2), 5);
  CHECK(scene.ego.p_y == -2.5);
  CHECK(scene.ego.phi == 0.0);
  CHECK(scene.gap.p_y == 2.5);
  CHECK(o == Observation{scene.ego.p_x, -2.5, 0.0, scene.ego.v_x, scene.gap.p_x, 2.5, scene.gap.v_x,
                         scene.nearest_front().p_x, -2.5, scene.nearest_front().v_x});
  for (const auto& f : scene.front) {
    CHECK(f.lane == 0);
    CHECK(f.p_x > scene.ego.p_x);
  }
  // the middle-lane vehicles bounding the chance leave exactly the gap width free
  double rear = -1e9, front = 1e9;
  for (const auto& v : scene.flow) {
    if (v.lane != 1) continue;
    if (v.p_x < scene.gap.p_x) rear = std::max(rear, v.p_x + v.length / 2);
    if (v.p_x > scene.gap.p_x) front = std::min(front, v.p_x - v.length / 2);
  }
  CHECK(front - rear == doctest::Approx(12.0).epsilon(1e-12));
  CHECK((front + rear) / 2 == doctest::Approx(scene.gap.p_x).epsilon(1e-12));
}

TEST_CASE("spawn distribution over 10000 resets") {
  std::vector<double> ego_x, gap_x;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto o = reset(CurriculumSpec::standard(3), seed).second;
    ego_x.push_back(o[0]);
    gap_x.push_back(o[4]);
  }
  CHECK(std::abs(mean(ego_x) - 30.0) <= 0.1);
  CHECK(std::abs(stddev(ego_x) - 2.5) <= 0.1);
  CHECK(std::abs(mean(gap_x) - 50.0) <= 0.4);
  CHECK(std::abs(stddev(gap_x) - 10.0) <= 0.4);
}

TEST_CASE("noise-free gap advances at its speed") {
  const CurriculumSpec still{3, 4.0, 0.0, RewardMode::LaneChangeEnhanced};
  auto scene = reset(still, 3).first;
  CHECK(scene.gap.v_x == 4.0);
  for (int k = 0; k < 10; ++k) {
    const double x = scene.gap.p_x;
    scene = step_scene(std::move(scene), {}, 0.1);
    CHECK(scene.gap.p_x - x == doctest::Approx(0.4).epsilon(1e-12));
  }
  CHECK(scene.t_now == doctest::Approx(1.0).epsilon(1e-12));
  const GoalState g0 = goal_from_scene(scene);
  scene = step_scene(std::move(scene), {}, 0.1);
  CHECK(goal_from_scene(scene).target.p_x - g0.target.p_x == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("gap displacement spread matches the integrated speed walk") {
  // speeds far from the clamp at zero; remove the initial-speed drift
  const CurriculumSpec fast{3, 20.0, 1.0, RewardMode::LaneChangeEnhanced};
  const double dt = 0.1;
  std::vector<double> residual;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto scene = reset(fast, seed).first;
    const double x0 = scene.gap.p_x, v0 = scene.gap.v_x;
    for (int k = 0; k < 100; ++k) scene = step_scene(std::move(scene), {}, dt);
    residual.push_back(scene.gap.p_x - x0 - 100 * dt * v0);
  }
  // position k uses the speed after k-1 increments of std sigma*sqrt(dt)
  double var = 0;
  for (int j = 1; j <= 99; ++j) var += double(j) * j;
  const double expected = std::sqrt(var * dt * dt * dt);
  CHECK(stddev(residual) >= 0.8 * expected);
  CHECK(stddev(residual) <= 1.2 * expected);
}

TEST_CASE("lane order is preserved and speeds stay non-negative") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto scene = reset(CurriculumSpec::standard(3), seed).first;
    for (int k = 0; k < 100; ++k) {
      scene = step_scene(std::move(scene), {}, 0.1);
      for (int lane = 0; lane <= 2; ++lane) {
        std::vector<double> xs;
        for (const auto& v : scene.flow)
          if (v.lane == lane) xs.push_back(v.p_x);
        for (const auto& v : scene.front)
          if (v.lane == lane) xs.push_back(v.p_x);
        CHECK(std::is_sorted(xs.begin(), xs.end()));
      }
      for (const auto& v : scene.flow) CHECK(v.v_x >= 0.0);
      CHECK(scene.gap.v_x >= 0.0);
      CHECK(scene.gap.width == 12.0);
      CHECK(scene.ego.v_x >= 0.0);
    }
  }
}

TEST_CASE("collision geometry") {
  const OtherVehicle other{1, 10.0, 2.5, 0.0, 4.5, 2.0};
  CHECK(boxes_overlap({10.0, 2.5, 0, 0, 0, 0}, 4.5, 2.0, other));
  CHECK_FALSE(boxes_overlap({110.0, 2.5, 0, 0, 0, 0}, 4.5, 2.0, other));

  SUBCASE("matches an independent polygon test on random poses") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
      const VehicleState ego{10 + 6 * u(rng), 2.5 + 3 * u(rng), 1.5 * u(rng), 0, 0, 0};
      const bool want =
          oracle::quads_overlap(oracle::rectangle(ego.p_x, ego.p_y, ego.phi, 4.5, 2.0),
                                oracle::rectangle(10.0, 2.5, 0.0, 4.5, 2.0));
      CHECK(boxes_overlap(ego, 4.5, 2.0, other) == want);
      hits += want;
    }
    CHECK(hits > 100);
    CHECK(hits < 900);
  }

  SUBCASE("near-touching configurations at one centimetre") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const double phi = 0.3 * u(rng);
      const double sign = u(rng) < 0 ? -1.0 : 1.0;
      const double offset = sign * 0.01;
      // place the ego so its extreme corner sits one centimetre from the other's rear face
      const double half_extent = 0.5 * (4.5 * std::cos(phi) + 2.0 * std::abs(std::sin(phi)));
      const VehicleState ego{10 - 2.25 - half_extent - offset, 2.5 + 0.5 * u(rng), phi, 0, 0, 0};
      const bool want = oracle::quads_overlap(oracle::rectangle(ego.p_x, ego.p_y, phi, 4.5, 2.0),
                                              oracle::rectangle(10.0, 2.5, 0.0, 4.5, 2.0));
      CHECK(boxes_overlap(ego, 4.5, 2.0, other) == want);
    }
  }

  SUBCASE("reported speed magnitude") {
    auto scene = reset(CurriculumSpec::standard(1), 1).first;
    scene.ego = {scene.flow[0].p_x, scene.flow[0].p_y, 0, 3, 4, 0};
    const auto c = check_collision(scene);
    CHECK(c.collided);
    CHECK(c.ego_speed == 5.0);
  }
}

TEST_CASE("success predicate thresholds") {
  const VehicleState centred{50, 2.5, 0, 4, 0, 0};
  CHECK(check_success(scene_with_ego(centred)));
  CHECK_FALSE(check_success(scene_with_ego({50, -2.5, 0, 4, 0, 0})));

  // clearance 0.5 * (12 - 4.5) * 0.2 = 0.75 m, so |dx| may reach 3.0 m
  const double e = 1e-9;
  CHECK(check_success(scene_with_ego({53.0 - e, 2.5, 0, 4, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({53.0 + e, 2.5, 0, 4, 0, 0})));
  CHECK(check_success(scene_with_ego({47.0 + e, 2.5, 0, 4, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({47.0 - e, 2.5, 0, 4, 0, 0})));
  CHECK(check_success(scene_with_ego({50, 3.0 - e, 0, 4, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({50, 3.0 + e, 0, 4, 0, 0})));
  CHECK(check_success(scene_with_ego({50, 2.5, 0.1 - e, 4, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({50, 2.5, 0.1 + e, 4, 0, 0})));
  CHECK(check_success(scene_with_ego({50, 2.5, -0.1 + e, 4, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({50, 2.5, -0.1 - e, 4, 0, 0})));
  CHECK(check_success(scene_with_ego({50, 2.5, 0, 5.5 - e, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({50, 2.5, 0, 5.5 + e, 0, 0})));
  CHECK(check_success(scene_with_ego({50, 2.5, 0, 2.5 + e, 0, 0})));
  CHECK_FALSE(check_success(scene_with_ego({50, 2.5, 0, 2.5 - e, 0, 0})));
}

TEST_CASE("ego placed in the static gap succeeds at the first check") {
  EpisodeConfig cfg;
  cfg.scenario.ego_p_x_mean = 50.0;
  cfg.scenario.ego_p_x_std = 0.0;
  cfg.scenario.gap_p_x_mean = 50.0;
  cfg.scenario.gap_p_x_std = 0.0;
  cfg.scenario.ego_p_y = 2.5;
  cfg.scenario.ego_v_x = 0.0;
  DecisionVector z;
  z.x_tra = {50, 2.5, 0, 0, 0, 0};
  const auto out = run_episode(z, CurriculumSpec::standard(1), 4, cfg);
  CHECK(out.status == EpisodeStatus::Success);
  CHECK(out.t_end == doctest::Approx(cfg.mpc.dt).epsilon(1e-12));
  CHECK(out.collision_speeds.empty());
}

TEST_CASE("driving flat out into the slow vehicle ahead collides") {
  DecisionVector z;
  z.x_tra = {200, -2.5, 0, 20, 0, 0};
  z.q_max = {20, 20, 20, 20, 0, 0};
  z.t_tra = 3.0;
  const auto out = run_episode(z, CurriculumSpec::standard(2), 8, {});
  CHECK(out.status == EpisodeStatus::Collision);
  CHECK_FALSE(out.collision_speeds.empty());
  CHECK_FALSE(out.aborted);
}

TEST_CASE("episodes are deterministic across runs and threads") {
  const auto z = sensible_z();
  const EpisodeConfig cfg;
  const auto ref = run_episode(z, CurriculumSpec::standard(3), 21, cfg);
  CHECK(same_outcome(ref, run_episode(z, CurriculumSpec::standard(3), 21, cfg)));
  std::vector<EpisodeOutcome> outs(4);
  parallel_for(outs.size(), 4, [&](std::size_t i) {
    outs[i] = run_episode(z, CurriculumSpec::standard(3), 21, cfg);
  });
  for (const auto& o : outs) CHECK(same_outcome(ref, o));
}

TEST_CASE("episode invariants") {
  const auto z = sensible_z();
  const EpisodeConfig cfg;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto out = run_episode(z, CurriculumSpec::standard(2), seed, cfg);
    CHECK(out.observation == reset(CurriculumSpec::standard(2), seed).second);
    CHECK(out.collision_speeds.empty() == (out.status != EpisodeStatus::Collision));
    if (out.status == EpisodeStatus::TimeOut) {
      CHECK(out.t_end == doctest::Approx(cfg.scenario.t_max).epsilon(1e-12));
    }
    CHECK(out.t_end <= cfg.scenario.t_max + 1e-9);
    CHECK(out.steps.size() == static_cast<std::size_t>(std::lround(out.t_end / cfg.mpc.dt)) + 1);
    for (const auto& s : out.steps) CHECK(cfg.mpc.bounds.contains(s.control, 1e-12));
  }
}
