import math
from pathlib import Path

import pytest

import lcmpc

DEFAULT = Path(__file__).resolve().parents[2] / "configs" / "default.ini"
GAP = [50, 2.5, 0, 2, 0, 0, 1, 1, 1, 1, 1, 1, 2]


@pytest.fixture
def config():
    return lcmpc.Config.load(str(DEFAULT))


def test_coasting_step():
    x = lcmpc.step([0, 0, 0, 10, 0, 0], 0.0, 0.0, 0.1)
    assert x == [1.0, 0, 0, 10, 0, 0]


def test_steering_is_mirror_symmetric():
    a = lcmpc.step([0, 0.5, 0.1, 8, 0.2, 0.1], 1.0, 0.2)
    b = lcmpc.step([0, -0.5, -0.1, 8, -0.2, -0.1], 1.0, -0.2)
    for i, sign in enumerate([1, -1, -1, 1, -1, -1]):
        assert math.isclose(a[i], sign * b[i], rel_tol=0, abs_tol=1e-12)


def test_config_round_trip(config):
    again = lcmpc.Config.parse(config.dump())
    assert again.dump() == config.dump()
    assert "mpc.horizon" in lcmpc.config_keys()


def test_unknown_override_is_rejected(config):
    with pytest.raises(lcmpc.ConfigError, match="trainer.nope"):
        config.set("trainer.nope=1")


def test_plan_at_goal_costs_nothing(config):
    out = lcmpc.plan(config, [40, 2.5, 0, 0, 0, 0], [0, 0], [10, 0, 0, 3, 0, 0] + [0] * 6 + [1], 40, 0)
    assert out["cost"] <= 1e-6
    assert len(out["states"]) == len(out["controls"]) + 1


def test_episode_is_deterministic(config):
    a = lcmpc.run_episode(config, GAP, 2, 7)
    b = lcmpc.run_episode(config, GAP, 2, 7)
    assert a == b
    assert a["status"] in {"success", "collision", "timeout"}
    assert a["steps"] == len(a["ego"])


def test_policy_decides_and_round_trips(tmp_path):
    p = lcmpc.Policy.init(3)
    z = p.decide([30, -2.5, 0, 1.5, 50, 2.5, 0, 0, 0, 0])
    assert len(z) == len(lcmpc.decision_names()) == 13
    path = tmp_path / "p.json"
    p.save(str(path))
    assert lcmpc.Policy.load(str(path)) == p


def test_short_training_and_evaluation(config):
    config.set("trainer.schedule=1:2,2:1")
    config.set("trainer.norm_samples=50")
    config.set("eval.trials=2")
    config.set("eval.curriculum=2")
    rows, policy = lcmpc.train(config)
    assert [int(r["curriculum"]) for r in rows] == [1, 1, 2]
    assert float(rows[0]["lr"]) == lcmpc.learning_rate(config, 0)
    report = lcmpc.evaluate(policy, config)
    assert report["trials"] == 2
    assert report == lcmpc.evaluate(policy, config)
