import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stvgcn.selftrain import (
    DetectorOracle, SelfTrainConfig, SelfTrainConfigError, SelfTrainError, self_train, synthetic_detector,
)


class ScriptedOracle(DetectorOracle):
    """Loss follows ``losses[i]`` for the i-th model trained (index 0 = untrained)."""

    def __init__(self, losses, fail_at=None):
        self.losses = losses
        self.trained = 0
        self.fail_at = fail_at
        self.pseudo_seen = []

    def initial(self):
        return 0

    def train(self, labeled, pseudo):
        self.trained += 1
        if self.trained == self.fail_at:
            raise RuntimeError("boom")
        self.pseudo_seen.append(pseudo)
        return self.trained

    def predict(self, model, unlabeled):
        return [f"m{model}:{u}" for u in unlabeled]

    def loss(self, model):
        return self.losses(model)


def test_constant_loss_stops_at_count_one():
    r = self_train(ScriptedOracle(lambda m: 0.5), [1], [1, 2], SelfTrainConfig(c=0.0, e=10))
    assert r.count == 1 and r.iterations == 0
    assert [row["iter"] for row in r.log] == [0, 1]


def test_always_decreasing_runs_to_cap():
    e = 7
    r = self_train(ScriptedOracle(lambda m: 1.0 / (m + 1)), [1], [1, 2, 3], SelfTrainConfig(c=0.0, e=e))
    assert r.iterations == e  # loop body executed e times
    assert r.count == e + 1  # the count <= e check fails on e + 1
    losses = [row["loss"] for row in r.log]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_threshold_c_stops_small_improvements():
    # improvements 0.5, 0.1, 0.01: c = 0.05 lets the first two through
    seq = [1.0, 0.5, 0.4, 0.39, 0.389]
    r = self_train(ScriptedOracle(lambda m: seq[m]), [1], [1], SelfTrainConfig(c=0.05, e=10))
    assert r.count == 3 and r.iterations == 2


def test_pseudo_pool_regenerated_not_accumulated():
    o = ScriptedOracle(lambda m: 1.0 / (m + 1))
    self_train(o, [1], ["a", "b"], SelfTrainConfig(e=3))
    assert o.pseudo_seen[0] is None
    for i, p in enumerate(o.pseudo_seen[1:], 1):
        assert p == [f"m{i}:a", f"m{i}:b"]


def test_oracle_failure_carries_iteration():
    with pytest.raises(SelfTrainError) as e:
        self_train(ScriptedOracle(lambda m: 1.0 / (m + 1), fail_at=3), [1], [1], SelfTrainConfig(e=5))
    assert e.value.iteration == 3


def test_config_errors():
    with pytest.raises(SelfTrainConfigError):
        self_train(ScriptedOracle(lambda m: 0), [1], [1], SelfTrainConfig(c=-0.1))
    with pytest.raises(SelfTrainConfigError):
        self_train(ScriptedOracle(lambda m: 0), [1], [1], SelfTrainConfig(e=0))
    with pytest.raises(SelfTrainConfigError):
        self_train(ScriptedOracle(lambda m: 0), [], [1], SelfTrainConfig())
    with pytest.raises(SelfTrainConfigError):
        synthetic_detector(noise=0.5)


def test_noise_free_detector_first_round():
    o = synthetic_detector(noise=0.0, seed=0, separation=10.0)
    r = self_train(o, o.labeled, o.unlabeled, SelfTrainConfig(e=5))
    assert r.log[1]["loss"] == 0.0
    assert r.log[1]["pseudo_count"] == len(o.unlabeled[0])


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.4), st.integers(0, 1000), st.floats(0.0, 0.02))
def test_synthetic_loss_decreases_until_termination(noise, seed, c):
    o = synthetic_detector(noise=noise, seed=seed)
    r = self_train(o, o.labeled, o.unlabeled, SelfTrainConfig(c=c, e=10))
    losses = [row["loss"] for row in r.log]
    # every step that let the loop continue improved by more than c
    accepted = losses[:-1]
    assert all(a - b > c for a, b in zip(accepted, accepted[1:]))
    assert r.count <= 11


def test_log_written(tmp_path):
    o = synthetic_detector(noise=0.1, seed=1)
    r = self_train(o, o.labeled, o.unlabeled, SelfTrainConfig())
    r.write_log(tmp_path / "log.ndjson")
    rows = [json.loads(x) for x in (tmp_path / "log.ndjson").read_text().splitlines()]
    assert rows == r.log and set(rows[0]) == {"iter", "loss", "pseudo_count"}
