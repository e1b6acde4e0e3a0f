"""Self-training loop for an object detector with pseudo-label regeneration.

The loop trains on labelled data, pseudo-labels the unlabelled pool, then keeps
retraining on labelled + pseudo-labelled data while the held-out loss improves
by more than ``c`` and the iteration count stays within ``e``. The pseudo-label
pool is replaced, not extended, every round.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class SelfTrainError(RuntimeError):
    def __init__(self, iteration, cause):
        self.iteration = iteration
        super().__init__(f"oracle failed at iteration {iteration}: {cause!r}")


class SelfTrainConfigError(ValueError):
    pass


@dataclass
class SelfTrainConfig:
    c: float = 0.0  # convergence threshold on loss improvement
    e: int = 10  # iteration cap
    seed: int = 0

    def validate(self):
        if self.c < 0:
            raise SelfTrainConfigError(f"c must be >= 0, got {self.c}")
        if self.e < 1:
            raise SelfTrainConfigError(f"e must be >= 1, got {self.e}")
        return self


class DetectorOracle:
    """Interface for the detector being self-trained."""

    def initial(self):
        """Untrained default model."""
        raise NotImplementedError

    def train(self, labeled, pseudo):
        raise NotImplementedError

    def predict(self, model, unlabeled):
        """Pseudo-labels for ``unlabeled``, same layout as ``labeled``."""
        raise NotImplementedError

    def loss(self, model) -> float:
        raise NotImplementedError

    def count(self, pool) -> int:
        return len(pool)


@dataclass
class SelfTrainResult:
    model: object
    count: int
    iterations: int  # executions of the loop body
    log: list

    def write_log(self, path):
        with open(path, "w") as fh:
            for row in self.log:
                fh.write(json.dumps(row) + "\n")


def _call(it, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # noqa: BLE001 - re-raised with the iteration index
        raise SelfTrainError(it, exc) from exc


def self_train(oracle: DetectorOracle, labeled, unlabeled, cfg: SelfTrainConfig) -> SelfTrainResult:
    cfg.validate()
    if labeled is None or oracle.count(labeled) == 0:
        raise SelfTrainConfigError("labeled pool is empty")
    log = []
    m0 = _call(0, oracle.initial)
    prev = float(_call(0, oracle.loss, m0))
    log.append({"iter": 0, "loss": prev, "pseudo_count": 0})

    count = 1
    model = _call(1, oracle.train, labeled, None)
    pseudo = _call(1, oracle.predict, model, unlabeled)
    loss = float(_call(1, oracle.loss, model))
    log.append({"iter": 1, "loss": loss, "pseudo_count": oracle.count(pseudo)})

    iterations = 0
    while count <= cfg.e and prev - loss > cfg.c:
        count += 1
        iterations += 1
        model = _call(count, oracle.train, labeled, pseudo)
        pseudo = _call(count, oracle.predict, model, unlabeled)
        prev, loss = loss, float(_call(count, oracle.loss, model))
        log.append({"iter": count, "loss": loss, "pseudo_count": oracle.count(pseudo)})
    return SelfTrainResult(model=model, count=count, iterations=iterations, log=log)


class SyntheticDetector(DetectorOracle):
    """Nearest-centroid classifier over 2-D points from two Gaussian clusters.

    A small labelled fraction carries label-flip noise; the loss is the error
    rate on a clean held-out set. Pools are ``(points, labels)`` pairs.
    """

    def __init__(self, noise=0.0, seed=0, n=400, labeled_fraction=0.1, separation=4.0, n_test=400):
        if not 0 <= noise < 0.5:
            raise SelfTrainConfigError(f"noise must be in [0, 0.5), got {noise}")
        rng = np.random.default_rng(seed)
        self.noise = noise
        self.centres = np.array([[-separation / 2, 0.0], [separation / 2, 0.0]])

        def draw(k):
            y = rng.integers(0, 2, size=k)
            return self.centres[y] + rng.normal(size=(k, 2)), y

        x, y = draw(n)
        n_lab = max(2, int(round(labeled_fraction * n)))
        y_lab = y[:n_lab].copy()
        flip = rng.random(n_lab) < noise
        y_lab[flip] = 1 - y_lab[flip]
        self.labeled = (x[:n_lab], y_lab)
        self.unlabeled = (x[n_lab:], None)
        self.test = draw(n_test)

    def initial(self):
        return np.zeros((2, 2))

    def train(self, labeled, pseudo):
        xs, ys = [labeled[0]], [labeled[1]]
        if pseudo is not None and len(pseudo[0]):
            xs.append(pseudo[0])
            ys.append(pseudo[1])
        x, y = np.concatenate(xs), np.concatenate(ys)
        cent = np.zeros((2, 2))
        for k in (0, 1):
            if np.any(y == k):
                cent[k] = x[y == k].mean(axis=0)
        return cent

    @staticmethod
    def classify(model, x):
        d = ((x[:, None, :] - model[None]) ** 2).sum(axis=-1)
        return d.argmin(axis=1)

    def predict(self, model, unlabeled):
        x = unlabeled[0]
        return x, self.classify(model, x)

    def count(self, pool):
        return len(pool[0])

    def loss(self, model):
        x, y = self.test
        return float(np.mean(self.classify(model, x) != y))


def synthetic_detector(noise=0.0, seed=0, **kw) -> SyntheticDetector:
    return SyntheticDetector(noise=noise, seed=seed, **kw)
