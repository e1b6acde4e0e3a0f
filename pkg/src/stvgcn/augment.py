"""Random Node Attack and joint/bone/motion stream derivation."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import OBJECT, SKELETON
from .padding import N_ORIG, PaddedInstance, PaddedLayout, embed

# COCO-17 keypoints, rooted at the nose
COCO_PARENTS = {
    0: 0, 1: 0, 2: 0, 3: 1, 4: 2, 5: 0, 6: 0, 7: 5, 8: 6,
    9: 7, 10: 8, 11: 5, 12: 6, 13: 11, 14: 12, 15: 13, 16: 14,
}


class AttackConfigError(ValueError):
    pass


class StreamKind(str, enum.Enum):
    JOINT = "joint"
    BONE = "bone"
    JOINT_MOTION = "joint_motion"
    BONE_MOTION = "bone_motion"


@dataclass
class AttackConfig:
    """Injected object nodes: count ~ U{min_nodes..max_nodes}, positions in the
    unit square, score ~ U[0, 1], class drawn uniformly from ``categories``
    (rows are class-attribute vectors)."""

    categories: np.ndarray
    min_nodes: int = 1
    max_nodes: int = 3
    position_range: tuple = (0.0, 1.0)
    prob_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        self.categories = np.atleast_2d(np.asarray(self.categories, dtype=np.float64))
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise AttackConfigError(f"need 1 <= min_nodes <= max_nodes, got {self.min_nodes}, {self.max_nodes}")

    def check(self):
        if self.categories.size == 0 or self.categories.shape[0] == 0:
            raise AttackConfigError("empty category pool")


def draw_attack(cfg: AttackConfig, rng: np.random.Generator):
    """Sample the injected nodes' feature rows, shape (k, 3 + C_CA)."""
    cfg.check()
    k = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
    lo, hi = cfg.position_range
    pos = rng.uniform(lo, hi, size=(k, 2))
    prob = rng.uniform(*cfg.prob_range, size=(k, 1))
    cls = rng.integers(0, cfg.categories.shape[0], size=k)
    return np.concatenate([pos, prob, cfg.categories[cls]], axis=1)


def inject_nodes(inst: PaddedInstance, rows: np.ndarray) -> PaddedInstance:
    """Append the same object rows to every valid frame's object region,
    growing the layout when there are not enough spare object slots."""
    k = rows.shape[0]
    if rows.shape[1] != inst.channels:
        raise AttackConfigError(f"attack rows have {rows.shape[1]} channels, instance has {inst.channels}")
    lay = inst.layout
    obj_valid = inst.node_valid[:, lay.object_base:]
    used = obj_valid.sum(axis=1)
    need = int(used.max(initial=0)) + k
    if need > lay.max_objects:
        inst = embed(inst, PaddedLayout(lay.max_persons, need, lay.J))
        lay = inst.layout
    else:
        inst = inst.copy()
    for t in np.flatnonzero(inst.frame_valid):
        start = lay.object_base + int(used[t])
        inst.features[t, start:start + k] = rows
        inst.node_valid[t, start:start + k] = True
        inst.node_kind[t, start:start + k] = OBJECT
    return inst


def random_node_attack(inst: PaddedInstance, cfg: AttackConfig, rng: np.random.Generator) -> PaddedInstance:
    return inject_nodes(inst, draw_attack(cfg, rng))


def _check_parents(parent_map, J):
    missing = [j for j in range(J) if j not in parent_map]
    if missing:
        raise AttackConfigError(f"parent_map lacks joints {missing}")


def _bone(feats, valid, kind, layout, parent_map):
    J = layout.J
    _check_parents(parent_map, J)
    out = feats.copy()
    parents = np.array([parent_map[j] for j in range(J)])
    for p in range(layout.max_persons):
        sl = slice(p * J, (p + 1) * J)
        pos = feats[:, sl, :2]
        bone = pos - pos[:, parents]
        bone[:, parents == np.arange(J)] = 0.0
        bone *= valid[:, sl, None]
        out[:, sl, :2] = bone
    return out


def _motion(feats, valid):
    out = feats.copy()
    both = valid[:-1] & valid[1:]
    d = np.zeros_like(feats[..., :2])
    d[:-1] = (feats[1:, :, :2] - feats[:-1, :, :2]) * both[..., None]
    out[..., :2] = d
    return out


def derive_stream(inst: PaddedInstance, kind, parent_map=None) -> PaddedInstance:
    """Modality view of an instance. Only position channels change; masks,
    scores and class attributes pass through."""
    kind = StreamKind(kind)
    if kind is StreamKind.JOINT:
        return inst.copy()
    feats = inst.features
    if kind in (StreamKind.BONE, StreamKind.BONE_MOTION):
        if parent_map is None:
            raise AttackConfigError("bone streams need a parent_map")
        feats = _bone(feats, inst.node_valid, inst.node_kind, inst.layout, parent_map)
    if kind in (StreamKind.JOINT_MOTION, StreamKind.BONE_MOTION):
        feats = _motion(feats, inst.node_valid)
    return inst.copy(features=feats)


def strip_objects(inst: PaddedInstance) -> PaddedInstance:
    """Drop the object region entirely (skeleton-only view)."""
    lay = inst.layout
    base = lay.object_base
    return PaddedInstance(
        features=inst.features[:, :base].copy(),
        node_valid=inst.node_valid[:, :base].copy(),
        node_kind=inst.node_kind[:, :base].copy(),
        label=inst.label,
        layout=PaddedLayout(lay.max_persons, 0, lay.J),
        frame_valid=inst.frame_valid.copy(),
    )


def ablate_objects(inst: PaddedInstance, keep_original=True, keep_class=True) -> PaddedInstance:
    """Zero object position/score channels and/or class-attribute channels.
    With neither kept the object nodes are removed."""
    if not keep_original and not keep_class:
        return strip_objects(inst)
    out = inst.copy()
    obj = out.node_kind == OBJECT
    if not keep_original:
        out.features[..., :N_ORIG][obj] = 0.0
    if not keep_class:
        out.features[..., N_ORIG:][obj] = 0.0
    return out
