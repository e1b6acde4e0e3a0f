"""Node padding: make node counts rectangular across frames and instances.

A slot layout has ``max_persons * J`` skeleton slots followed by a flat region
of ``max_objects`` object slots. Empty slots hold all-zero features.

Per-node channels are ``x, y, score`` followed by ``C_CA`` class-attribute
channels (zero for skeleton nodes).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .graph import EMPTY, OBJECT, SKELETON, MalformedInput, VariableGraph, validity_masks

N_ORIG = 3  # x, y, score


@dataclass(frozen=True)
class PaddedLayout:
    max_persons: int
    max_objects: int
    J: int

    @property
    def slot_count(self):
        return self.max_persons * self.J + self.max_objects

    @property
    def object_base(self):
        return self.max_persons * self.J

    def slot_roles(self):
        """Role id per slot: joint index for skeleton slots, ``J + rank`` for
        object slots. Invariant under layout growth."""
        skel = np.tile(np.arange(self.J), self.max_persons)
        return np.concatenate([skel, self.J + np.arange(self.max_objects)]).astype(np.int64)


@dataclass
class PaddedInstance:
    features: np.ndarray  # (T, S, C)
    node_valid: np.ndarray  # (T, S) bool
    node_kind: np.ndarray  # (T, S) int8
    label: int
    layout: PaddedLayout
    frame_valid: np.ndarray = None  # (T,) bool

    def __post_init__(self):
        if self.frame_valid is None:
            self.frame_valid = np.ones(self.features.shape[0], dtype=bool)

    @property
    def T(self):
        return self.features.shape[0]

    @property
    def channels(self):
        return self.features.shape[-1]

    def copy(self, **changes):
        base = dict(
            features=self.features.copy(),
            node_valid=self.node_valid.copy(),
            node_kind=self.node_kind.copy(),
            frame_valid=self.frame_valid.copy(),
        )
        base.update(changes)
        return replace(self, **base)


@dataclass
class PaddedBatch:
    features: np.ndarray  # (N, T, S, C)
    node_valid: np.ndarray  # (N, T, S)
    node_kind: np.ndarray  # (N, T, S)
    frame_valid: np.ndarray  # (N, T)
    labels: np.ndarray  # (N,)
    layout: PaddedLayout
    slot_maps: list = field(default_factory=list)  # per instance: old slot -> new slot

    @property
    def N(self):
        return self.features.shape[0]

    @property
    def slot_roles(self):
        return self.layout.slot_roles()


def node_features(vg: VariableGraph, c_ca: int):
    """(num_nodes, 3 + c_ca) features in canonical node order."""
    out = np.zeros((vg.num_nodes, N_ORIG + c_ca))
    i = 0
    for person in vg.persons:
        for n in person:
            out[i, 0:2] = n.position
            out[i, 2] = n.score
            i += 1
    for o in vg.objects:
        v = o.attributes.vector()
        if v.shape[0] != N_ORIG + c_ca:
            raise MalformedInput(f"object attribute width {v.shape[0]}, expected {N_ORIG + c_ca}")
        out[i] = v
        i += 1
    return out


def pad_frames(frames: Sequence[VariableGraph], c_ca: int, label: int = 0, layout: PaddedLayout | None = None):
    """Inter-frame padding of one instance to its own per-sequence maxima
    (or to ``layout`` if given)."""
    frames = list(frames)
    if not frames:
        raise MalformedInput("cannot pad an empty frame sequence")
    J = frames[0].J
    if any(f.J != J for f in frames):
        raise MalformedInput("frames mix skeleton standards")
    if layout is None:
        layout = PaddedLayout(
            max_persons=max(f.m for f in frames), max_objects=max(len(f.objects) for f in frames), J=J
        )
    T, S = len(frames), layout.slot_count
    feats = np.zeros((T, S, N_ORIG + c_ca))
    valid = np.zeros((T, S), dtype=bool)
    kind = np.zeros((T, S), dtype=np.int8)
    for t, f in enumerate(frames):
        valid[t], kind[t] = validity_masks(f, layout.max_persons, layout.max_objects)
        x = node_features(f, c_ca)
        ns = f.num_skeleton
        feats[t, :ns] = x[:ns]
        feats[t, layout.object_base:layout.object_base + (f.num_nodes - ns)] = x[ns:]
    return PaddedInstance(features=feats, node_valid=valid, node_kind=kind, label=int(label), layout=layout)


def slot_map(src: PaddedLayout, dst: PaddedLayout):
    """Index array mapping every slot of ``src`` into ``dst`` (region aligned)."""
    if src.J != dst.J or src.max_persons > dst.max_persons or src.max_objects > dst.max_objects:
        raise MalformedInput(f"layout {src} does not fit into {dst}")
    return np.concatenate(
        [np.arange(src.object_base), dst.object_base + np.arange(src.max_objects)]
    ).astype(np.int64)


def embed(inst: PaddedInstance, layout: PaddedLayout, T: int | None = None) -> PaddedInstance:
    """Re-pad one instance into a larger layout and/or longer time axis."""
    T = inst.T if T is None else T
    if T < inst.T:
        raise MalformedInput(f"cannot shrink T from {inst.T} to {T}")
    idx = slot_map(inst.layout, layout)
    S = layout.slot_count
    feats = np.zeros((T, S, inst.channels))
    valid = np.zeros((T, S), dtype=bool)
    kind = np.zeros((T, S), dtype=np.int8)
    fv = np.zeros(T, dtype=bool)
    feats[: inst.T, idx] = inst.features
    valid[: inst.T, idx] = inst.node_valid
    kind[: inst.T, idx] = inst.node_kind
    fv[: inst.T] = inst.frame_valid
    return PaddedInstance(features=feats, node_valid=valid, node_kind=kind, label=inst.label, layout=layout, frame_valid=fv)


def pad_batch(instances: Sequence[PaddedInstance], layout: PaddedLayout | None = None, T: int | None = None) -> PaddedBatch:
    """Intra-batch padding: region-aligned growth to batch maxima, trailing
    all-empty frames up to the longest instance."""
    instances = list(instances)
    if not instances:
        raise MalformedInput("empty batch")
    C = instances[0].channels
    if any(i.channels != C for i in instances):
        raise MalformedInput(f"mixed channel widths {sorted({i.channels for i in instances})}")
    Js = {i.layout.J for i in instances}
    if len(Js) != 1:
        raise MalformedInput(f"mixed skeleton standards J={sorted(Js)}")
    if layout is None:
        layout = PaddedLayout(
            max_persons=max(i.layout.max_persons for i in instances),
            max_objects=max(i.layout.max_objects for i in instances),
            J=Js.pop(),
        )
    T = max(i.T for i in instances) if T is None else T
    emb = [embed(i, layout, T) for i in instances]
    return PaddedBatch(
        features=np.stack([e.features for e in emb]),
        node_valid=np.stack([e.node_valid for e in emb]),
        node_kind=np.stack([e.node_kind for e in emb]),
        frame_valid=np.stack([e.frame_valid for e in emb]),
        labels=np.array([e.label for e in emb], dtype=np.int64),
        layout=layout,
        slot_maps=[slot_map(i.layout, layout) for i in instances],
    )


def unpad(batch: PaddedBatch, n: int) -> PaddedInstance:
    """Single instance view of a batch row (keeps the batch layout)."""
    return PaddedInstance(
        features=batch.features[n].copy(),
        node_valid=batch.node_valid[n].copy(),
        node_kind=batch.node_kind[n].copy(),
        label=int(batch.labels[n]),
        layout=batch.layout,
        frame_valid=batch.frame_valid[n].copy(),
    )


__all__ = [
    "EMPTY",
    "SKELETON",
    "OBJECT",
    "N_ORIG",
    "PaddedLayout",
    "PaddedInstance",
    "PaddedBatch",
    "node_features",
    "pad_frames",
    "pad_batch",
    "embed",
    "slot_map",
    "unpad",
]
