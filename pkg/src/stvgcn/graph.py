"""Per-frame Variable Graphs: node ordering, edge sets and mask adjacency.

Nodes are laid out as all persons' skeleton joints (person blocks of ``J``
joints each) followed by object nodes grouped by category. Skeleton nodes
are connected to every other skeleton node in both directions (across
persons too); each object node sends a one-way edge to every skeleton node.
Objects receive nothing but their own self-loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import groupby
from typing import Sequence

import numpy as np

from .attributes import ObjectAttributes

COCO_J = 17

EMPTY, SKELETON, OBJECT = 0, 1, 2
KIND_NAMES = {EMPTY: "empty", SKELETON: "skeleton", OBJECT: "object"}


class MalformedInput(ValueError):
    """Input records violate a structural precondition."""


class CapacityError(ValueError):
    """A padded layout has fewer slots than the graph needs."""


@dataclass(frozen=True)
class SkeletonNode:
    position: tuple
    score: float
    person_index: int
    joint_index: int


@dataclass(frozen=True)
class ObjectNode:
    attributes: ObjectAttributes
    category_index: int

    @property
    def score(self):
        return self.attributes.prob

    @property
    def x(self):
        return self.attributes.pos[0]


@dataclass
class VariableGraph:
    persons: list = field(default_factory=list)  # list[list[SkeletonNode]]
    object_groups: list = field(default_factory=list)  # list[list[ObjectNode]]
    frame_index: int = 0
    J: int = COCO_J

    @property
    def m(self):
        return len(self.persons)

    @property
    def objects(self):
        return [o for g in self.object_groups for o in g]

    @property
    def K_list(self):
        return [len(g) for g in self.object_groups]

    @property
    def num_skeleton(self):
        return self.m * self.J

    @property
    def num_nodes(self):
        return self.num_skeleton + sum(self.K_list)

    def nodes(self):
        """Flat node list in canonical order."""
        out = [n for p in self.persons for n in p]
        out.extend(self.objects)
        return out


@dataclass(frozen=True)
class EdgeSet:
    skeleton: frozenset  # ordered skeleton -> skeleton pairs
    object_to_skeleton: frozenset

    def __len__(self):
        return len(self.skeleton) + len(self.object_to_skeleton)


def order_nodes(persons: Sequence, objects: Sequence[ObjectNode], J: int = COCO_J, frame_index: int = 0):
    """Build a :class:`VariableGraph` in canonical order.

    ``persons`` is a sequence of person detections. Each is either a list of
    ``J`` :class:`SkeletonNode` (ordered by joint index after sorting) or a
    ``(person_index, joints)`` pair where ``joints`` holds ``J`` ``(x, y, score)``
    triples in the skeleton standard's order.

    Persons sort by ascending person index. Objects group by ascending
    category, then descending score, then ascending x.
    """
    blocks = []
    for p in persons:
        nodes = _person_nodes(p, J)
        blocks.append(nodes)
    blocks.sort(key=lambda b: b[0].person_index if b else 0)

    for o in objects:
        if o.category_index < 0:
            raise MalformedInput(f"negative category index {o.category_index}")
    objs = sorted(objects, key=lambda o: (o.category_index, -o.score, o.x))
    groups = [list(g) for _, g in groupby(objs, key=lambda o: o.category_index)]
    return VariableGraph(persons=blocks, object_groups=groups, frame_index=frame_index, J=J)


def _person_nodes(p, J):
    if isinstance(p, tuple) and len(p) == 2 and not isinstance(p[0], SkeletonNode):
        pid, joints = p
        joints = list(joints)
        if len(joints) != J:
            raise MalformedInput(f"person {pid} has {len(joints)} joints, expected {J}")
        return [
            SkeletonNode(position=(float(x), float(y)), score=float(s), person_index=int(pid), joint_index=j)
            for j, (x, y, s) in enumerate(joints)
        ]
    nodes = sorted(p, key=lambda n: n.joint_index)
    if len(nodes) != J or [n.joint_index for n in nodes] != list(range(J)):
        raise MalformedInput(f"person block has joints {[n.joint_index for n in nodes]}, expected 0..{J - 1}")
    if len({n.person_index for n in nodes}) != 1:
        raise MalformedInput("person block mixes person indices")
    return nodes


def build_edge_sets(vg: VariableGraph) -> EdgeSet:
    """Enumerate skeleton<->skeleton and object->skeleton edges over node
    positions in canonical order."""
    ns = vg.num_skeleton
    skel = range(ns)
    objs = range(ns, vg.num_nodes)
    skel_edges = frozenset((u, v) for u in skel for v in skel if u != v)
    obj_edges = frozenset((o, v) for o in objs for v in skel)
    return EdgeSet(skeleton=skel_edges, object_to_skeleton=obj_edges)


def edge_count(m: int, J: int, K_list: Sequence[int] = ()) -> int:
    s = m * J
    return s * (s - 1) + s * sum(K_list) if s else 0


def validity_masks(vg: VariableGraph, max_persons: int, max_objects: int):
    """Boolean validity and node-kind arrays over a padded slot layout of
    ``max_persons * J`` skeleton slots followed by ``max_objects`` object slots."""
    if vg.m > max_persons or len(vg.objects) > max_objects:
        raise CapacityError(
            f"graph needs {vg.m} persons/{len(vg.objects)} objects, layout has {max_persons}/{max_objects}"
        )
    J = vg.J
    n_slots = max_persons * J + max_objects
    valid = np.zeros(n_slots, dtype=bool)
    kind = np.full(n_slots, EMPTY, dtype=np.int8)
    valid[: vg.num_skeleton] = True
    kind[: vg.num_skeleton] = SKELETON
    base = max_persons * J
    k = len(vg.objects)
    valid[base:base + k] = True
    kind[base:base + k] = OBJECT
    return valid, kind


def adjacency_from_masks(node_valid, node_kind):
    """Row-normalised in-degree adjacency over slots; works on any leading
    batch axes (..., V) and returns (..., V, V) with ``A[v, u]`` the weight of
    the edge u -> v."""
    valid = np.asarray(node_valid, dtype=bool)
    kind = np.asarray(node_kind)
    skel = valid & (kind == SKELETON)
    obj = valid & (kind == OBJECT)
    # a skeleton target hears from every valid skeleton or object source
    src = (skel | obj).astype(np.float64)
    A = skel[..., :, None] * src[..., None, :]
    V = valid.shape[-1]
    eye = np.eye(V, dtype=bool)
    A = np.where(eye, valid[..., :, None].astype(np.float64), A)
    deg = A.sum(axis=-1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


def dense_adjacency(vg: VariableGraph):
    """Dense realisation of the edge sets plus self-loops, row-normalised."""
    n = vg.num_nodes
    A = np.eye(n)
    es = build_edge_sets(vg)
    for u, v in es.skeleton | es.object_to_skeleton:
        A[v, u] = 1.0
    deg = A.sum(axis=1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)
