"""Pose/detection record ingestion (NDJSON) and a synthetic interaction dataset.

Instance file: one frame record per line::

    {"frame": 0, "persons": [[[x, y, score], ...J...], ...],
     "objects": [{"class": "book", "cx": 0.4, "cy": 0.6, "score": 0.9}]}

Sidecar index JSON::

    {"instances": [{"file": "train.ndjson", "start": 0, "end": 32, "label": 1}],
     "label_names": ["read", "write"]}

``start``/``end`` are 0-based line numbers, ``end`` exclusive.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attributes import ClassAttributeDictionary, MissingClass, encode_object_node
from .augment import COCO_PARENTS
from .graph import COCO_J, MalformedInput, ObjectNode, VariableGraph, order_nodes
from .padding import pad_frames


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        self.path, self.line = str(path), line
        super().__init__(f"{path}:{line}: {msg}")


class SynthConfigError(ValueError):
    pass


@dataclass
class Instance:
    frames: list  # list[VariableGraph]
    label: int


# ---------------------------------------------------------------- records

def _num(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedInput(f"{what} must be a number, got {v!r}")
    return float(v)


def parse_record(rec, d: ClassAttributeDictionary, J=COCO_J) -> VariableGraph:
    if not isinstance(rec, dict) or set(rec) - {"frame", "persons", "objects"} or "frame" not in rec:
        raise MalformedInput("record needs keys frame, persons, objects")
    persons = []
    for pid, joints in enumerate(rec.get("persons", [])):
        if not isinstance(joints, list) or len(joints) != J:
            raise MalformedInput(f"person {pid} must have {J} joints")
        trip = []
        for j in joints:
            if not isinstance(j, list) or len(j) != 3:
                raise MalformedInput(f"person {pid}: joint must be [x, y, score]")
            trip.append(tuple(_num(v, "joint value") for v in j))
        persons.append((pid, trip))
    objects = []
    for o in rec.get("objects", []):
        if not isinstance(o, dict) or set(o) != {"class", "cx", "cy", "score"}:
            raise MalformedInput(f"object must have keys class, cx, cy, score: {o!r}")
        cls = o["class"]
        idx = d.index_of(cls) if isinstance(cls, str) else int(cls)
        if isinstance(cls, int) and not 0 <= idx < len(d):
            raise MissingClass(f"unknown object class index {idx}")
        attrs = encode_object_node(idx, (_num(o["cx"], "cx"), _num(o["cy"], "cy")), _num(o["score"], "score"), d)
        objects.append(ObjectNode(attributes=attrs, category_index=idx))
    return order_nodes(persons, objects, J=J, frame_index=int(rec["frame"]))


def graph_to_record(vg: VariableGraph, d: ClassAttributeDictionary):
    persons = [[[n.position[0], n.position[1], n.score] for n in p] for p in vg.persons]
    objects = [
        {"class": d.names[o.category_index], "cx": o.attributes.pos[0], "cy": o.attributes.pos[1],
         "score": o.attributes.prob}
        for o in vg.objects
    ]
    return {"frame": vg.frame_index, "persons": persons, "objects": objects}


def dumps_canonical(rec):
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def load_instances(index_path, d: ClassAttributeDictionary, J=COCO_J):
    """Read the index and its NDJSON files into :class:`Instance` objects."""
    index_path = Path(index_path)
    try:
        index = json.loads(index_path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(index_path, e.lineno, e.msg) from None
    cache = {}
    out = []
    for entry in index["instances"]:
        f = index_path.parent / entry["file"]
        if f not in cache:
            cache[f] = _read_ndjson(f, d, J)
        frames = cache[f][entry["start"]:entry["end"]]
        if not frames:
            raise ParseError(f, entry["start"] + 1, "instance has no frames")
        out.append(Instance(frames=frames, label=int(entry["label"])))
    return out, list(index.get("label_names", []))


def _read_ndjson(path, d, J):
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                raise ParseError(path, lineno, "blank line")
            try:
                graphs.append(parse_record(json.loads(line), d, J))
            except json.JSONDecodeError as e:
                raise ParseError(path, lineno, f"invalid JSON: {e.msg}") from None
            except (MalformedInput, KeyError, TypeError, ValueError) as e:
                if isinstance(e, MissingClass):
                    raise MissingClass(f"{path}:{lineno}: {e.args[0]}") from None
                raise ParseError(path, lineno, str(e)) from None
    return graphs


def write_instances(instances, out_dir, d: ClassAttributeDictionary, label_names=(), stem="instances"):
    """Write canonical NDJSON plus the index; returns the index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = out_dir / f"{stem}.ndjson"
    entries, line = [], 0
    with open(data, "w") as fh:
        for inst in instances:
            for vg in inst.frames:
                fh.write(dumps_canonical(graph_to_record(vg, d)) + "\n")
            entries.append({"file": data.name, "start": line, "end": line + len(inst.frames), "label": inst.label})
            line += len(inst.frames)
    index = out_dir / f"{stem}.index.json"
    index.write_text(json.dumps({"instances": entries, "label_names": list(label_names)}, indent=1))
    return index


def to_padded(instances, c_ca):
    return [pad_frames(i.frames, c_ca, i.label) for i in instances]


# ---------------------------------------------------------------- synthetic data

# Upright COCO-17 figure in a unit frame, roughly 0.6 tall.
BASE_POSE = np.array([
    [0.50, 0.22], [0.48, 0.20], [0.52, 0.20], [0.46, 0.21], [0.54, 0.21],
    [0.42, 0.32], [0.58, 0.32], [0.38, 0.44], [0.62, 0.44], [0.36, 0.55],
    [0.64, 0.55], [0.45, 0.56], [0.55, 0.56], [0.45, 0.70], [0.55, 0.70],
    [0.45, 0.83], [0.55, 0.83],
])
# how strongly each joint follows the oscillation; arms move most
JOINT_GAIN = np.array([0.3] * 5 + [0.5, 0.5, 0.8, 0.8, 1.0, 1.0] + [0.3] * 6)

DEFAULT_OBJECTS = {
    "book": "a rectangular paper book, medium size, usually brown or white",
    "pen": "a thin long writing pen, small, usually black or blue",
    "cup": "a round ceramic cup, small, usually white",
    "phone": "a flat rectangular phone, small, usually black",
    "bottle": "a tall transparent plastic bottle, medium size",
    "wrench": "a long metal wrench, medium size, silver",
}


@dataclass
class SynthSpec:
    """Synthetic dataset recipe.

    Motion class ``c`` oscillates the body vertically at ``cycles[c]`` cycles
    per sequence. Each instance holds one object tracking a holder joint.
    ``label_mode``: "action" (label = motion), "object" (label = object
    class) or "both" (label = (motion, object[, holder]) combination).
    ``object_pairing`` is the probability that, outside "both"/"object"
    modes, the object class equals ``motion % objects``.
    """

    motions: int = 2
    objects: int = 2
    T: int = 32
    J: int = COCO_J
    label_mode: str = "both"
    n_train: int = 200
    n_test: int = 80
    label_noise: float = 0.0
    position_noise: float = 0.005
    object_jitter: float = 0.01
    amplitude: float = 0.15
    cycles: list = None
    holders: list = field(default_factory=lambda: [10])
    object_pairing: float = 0.0
    c_ca: int = 32
    object_names: list = None

    def validate(self):
        if self.motions < 1 or self.objects < 1:
            raise SynthConfigError("need at least one motion and one object class")
        if self.label_mode not in ("action", "object", "both"):
            raise SynthConfigError(f"unknown label mode {self.label_mode!r}")
        if self.J != COCO_J:
            raise SynthConfigError("synthetic generator uses the COCO-17 skeleton")
        if not 0 <= self.label_noise < 1:
            raise SynthConfigError("label_noise must be in [0, 1)")
        if self.T < 2:
            raise SynthConfigError("T must be >= 2")
        if self.n_train < 1:
            raise SynthConfigError("n_train must be >= 1")
        if not self.holders:
            raise SynthConfigError("need at least one holder joint")
        names = self.object_names or list(DEFAULT_OBJECTS)
        if self.objects > len(names):
            raise SynthConfigError(f"only {len(names)} object names available")
        return self

    @property
    def cycle_list(self):
        return self.cycles if self.cycles is not None else [1 + 2 * c for c in range(self.motions)]

    @property
    def num_classes(self):
        if self.label_mode == "action":
            return self.motions
        if self.label_mode == "object":
            return self.objects
        return self.motions * self.objects * len(self.holders)

    def label_names(self):
        objs = self.names()
        if self.label_mode == "action":
            return [f"motion{c}" for c in range(self.motions)]
        if self.label_mode == "object":
            return objs
        out = []
        for m in range(self.motions):
            for o in range(self.objects):
                for h in self.holders:
                    out.append(f"motion{m}+{objs[o]}" + (f"@j{h}" if len(self.holders) > 1 else ""))
        return out

    def names(self):
        return (self.object_names or list(DEFAULT_OBJECTS))[: self.objects]

    def dictionary(self, seed=0):
        descs = {n: DEFAULT_OBJECTS.get(n, n) for n in self.names()}
        return ClassAttributeDictionary.from_descriptions(descs, self.c_ca, seed)


def _factors(spec: SynthSpec, n, rng):
    """Balanced (motion, object, holder) triples and their labels."""
    H = len(spec.holders)
    if spec.label_mode == "both":
        combos = [(m, o, h) for m in range(spec.motions) for o in range(spec.objects) for h in range(H)]
        picks = [combos[i % len(combos)] for i in range(n)]
        labels = [(m * spec.objects + o) * H + h for m, o, h in picks]
    elif spec.label_mode == "object":
        picks = [(int(rng.integers(spec.motions)), i % spec.objects, int(rng.integers(H))) for i in range(n)]
        labels = [o for _, o, _ in picks]
    else:
        picks = []
        for i in range(n):
            m = i % spec.motions
            o = m % spec.objects if rng.random() < spec.object_pairing else int(rng.integers(spec.objects))
            picks.append((m, o, int(rng.integers(H))))
        labels = [m for m, _, _ in picks]
    return picks, labels


def _sequence(spec: SynthSpec, motion, obj, holder, rng, frame0=0):
    T = spec.T
    t = np.arange(T)
    cyc = spec.cycle_list[motion]
    phase = rng.uniform(0, 2 * np.pi)
    amp = spec.amplitude * rng.uniform(0.8, 1.2)
    shift = rng.uniform(-0.08, 0.08, size=2)
    wave = amp * np.sin(2 * np.pi * cyc * t / T + phase)  # (T,)
    pose = BASE_POSE[None] + shift[None, None]
    pose = np.repeat(pose, T, axis=0)
    pose[:, :, 1] += wave[:, None] * JOINT_GAIN[None]
    pose += rng.normal(0, spec.position_noise, size=pose.shape)
    pose = np.clip(pose, 0.0, 1.0)
    # confidences drift slowly around a per-joint level
    scores = np.clip(rng.uniform(0.7, 1.0, size=(1, spec.J)) + rng.normal(0, 0.01, size=(T, spec.J)), 0, 1)
    hj = spec.holders[holder]
    offset = rng.uniform(-0.02, 0.02, size=2)
    centre = pose[:, hj] + offset + rng.normal(0, spec.object_jitter, size=(T, 2))
    centre = np.clip(centre, 0.0, 1.0)
    oscore = rng.uniform(0.6, 1.0)
    frames = []
    for k in range(T):
        joints = [(pose[k, j, 0], pose[k, j, 1], scores[k, j]) for j in range(spec.J)]
        frames.append({"persons": [(0, joints)], "object": (obj, centre[k], oscore)})
    return frames


def gen_synth(spec: SynthSpec, seed=0):
    """Generate (train, test, dictionary) for ``spec``; deterministic in seed."""
    spec.validate()
    d = spec.dictionary()
    rng = np.random.default_rng(seed)
    out = []
    for n in (spec.n_train, spec.n_test):
        picks, labels = _factors(spec, n, rng)
        order = rng.permutation(n)
        insts = []
        for i in order:
            m, o, h = picks[i]
            label = labels[i]
            if spec.label_noise and rng.random() < spec.label_noise:
                label = int(rng.integers(spec.num_classes))
            raw = _sequence(spec, m, o, h, rng)
            graphs = []
            for k, fr in enumerate(raw):
                cls, c, s = fr["object"]
                objs = [ObjectNode(attributes=encode_object_node(cls, c, s, d), category_index=cls)]
                graphs.append(order_nodes(fr["persons"], objs, J=spec.J, frame_index=k))
            insts.append(Instance(frames=graphs, label=int(label)))
        out.append(insts)
    return out[0], out[1], d


def default_parent_map():
    return dict(COCO_PARENTS)
