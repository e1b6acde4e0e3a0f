"""Object-node attribute vectors and the class-attribute dictionary.

An object node carries ``pos (C_Pos) | prob (C_Prob) | class_attr (C_CA)``.
Class-attribute vectors are looked up by class index; the reserved empty
class maps to the zero vector.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EMPTY_CLASS = -1
DEFAULT_C_CA = 32


class MissingClass(KeyError):
    pass


class MalformedAttribute(ValueError):
    pass


@dataclass(frozen=True)
class ObjectAttributes:
    pos: tuple
    prob: float
    class_attr: tuple

    def vector(self):
        return np.concatenate([np.asarray(self.pos, float), [float(self.prob)], np.asarray(self.class_attr, float)])

    @property
    def dim(self):
        return len(self.pos) + 1 + len(self.class_attr)


def hash_embed(text: str, dim: int, seed: int = 0):
    """Deterministic unit-norm vector for ``text``: a stand-in for a text encoder.

    The (seed, text) pair is hashed with SHA-256 and used to seed a Gaussian
    draw, which is then L2-normalised.
    """
    if not text:
        raise MalformedAttribute("hash_embed needs non-empty text")
    if dim < 1:
        raise MalformedAttribute(f"dim must be >= 1, got {dim}")
    digest = hashlib.sha256(f"{seed}\x00{text}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class ClassAttributeDictionary:
    """Immutable name -> (index, vector) table with contiguous indices from 0."""

    def __init__(self, entries, c_ca=None):
        # entries: iterable of (name, index, vector)
        entries = sorted(entries, key=lambda e: e[1])
        if [e[1] for e in entries] != list(range(len(entries))):
            raise MalformedAttribute("class indices must be unique and contiguous from 0")
        names = [e[0] for e in entries]
        if len(set(names)) != len(names):
            raise MalformedAttribute("duplicate class names")
        if "empty" in names:
            raise MalformedAttribute('"empty" is reserved')
        vecs = [np.asarray(e[2], dtype=np.float64) for e in entries]
        if c_ca is None:
            c_ca = len(vecs[0]) if vecs else DEFAULT_C_CA
        for n, v in zip(names, vecs):
            if v.shape != (c_ca,):
                raise MalformedAttribute(f"class {n!r} vector has shape {v.shape}, expected ({c_ca},)")
        self.c_ca = c_ca
        self.names = names
        self._index = {n: i for i, n in enumerate(names)}
        self._vectors = np.array(vecs).reshape(len(vecs), c_ca)
        self._vectors.setflags(write=False)
        self.descriptions = {}

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def index_of(self, name):
        if name == "empty":
            return EMPTY_CLASS
        try:
            return self._index[name]
        except KeyError:
            raise MissingClass(f"unknown object class {name!r}") from None

    def lookup(self, class_index):
        return lookup_class_attribute(self, class_index)

    @property
    def vectors(self):
        return self._vectors

    @classmethod
    def from_descriptions(cls, descriptions, c_ca=DEFAULT_C_CA, seed=0):
        """Build from an ordered ``{name: description}`` mapping via :func:`hash_embed`."""
        items = list(descriptions.items())
        d = cls([(n, i, hash_embed(desc, c_ca, seed)) for i, (n, desc) in enumerate(items)], c_ca)
        d.descriptions = dict(items)
        return d

    @classmethod
    def from_json(cls, obj, seed=0):
        c_ca = int(obj.get("c_ca", DEFAULT_C_CA))
        entries, desc = [], {}
        for c in obj["classes"]:
            vec = c.get("vector")
            if vec is None:
                vec = hash_embed(c["description"], c_ca, seed)
            entries.append((c["name"], int(c["index"]), vec))
            if "description" in c:
                desc[c["name"]] = c["description"]
        d = cls(entries, c_ca)
        d.descriptions = desc
        return d

    @classmethod
    def load(cls, path, seed=0):
        return cls.from_json(json.loads(Path(path).read_text()), seed)

    def to_json(self, with_vectors=True):
        classes = []
        for i, n in enumerate(self.names):
            c = {"name": n, "index": i}
            if n in self.descriptions:
                c["description"] = self.descriptions[n]
            if with_vectors or n not in self.descriptions:
                c["vector"] = [float(x) for x in self._vectors[i]]
            classes.append(c)
        return {"classes": classes, "c_ca": self.c_ca}

    def save(self, path, with_vectors=True):
        Path(path).write_text(json.dumps(self.to_json(with_vectors), indent=1))


def lookup_class_attribute(d: ClassAttributeDictionary, class_index: int):
    if class_index == EMPTY_CLASS:
        return np.zeros(d.c_ca)
    if not 0 <= class_index < len(d):
        raise MissingClass(f"class index {class_index} not in dictionary of {len(d)} classes")
    return d.vectors[class_index].copy()


def encode_object_node(class_index, center, score, d: ClassAttributeDictionary) -> ObjectAttributes:
    score = float(score)
    if not 0.0 <= score <= 1.0:
        raise MalformedAttribute(f"detection score {score} outside [0, 1]")
    ca = lookup_class_attribute(d, class_index)
    return ObjectAttributes(pos=tuple(float(c) for c in center), prob=score, class_attr=tuple(ca.tolist()))
