"""Training and evaluation loops."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import AttackConfig, COCO_PARENTS, StreamKind, derive_stream, random_node_attack
from .autograd import SGD, ConfigError, cosine_lr
from .model import STVGCN, four_stream_fuse, softmax_scores
from .padding import PaddedInstance, pad_batch


class NumericError(ArithmeticError):
    """Loss became NaN or infinite."""


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 8
    lr: float = 0.00625
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lam: float = 0.1
    use_nb: bool = True
    rna: AttackConfig | None = None
    stream: str = "joint"
    parent_map: dict = field(default_factory=lambda: dict(COCO_PARENTS))
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        StreamKind(self.stream)
        if self.rna is not None:
            self.rna.check()
        return self


def _prepare(instances, stream, parent_map, rna=None, rng=None):
    out = []
    for inst in instances:
        if rna is not None:
            inst = random_node_attack(inst, rna, rng)
        out.append(derive_stream(inst, stream, parent_map))
    return out


def predict_logits(model: STVGCN, instances: Sequence[PaddedInstance], stream="joint", parent_map=None,
                   batch_size=32):
    parent_map = COCO_PARENTS if parent_map is None else parent_map
    rows = []
    for i in range(0, len(instances), batch_size):
        chunk = _prepare(instances[i:i + batch_size], stream, parent_map)
        rows.append(model.forward(pad_batch(chunk)).logits.data)
    return np.concatenate(rows) if rows else np.zeros((0, model.cfg.num_classes))


def accuracy(logits, labels):
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def evaluate(model, instances, stream="joint", parent_map=None):
    """Overall and per-class accuracy."""
    logits = predict_logits(model, instances, stream, parent_map)
    labels = np.array([i.label for i in instances])
    pred = logits.argmax(axis=1)
    per_class = {}
    for c in range(model.cfg.num_classes):
        sel = labels == c
        if sel.any():
            per_class[c] = float(np.mean(pred[sel] == c))
    return {"accuracy": accuracy(logits, labels), "per_class": per_class, "n": int(len(labels))}


def fused_evaluate(models_by_stream: dict, instances, parent_map=None):
    """Late fusion over streams: mean of per-stream softmax scores."""
    scores = [softmax_scores(predict_logits(m, instances, s, parent_map)) for s, m in models_by_stream.items()]
    fused = four_stream_fuse(scores)
    labels = np.array([i.label for i in instances])
    return {"accuracy": accuracy(fused, labels), "scores": fused}


def train(dataset: Sequence[PaddedInstance], model: STVGCN, cfg: TrainConfig, eval_set=None, metrics_path=None,
          log=None):
    """Mini-batch momentum SGD with a cosine learning-rate schedule.

    Returns the per-epoch metrics list. When ``metrics_path`` is given each
    epoch is also appended to it as one JSON line.
    """
    cfg.validate()
    if not dataset:
        raise ConfigError("empty training set")
    M = model.cfg.num_classes
    bad = [i.label for i in dataset if not 0 <= i.label < M]
    if bad:
        raise ConfigError(f"labels {sorted(set(bad))} outside [0, {M})")
    if model.cfg.input_norm and not model.norm_fitted:
        model.fit_input_norm(_prepare(dataset, cfg.stream, cfg.parent_map))
    rng = np.random.default_rng(cfg.seed)
    opt = SGD(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay)
    metrics = []
    fh = open(metrics_path, "w") if metrics_path else None
    try:
        for epoch in range(cfg.epochs):
            opt.lr = cosine_lr(epoch, cfg.epochs, cfg.lr)
            order = rng.permutation(len(dataset))
            ce_sum = nb_sum = 0.0
            correct = seen = 0
            for start in range(0, len(order), cfg.batch_size):
                chunk = [dataset[i] for i in order[start:start + cfg.batch_size]]
                chunk = _prepare(chunk, cfg.stream, cfg.parent_map, cfg.rna, rng)
                batch = pad_batch(chunk)
                opt.zero_grad()
                loss, rep, logits = model.losses(batch, cfg.lam, cfg.use_nb)
                if not np.isfinite(rep.total):
                    raise NumericError(f"non-finite loss {rep.total} at epoch {epoch}")
                loss.backward()
                opt.step()
                n = batch.N
                ce_sum += rep.l_ce * n
                nb_sum += rep.l_nb * n
                correct += int(np.sum(logits.argmax(axis=1) == batch.labels))
                seen += n
            ev = eval_set if eval_set is not None else dataset
            row = {
                "epoch": epoch,
                "lr": float(opt.lr),
                "loss_ce": ce_sum / seen,
                "loss_nb": nb_sum / seen,
                "train_acc": correct / seen,
                "eval_acc": evaluate(model, ev, cfg.stream, cfg.parent_map)["accuracy"],
            }
            metrics.append(row)
            if fh:
                fh.write(json.dumps(row) + "\n")
                fh.flush()
            if log:
                log(row)
    finally:
        if fh:
            fh.close()
    return metrics


def parse_attack(spec: str, dictionary, min_nodes=1, max_nodes=3):
    """``none`` -> None, ``random`` -> all classes, ``fixed:<class>`` -> that class."""
    if spec == "none":
        return None
    if spec == "random":
        return AttackConfig(categories=dictionary.vectors, min_nodes=min_nodes, max_nodes=max_nodes)
    if spec.startswith("fixed:"):
        idx = dictionary.index_of(spec.split(":", 1)[1])
        return AttackConfig(categories=dictionary.vectors[idx:idx + 1], min_nodes=min_nodes, max_nodes=max_nodes)
    raise ConfigError(f"unknown attack {spec!r}; use none, random or fixed:<class>")


def attack_eval(model, instances, attack: AttackConfig | None, seed=0, stream="joint", parent_map=None):
    """Accuracy before and after injecting attack nodes into every instance."""
    clean = evaluate(model, instances, stream, parent_map)["accuracy"]
    if attack is None:
        return {"clean_acc": clean, "attacked_acc": clean, "delta": 0.0}
    rng = np.random.default_rng(seed)
    hit = [random_node_attack(i, attack, rng) for i in instances]
    att = evaluate(model, hit, stream, parent_map)["accuracy"]
    return {"clean_acc": clean, "attacked_acc": att, "delta": att - clean}
