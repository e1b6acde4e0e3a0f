"""ST-VGCN network over padded Variable Graph batches.

Pipeline: class-attribute fusion -> [graph conv -> temporal conv] blocks ->
masked temporal mean -> weighted node pooling -> affine classifier.

Internal feature layout is (N, T, V, C): batch, time, node slot, channel.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import ConfigError, ShapeError, Tensor
from .graph import OBJECT, SKELETON, adjacency_from_masks
from .padding import N_ORIG, PaddedBatch


class DegenerateInstance(ValueError):
    """An instance has no valid node to pool over."""


@dataclass
class ModelConfig:
    num_classes: int
    widths: list = field(default_factory=lambda: [64, 64, 128, 256])
    strides: list = field(default_factory=lambda: [1, 1, 2, 2])
    kernel: int = 9
    c0: int = 64
    c_ca: int = 32
    lam: float = 0.1
    nb_reduction: str = "mean"
    use_bias: bool = False
    max_object_roles: int = 16
    J: int = 17
    init_gain: float = 6 ** 0.5
    input_norm: bool = True
    seed: int = 0

    def validate(self):
        if not self.widths:
            raise ConfigError("widths must be non-empty")
        if len(self.strides) != len(self.widths):
            raise ConfigError(f"{len(self.widths)} widths but {len(self.strides)} strides")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"temporal kernel must be odd, got {self.kernel}")
        if any(s < 1 for s in self.strides):
            raise ConfigError(f"strides must be >= 1, got {self.strides}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.nb_reduction not in ("mean", "sum"):
            raise ConfigError(f"nb_reduction must be 'mean' or 'sum', got {self.nb_reduction!r}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.use_bias:
            warnings.warn("use_bias=True: padded slots no longer stay exactly zero", stacklevel=2)
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class LossReport:
    l_ce: float
    l_nb: float
    total: float
    s_sn: np.ndarray
    s_on: np.ndarray


# ---------------------------------------------------------------- building blocks

def caf_fuse(original, class_attr, w_orig, w_ca, b_orig=None):
    """Class attribute fusion: ``original @ w_orig (+ b) + class_attr @ w_ca``.

    The class-attribute branch is bias-free so nodes with a zero attribute
    vector (skeleton joints, padding) pass through the original branch alone.
    """
    original, class_attr = ag.as_tensor(original), ag.as_tensor(class_attr)
    if original.shape[-1] != w_orig.shape[0] or class_attr.shape[-1] != w_ca.shape[0]:
        raise ShapeError("caf_fuse", (w_orig.shape[0], w_ca.shape[0]), (original.shape[-1], class_attr.shape[-1]))
    h = ag.matmul(original, w_orig)
    if b_orig is not None:
        h = ag.add_bias(h, b_orig)
    return ag.add(h, ag.matmul(class_attr, w_ca))


def gcn_spatial(x, adjacency, weight, bias=None):
    """``ReLU(A @ x @ W)`` per (instance, frame); A is (N, T, V, V)."""
    x = ag.as_tensor(x)
    if adjacency.shape[:-1] != x.shape[:-1] or adjacency.shape[-1] != x.shape[-2]:
        raise ShapeError("gcn_spatial", x.shape[:-1] + (x.shape[-2],), adjacency.shape)
    h = ag.matmul(ag.matmul(Tensor(adjacency), x), weight)
    if bias is not None:
        h = ag.add_bias(h, bias)
    return ag.relu(h)


def tcn_temporal(x, kernel, stride, valid, bias=None, activation=True):
    """Masked temporal convolution (+ ReLU). Returns (out, out_valid)."""
    out, out_valid = ag.masked_temporal_conv(x, kernel, stride, valid)
    if bias is not None:
        out = ag.add_bias(out, bias)
    if activation:
        out = ag.relu(out)
    return out, out_valid


def wnpool(x, weights, valid):
    """Weighted node pooling ``Y[n, c] = sum_v X[n, c, v] W[v] / V_real(n)``.

    x: (N, C, V); weights: (V,) or (N, V) tensor; valid: (N, V) booleans.
    Invalid slots are excluded and ``V_real`` counts valid slots only.
    """
    x = ag.as_tensor(x)
    weights = ag.as_tensor(weights)
    valid = np.asarray(valid, dtype=bool)
    N, C, V = x.shape
    if valid.shape != (N, V):
        raise ShapeError("wnpool", (N, V), valid.shape)
    v_real = valid.sum(axis=1)
    if np.any(v_real == 0):
        raise DegenerateInstance(f"instances {np.flatnonzero(v_real == 0).tolist()} have no valid nodes")
    if weights.shape == (V,):
        weights = ag.matmul(Tensor(np.ones((N, 1))), ag.reshape(weights, (1, V)))
    elif weights.shape != (N, V):
        raise ShapeError("wnpool", (V,), weights.shape)
    w = ag.mul_const(weights, valid / v_real[:, None])
    y = ag.matmul(x, ag.reshape(w, (N, V, 1)))
    return ag.reshape(y, (N, C))


def node_sums(features, node_valid, node_kind, reduction="mean"):
    """Per-instance (S_sn, S_on) tensors over (N, T, V, C) features.

    ``reduction="sum"`` sums activations over valid slots, time and channels;
    ``"mean"`` divides each sum by its element count, i.e. the average channel
    value per node kind.
    """
    features = ag.as_tensor(features)
    valid = np.asarray(node_valid, dtype=bool)
    kind = np.asarray(node_kind)
    skel = (valid & (kind == SKELETON)).astype(np.float64)
    obj = (valid & (kind == OBJECT)).astype(np.float64)
    s_sn = ag.sum_(ag.mul_const(features, skel), axis=(1, 2, 3))
    s_on = ag.sum_(ag.mul_const(features, obj), axis=(1, 2, 3))
    if reduction == "mean":
        C = features.shape[-1]
        s_sn = ag.mul_const(s_sn, 1.0 / np.maximum(skel.sum(axis=(1, 2)) * C, 1))
        s_on = ag.mul_const(s_on, 1.0 / np.maximum(obj.sum(axis=(1, 2)) * C, 1))
    elif reduction != "sum":
        raise ConfigError(f"unknown reduction {reduction!r}")
    return s_sn, s_on


def balance_from_sums(s_sn, s_on):
    """Batch mean of ``|log(S_on / S_sn)|``, 0 for instances where either is 0."""
    s_sn, s_on = ag.as_tensor(s_sn), ag.as_tensor(s_on)
    N = s_sn.shape[0]
    live = np.flatnonzero((s_sn.data != 0) & (s_on.data != 0))
    if live.size == 0:
        return Tensor(0.0)
    r = ag.sub(ag.log(ag.slice_(s_on, live)), ag.log(ag.slice_(s_sn, live)))
    return ag.mul(ag.sum_(ag.abs_(r)), 1.0 / N)


def node_balance_loss(features, node_valid, node_kind, reduction="mean"):
    """Node balance loss on non-negative (post-ReLU) block features.

    Returns (loss, s_sn, s_on) with the per-instance sums as plain arrays.
    """
    s_sn, s_on = node_sums(features, node_valid, node_kind, reduction)
    loss = balance_from_sums(s_sn, s_on)
    return loss, s_sn.data.copy(), s_on.data.copy()


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    logits = ag.as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    N, M = logits.shape
    if labels.shape != (N,):
        raise ShapeError("cross_entropy", (N,), labels.shape)
    if np.any((labels < 0) | (labels >= M)):
        raise ValueError(f"labels outside [0, {M}): {labels[(labels < 0) | (labels >= M)].tolist()}")
    nll = ag.take_along_last(ag.log_softmax(logits), labels)
    return ag.mul(ag.sum_(nll), -1.0 / N)


def total_loss(l_ce, l_nb, lam):
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    return ag.add(l_ce, ag.mul(l_nb, float(lam)))


def softmax_scores(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def four_stream_fuse(scores):
    """Unweighted mean of per-stream softmax score arrays."""
    scores = [np.asarray(s, dtype=np.float64) for s in scores]
    if not scores:
        raise ShapeError("four_stream_fuse", "at least one stream", 0)
    for s in scores[1:]:
        if s.shape != scores[0].shape:
            raise ShapeError("four_stream_fuse", scores[0].shape, s.shape)
    return np.mean(scores, axis=0)


# ---------------------------------------------------------------- model

@dataclass
class ForwardResult:
    logits: Tensor
    final_features: Tensor  # (N, T', V, C) post-ReLU
    final_valid: np.ndarray  # (N, T', V)
    final_kind: np.ndarray
    block_outputs: list


class STVGCN:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg.validate()
        rng = np.random.default_rng(cfg.seed)
        self.params: dict[str, Tensor] = {}

        def uniform(name, shape, fan_in):
            bound = cfg.init_gain * np.sqrt(1.0 / fan_in)
            self.params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)

        def zeros(name, shape):
            self.params[name] = Tensor(np.zeros(shape), requires_grad=True, name=name)

        uniform("caf.w_orig", (N_ORIG, cfg.c0), N_ORIG)
        uniform("caf.w_ca", (cfg.c_ca, cfg.c0), cfg.c_ca)
        if cfg.use_bias:
            zeros("caf.b_orig", (cfg.c0,))
        cin = cfg.c0
        for i, cout in enumerate(cfg.widths):
            uniform(f"block{i}.gcn", (cin, cout), cin)
            uniform(f"block{i}.tcn", (cfg.kernel, cout, cout), cfg.kernel * cout)
            if cfg.use_bias:
                zeros(f"block{i}.gcn_b", (cout,))
                zeros(f"block{i}.tcn_b", (cout,))
            cin = cout
        self.params["wnpool"] = Tensor(np.ones(cfg.J + cfg.max_object_roles), requires_grad=True, name="wnpool")
        uniform("fc.w", (cin, cfg.num_classes), cin)
        uniform("fc.b", (cfg.num_classes,), cin)
        # frozen per-channel statistics for the x, y, score channels
        self.buffers = {"norm.mean": np.zeros(N_ORIG), "norm.std": np.ones(N_ORIG)}
        self.norm_fitted = False

    def fit_input_norm(self, instances):
        """Set the input standardisation from valid nodes of ``instances``."""
        rows = [i.features[i.node_valid][:, :N_ORIG] for i in instances]
        x = np.concatenate(rows) if rows else np.zeros((0, N_ORIG))
        if len(x) == 0:
            return
        std = x.std(axis=0)
        self.buffers["norm.mean"] = x.mean(axis=0)
        self.buffers["norm.std"] = np.where(std > 1e-8, std, 1.0)
        self.norm_fitted = True

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        out = {k: v.data.copy() for k, v in self.params.items()}
        out.update({k: v.copy() for k, v in self.buffers.items()})
        return out

    def load_state_dict(self, state):
        state = dict(state)
        for k in self.buffers:
            if k in state:
                self.buffers[k] = np.array(state.pop(k), dtype=np.float64)
                self.norm_fitted = True
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ShapeError(f"load_state_dict[{k}]", self.params[k].shape, v.shape)
            self.params[k].data = np.array(v, dtype=np.float64)
            self.params[k].zero_grad()

    def save(self, path):
        ag.save_checkpoint(path, self.state_dict())

    def load(self, path):
        self.load_state_dict(ag.load_checkpoint(path))
        return self

    def forward(self, batch: PaddedBatch) -> ForwardResult:
        cfg, P = self.cfg, self.params
        x = batch.features
        if x.shape[-1] != N_ORIG + cfg.c_ca:
            raise ShapeError("forward", (..., N_ORIG + cfg.c_ca), x.shape)
        roles = batch.slot_roles
        if roles.max(initial=0) >= P["wnpool"].shape[0]:
            raise ShapeError("forward: object slots exceed max_object_roles", P["wnpool"].shape[0], int(roles.max()) + 1)
        valid = batch.node_valid
        kind = batch.node_kind
        orig = x[..., :N_ORIG]
        if cfg.input_norm:
            orig = (orig - self.buffers["norm.mean"]) / self.buffers["norm.std"]
        # empty slots stay exactly zero
        orig = orig * valid[..., None]
        ca = x[..., N_ORIG:] * valid[..., None]
        h = caf_fuse(orig, ca, P["caf.w_orig"], P["caf.w_ca"], P.get("caf.b_orig"))
        outs = []
        for i, stride in enumerate(cfg.strides):
            A = adjacency_from_masks(valid, kind)
            h = gcn_spatial(h, A, P[f"block{i}.gcn"], P.get(f"block{i}.gcn_b"))
            h, valid = tcn_temporal(h, P[f"block{i}.tcn"], stride, valid, P.get(f"block{i}.tcn_b"))
            starts = np.arange(valid.shape[1]) * stride
            kind = kind[:, starts]
            outs.append(h)
        N, Tf, V, C = h.shape
        frame_valid = batch.frame_valid
        for s in cfg.strides:
            frame_valid = frame_valid[:, ::s]
        n_frames = np.maximum(frame_valid.sum(axis=1), 1)
        pooled_t = ag.mul_const(ag.sum_(h, axis=1), np.broadcast_to((1.0 / n_frames)[:, None], (N, V)))
        slot_valid = valid.any(axis=1)
        w_slot = ag.slice_(P["wnpool"], roles)
        y = wnpool(ag.transpose(pooled_t, (0, 2, 1)), w_slot, slot_valid)
        logits = ag.add_bias(ag.matmul(y, P["fc.w"]), P["fc.b"])
        return ForwardResult(logits=logits, final_features=h, final_valid=valid, final_kind=kind, block_outputs=outs)

    __call__ = forward

    def losses(self, batch: PaddedBatch, lam=None, use_nb=True):
        """Forward pass plus (total loss tensor, LossReport, logits)."""
        lam = self.cfg.lam if lam is None else lam
        fr = self.forward(batch)
        l_ce = cross_entropy(fr.logits, batch.labels)
        l_nb, s_sn, s_on = node_balance_loss(fr.final_features, fr.final_valid, fr.final_kind, self.cfg.nb_reduction)
        total = total_loss(l_ce, l_nb, lam) if use_nb else l_ce
        rep = LossReport(l_ce=l_ce.item(), l_nb=l_nb.item(), total=total.item(), s_sn=s_sn, s_on=s_on)
        return total, rep, fr.logits.data
