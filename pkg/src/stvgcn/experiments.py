"""Desk-scale analogue experiments on synthetic interaction data.

Each ``run_*`` function generates a dataset for one seed, trains the needed
models and returns plain accuracy numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .augment import AttackConfig, ablate_objects, strip_objects
from .data import SynthSpec, gen_synth, to_padded
from .model import STVGCN, ModelConfig
from .train import TrainConfig, attack_eval, evaluate, parse_attack, train


@dataclass
class Recipe:
    """Small model + schedule that trains in well under a minute on one core."""

    widths: list = field(default_factory=lambda: [16, 32])
    strides: list = field(default_factory=lambda: [1, 2])
    c0: int = 16
    kernel: int = 9
    epochs: int = 30
    lr: float = 0.0125
    batch_size: int = 8
    lam: float = 0.1

    def model(self, spec: SynthSpec, seed):
        return STVGCN(ModelConfig(
            num_classes=spec.num_classes, widths=list(self.widths), strides=list(self.strides), c0=self.c0,
            kernel=self.kernel, c_ca=spec.c_ca, lam=self.lam, seed=seed,
        ))

    def train_config(self, seed, **kw):
        return TrainConfig(epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, lam=self.lam, seed=seed, **kw)


def _fit(recipe, spec, train_set, test_set, seed, **kw):
    model = recipe.model(spec, seed)
    train(train_set, model, recipe.train_config(seed, **kw), eval_set=test_set)
    return model, evaluate(model, test_set)["accuracy"]


def object_effect_spec():
    return SynthSpec(motions=2, objects=2, label_mode="both", n_train=200, n_test=80, T=32)


def run_object_effect(seed, recipe=None, spec=None):
    """Same "both" split trained with and without object nodes."""
    recipe = recipe or Recipe()
    spec = spec or object_effect_spec()
    tr, te, _ = gen_synth(spec, seed)
    tr, te = to_padded(tr, spec.c_ca), to_padded(te, spec.c_ca)
    _, with_obj = _fit(recipe, spec, tr, te, seed)
    _, without = _fit(recipe, spec, [strip_objects(i) for i in tr], [strip_objects(i) for i in te], seed)
    return {"with_objects": with_obj, "skeleton_only": without}


def rna_spec():
    # action labels; each action co-occurs with its own object class
    return SynthSpec(motions=2, objects=2, label_mode="action", object_pairing=1.0, n_train=200, n_test=80, T=32)


def run_rna_robustness(seed, recipe=None, spec=None, misleading="book"):
    """Accuracy under no/fixed/random node attacks, trained with and without RNA."""
    recipe = recipe or Recipe()
    spec = spec or rna_spec()
    tr, te, d = gen_synth(spec, seed)
    tr, te = to_padded(tr, spec.c_ca), to_padded(te, spec.c_ca)
    out = {}
    for name, rna in (("plain", None), ("rna", AttackConfig(categories=d.vectors))):
        model, _ = _fit(recipe, spec, tr, te, seed, rna=rna)
        res = {}
        for attack in ("none", f"fixed:{misleading}", "random"):
            r = attack_eval(model, te, parse_attack(attack, d), seed=seed + 1)
            res[attack.split(":")[0]] = r["attacked_acc"]
        out[name] = res
    return out


def ablation_spec():
    # object class and holding hand both carry label information
    return SynthSpec(motions=2, objects=2, holders=[9, 10], label_mode="both", n_train=320, n_test=128, T=32)


ABLATIONS = {
    "baseline": (False, False),
    "oa": (True, False),
    "ca": (False, True),
    "both": (True, True),
}


def run_oa_ca_ablation(seed, recipe=None, spec=None):
    recipe = recipe or Recipe()
    spec = spec or ablation_spec()
    tr, te, _ = gen_synth(spec, seed)
    tr, te = to_padded(tr, spec.c_ca), to_padded(te, spec.c_ca)
    out = {}
    for name, (oa, ca) in ABLATIONS.items():
        a_tr = [ablate_objects(i, oa, ca) for i in tr]
        a_te = [ablate_objects(i, oa, ca) for i in te]
        _, out[name] = _fit(recipe, spec, a_tr, a_te, seed)
    return out
