# coding: utf-8
"""Pseudo-label self-training on a toy two-cluster detector."""

# %% [markdown]
# Only a tenth of the points are labeled, and some of those labels are
# flipped. Each round retrains on the labeled points plus fresh pseudo-labels
# and continues while held-out error improves by more than ``c``.

# %%
from stvgcn.selftrain import SelfTrainConfig, self_train, synthetic_detector

for noise in (0.0, 0.2, 0.4):
    o = synthetic_detector(noise=noise, seed=7)
    r = self_train(o, o.labeled, o.unlabeled, SelfTrainConfig(c=0.0, e=10))
    losses = " ".join(f"{row['loss']:.3f}" for row in r.log)
    print(f"noise {noise}: count {r.count}, rounds {r.iterations}, losses {losses}")
