# coding: utf-8
"""Padding variable-size sequences into batches, and the four input streams."""

# %% [markdown]
# Frames differ in how many people and objects they contain. A sequence is
# padded to a fixed slot layout (person slots, then one flat object region),
# and a batch pads every sequence to the largest layout and length.

# %%
import numpy as np

from stvgcn import ModelConfig, STVGCN, pad_batch, derive_stream
from stvgcn.augment import COCO_PARENTS
from stvgcn.data import SynthSpec, gen_synth, to_padded

spec = SynthSpec(n_train=6, n_test=2, T=10, c_ca=8)
train_set, _, d = gen_synth(spec, 0)
insts = to_padded(train_set, spec.c_ca)
short = insts[0].copy(features=insts[0].features[:6], node_valid=insts[0].node_valid[:6],
                      node_kind=insts[0].node_kind[:6], frame_valid=insts[0].frame_valid[:6])
batch = pad_batch([short] + insts[1:])
print("batch features", batch.features.shape, "layout", batch.layout)
print("valid frames of the short sequence", batch.frame_valid[0].sum())

# %% [markdown]
# Padding is neutral: a sequence scores the same alone or inside a batch.

# %%
model = STVGCN(ModelConfig(num_classes=spec.num_classes, widths=[8], strides=[1], c0=8, kernel=3, c_ca=spec.c_ca))
model.fit_input_norm(insts)
alone = model.forward(pad_batch([short])).logits.data[0]
together = model.forward(batch).logits.data[0]
print("max logit gap", np.abs(alone - together).max())

# %% [markdown]
# Bone and motion streams are derived from the joint stream. Object rows are
# never differenced.

# %%
for kind in ("joint", "bone", "joint_motion", "bone_motion"):
    s = derive_stream(insts[1], kind, COCO_PARENTS)
    print(f"{kind:13s} mean |xy| on skeleton slots {np.abs(s.features[:, :17, :2]).mean():.4f}")
