# coding: utf-8
"""Building a per-frame interaction graph from skeletons and detected objects."""

# %% [markdown]
# A frame holds some people (17 COCO keypoints each) and some detected objects.
# The graph puts every person's joints first, then objects grouped by class,
# strongest detection first.

# %%
import numpy as np

from stvgcn import ClassAttributeDictionary, encode_object_node, order_nodes, build_edge_sets, edge_count
from stvgcn.graph import ObjectNode, dense_adjacency

d = ClassAttributeDictionary.from_descriptions(
    {"cup": "small white ceramic mug", "phone": "flat black rectangle", "book": "thick paper block"}, c_ca=8)

rng = np.random.default_rng(0)
persons = [(p, [tuple(rng.uniform(0, 1, 2)) + (0.9,) for _ in range(17)]) for p in range(2)]
objects = [
    ObjectNode(encode_object_node(d.index_of("cup"), (0.4, 0.6), 0.7, d), d.index_of("cup")),
    ObjectNode(encode_object_node(d.index_of("cup"), (0.2, 0.5), 0.9, d), d.index_of("cup")),
    ObjectNode(encode_object_node(d.index_of("book"), (0.8, 0.1), 0.6, d), d.index_of("book")),
]
vg = order_nodes(persons, objects)
print("persons", vg.m, "objects per class", vg.K_list, "nodes", vg.num_nodes)
print("object scores in graph order", [round(o.score, 2) for o in vg.objects])

# %% [markdown]
# Skeleton nodes are fully connected, across people too, and every object
# points at every skeleton node. The closed-form count matches the edge list.

# %%
edges = build_edge_sets(vg)
print("skeleton edges", len(edges.skeleton), "object->skeleton edges", len(edges.object_to_skeleton))
print("edge_count formula", edge_count(vg.m, 17, vg.K_list), "built", len(edges))

# %% [markdown]
# The adjacency used by the graph convolution is row-normalized with
# self-loops. Object rows carry only their self-loop, so objects feed the
# skeleton but are not smoothed by it.

# %%
A = dense_adjacency(vg)
print("row sums all one:", np.allclose(A.sum(1), 1.0))
print("object row nonzeros:", np.count_nonzero(A[-1]))
