import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stvgcn.attributes import ObjectAttributes
from stvgcn.graph import (
    OBJECT, SKELETON, CapacityError, MalformedInput, ObjectNode, SkeletonNode, adjacency_from_masks,
    build_edge_sets, dense_adjacency, edge_count, order_nodes, validity_masks,
)

from conftest import random_graph


def obj(cat, score, x):
    return ObjectNode(ObjectAttributes(pos=(x, 0.5), prob=score, class_attr=()), cat)


def test_objects_group_by_category_then_score_then_x():
    objs = [obj(1, 0.5, 0.2), obj(0, 0.3, 0.9), obj(0, 0.9, 0.5), obj(1, 0.5, 0.1), obj(0, 0.3, 0.1)]
    vg = order_nodes([], objs, J=17)
    got = [(o.category_index, o.score, o.x) for o in vg.objects]
    assert got == [(0, 0.9, 0.5), (0, 0.3, 0.1), (0, 0.3, 0.9), (1, 0.5, 0.1), (1, 0.5, 0.2)]
    assert vg.K_list == [3, 2]


def test_persons_sorted_and_joints_in_order():
    a = [SkeletonNode((0.1, 0.2), 0.9, 5, j) for j in range(4)][::-1]
    b = [(0.3, 0.3, 0.5)] * 4
    vg = order_nodes([a, (2, b)], [], J=4)
    assert [p[0].person_index for p in vg.persons] == [2, 5]
    assert [n.joint_index for n in vg.persons[1]] == [0, 1, 2, 3]
    assert vg.num_nodes == 8


def test_wrong_joint_count_rejected():
    with pytest.raises(MalformedInput):
        order_nodes([(0, [(0, 0, 1)] * 16)], [], J=17)


def test_negative_category_rejected():
    with pytest.raises(MalformedInput):
        order_nodes([], [obj(-1, 0.5, 0.5)])


def test_one_person_one_object_has_289_edges():
    vg = random_graph(np.random.default_rng(0), 1, [1])
    assert len(build_edge_sets(vg)) == 289 == 17 * 16 + 17
    assert edge_count(1, 17, [1]) == 289


def test_objects_only_graph_has_no_edges():
    assert edge_count(0, 17, [3, 2]) == 0
    vg = random_graph(np.random.default_rng(0), 0, [2])
    assert len(build_edge_sets(vg)) == 0


def test_object_edges_point_to_skeleton_only():
    vg = random_graph(np.random.default_rng(1), 2, [2, 1], J=5)
    es = build_edge_sets(vg)
    ns = vg.num_skeleton
    assert all(u >= ns and v < ns for u, v in es.object_to_skeleton)
    assert all(u < ns and v < ns and u != v for u, v in es.skeleton)
    # cross-person skeleton edges are present
    assert (0, 5) in es.skeleton and (5, 0) in es.skeleton


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 3), st.integers(1, 8), st.lists(st.integers(0, 4), max_size=4))
def test_edge_count_matches_enumeration(m, J, k_list):
    vg = random_graph(np.random.default_rng(0), m, k_list, J=J)
    assert len(build_edge_sets(vg)) == edge_count(m, J, [k for k in k_list if k])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.integers(1, 6), st.lists(st.integers(0, 3), max_size=3), st.integers(0, 2),
       st.integers(0, 3))
def test_mask_adjacency_matches_dense_oracle(m, J, k_list, extra_p, extra_o):
    vg = random_graph(np.random.default_rng(2), m, k_list, J=J)
    n_obj = len(vg.objects)
    valid, kind = validity_masks(vg, m + extra_p, n_obj + extra_o)
    A = adjacency_from_masks(valid, kind)
    idx = np.flatnonzero(valid)
    np.testing.assert_allclose(A[np.ix_(idx, idx)], dense_adjacency(vg), atol=1e-12)
    # padded rows and columns are zero
    pad = np.flatnonzero(~valid)
    assert np.all(A[pad] == 0) and np.all(A[:, pad] == 0)
    # real rows sum to one
    np.testing.assert_allclose(A[idx].sum(axis=1), 1.0)


def test_object_rows_hold_only_self_loop():
    vg = random_graph(np.random.default_rng(3), 1, [2], J=4)
    valid, kind = validity_masks(vg, 1, 2)
    A = adjacency_from_masks(valid, kind)
    for v in np.flatnonzero(kind == OBJECT):
        row = np.zeros(len(valid))
        row[v] = 1
        np.testing.assert_array_equal(A[v], row)
    assert np.all(kind[:4] == SKELETON)


def test_capacity_error():
    vg = random_graph(np.random.default_rng(0), 2, [1], J=3)
    with pytest.raises(CapacityError):
        validity_masks(vg, 1, 1)


def test_adjacency_batched_leading_axes():
    rng = np.random.default_rng(4)
    valid = rng.random((2, 3, 6)) < 0.7
    kind = np.where(valid, rng.integers(1, 3, size=(2, 3, 6)), 0)
    A = adjacency_from_masks(valid, kind)
    for i in range(2):
        for t in range(3):
            np.testing.assert_array_equal(A[i, t], adjacency_from_masks(valid[i, t], kind[i, t]))
