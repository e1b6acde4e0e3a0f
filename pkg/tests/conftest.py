import numpy as np
import pytest

from stvgcn.attributes import ClassAttributeDictionary, ObjectAttributes, encode_object_node
from stvgcn.autograd import Tensor, backward
from stvgcn.graph import ObjectNode, order_nodes


def random_graph(rng, m, k_list, J=17, d=None, frame_index=0):
    """Graph with ``m`` persons and ``k_list[c]`` objects of category ``c``."""
    persons = [(p, [tuple(rng.uniform(0, 1, 3)) for _ in range(J)]) for p in range(m)]
    objs = []
    for c, k in enumerate(k_list):
        for _ in range(k):
            if d is None:
                attrs = ObjectAttributes(pos=tuple(rng.uniform(0, 1, 2)), prob=float(rng.uniform()), class_attr=())
            else:
                attrs = encode_object_node(c, tuple(rng.uniform(0, 1, 2)), float(rng.uniform()), d)
            objs.append(ObjectNode(attributes=attrs, category_index=c))
    return order_nodes(persons, objs, J=J, frame_index=frame_index)


def random_sequence(rng, d, T, max_m=2, max_k=3, J=17, min_m=1):
    frames = []
    for t in range(T):
        m = int(rng.integers(min_m, max_m + 1))
        k = [int(rng.integers(0, max_k + 1)) for _ in range(len(d))]
        frames.append(random_graph(rng, m, k, J, d, t))
    return frames


@pytest.fixture
def dictionary():
    return ClassAttributeDictionary.from_descriptions(
        {"book": "a paper book", "pen": "a thin writing pen", "cup": "a ceramic cup"}, c_ca=8
    )


def numeric_grad(f, arrays, eps=1e-6):
    """Central differences of scalar ``f()`` w.r.t. every array in ``arrays`` (in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + eps
            fp = f()
            a[i] = old - eps
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def grad_check(build, shapes, rng, scale=1.0, transform=None):
    """Max relative error between autograd and central differences.

    ``build(*tensors)`` returns a scalar Tensor. Inputs are drawn N(0, scale).
    """
    arrays = [rng.normal(0, scale, s) for s in shapes]
    if transform is not None:
        arrays = [transform(a) for a in arrays]
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build(*ts)
    backward(loss)
    analytic = [t.grad for t in ts]

    def f():
        return float(build(*[Tensor(a) for a in arrays]).data)

    num = numeric_grad(f, arrays)
    err = 0.0
    for ga, gn in zip(analytic, num):
        denom = max(np.abs(ga).max(), np.abs(gn).max(), 1e-8)
        err = max(err, float(np.abs(ga - gn).max() / denom))
    return err


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
