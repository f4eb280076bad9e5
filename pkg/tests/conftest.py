import numpy as np
import pytest

from lpround.lp_core import SparseMatrix, StandardFormLp
from lpround.problems import Graph, MultiwayInstance


@pytest.fixture
def edge_graph():
    return Graph.from_edges(2, [(0, 1)])


@pytest.fixture
def k3():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path_mwc():
    # s - v - t with terminals s=0, t=2
    return MultiwayInstance(Graph.from_edges(3, [(0, 1), (1, 2)]), [0, 2])


@pytest.fixture
def edge_lp():
    """min x1 + x2  s.t.  x1 + x2 = 1, x in [0, 1]."""
    return StandardFormLp.create(SparseMatrix.from_dense([[1.0, 1.0]]), [1.0], [1.0, 1.0], [0, 0], [1, 1])


def scalar_lp(a=1.0, b=1.0, c=1.0, lo=0.0, hi=np.inf):
    return StandardFormLp.create(SparseMatrix.from_dense([[a]]), [b], [c], [lo], [hi])
