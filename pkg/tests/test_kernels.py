"""The numba kernels and the numpy fallback must agree bit for bit."""
import numpy as np
import pytest

from ddchain.kernels import _numpy_impl as np_impl

numba_impl = pytest.importorskip("ddchain.kernels._numba_impl")


def random_digraph(rng, n):
    adj = rng.random((n, n)) < 0.25
    np.fill_diagonal(adj, False)
    return adj


def to_csr(adj):
    n = adj.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(adj.sum(axis=1), out=indptr[1:])
    indices = np.nonzero(adj)[1].astype(np.int32)
    return indptr, indices


@pytest.mark.parametrize("seed", range(8))
def test_cycle_kernels_agree(seed):
    rng = np.random.default_rng(seed)
    adj = random_digraph(rng, int(rng.integers(2, 30)))
    assert np.array_equal(np_impl.two_cycles(adj), numba_impl.two_cycles(adj))
    assert np.array_equal(np_impl.three_cycles(adj), numba_impl.three_cycles(adj))


@pytest.mark.parametrize("seed", range(8))
def test_chain_kernels_agree(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 25))
    adj = random_digraph(rng, n)
    roles = rng.integers(0, 3, size=n)
    roots = roles == 0
    mid = roles == 1
    term = roles == 2
    adj[:, roots] = False
    adj[term] = False
    indptr, indices = to_csr(adj)
    k = int(rng.integers(1, 4))
    a = np_impl.chains_upto(indptr, indices, roots, mid, term, k)
    b = numba_impl.chains_upto(indptr, indices, roots, mid, term, k)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("seed", range(8))
def test_pack_kernels_agree(seed):
    rng = np.random.default_rng(200 + seed)
    m, n, width = int(rng.integers(1, 200)), int(rng.integers(2, 30)), 3
    rows = rng.integers(-1, n, size=(m, width)).astype(np.int32)
    weights = rng.integers(1, 5, size=m).astype(np.float64)
    caps = rng.integers(0, 3, size=n).astype(np.int32)
    c1, v1 = np_impl.greedy_pack(rows, weights, caps)
    c2, v2 = numba_impl.greedy_pack(rows, weights, caps)
    assert np.array_equal(c1, c2) and v1 == v2
    active = (rng.random(m) < 0.8).astype(np.uint8)
    avail = caps.astype(np.int64)
    assert np_impl.share_bound(rows, weights, active, avail) == pytest.approx(
        numba_impl.share_bound(rows, weights, active, avail)
    )


def test_greedy_respects_capacities():
    rows = np.array([[0, 1, -1], [0, 2, -1], [1, 2, -1]], dtype=np.int32)
    weights = np.array([5.0, 4.0, 3.0])
    caps = np.array([1, 1, 1], dtype=np.int32)
    chosen, value = np_impl.greedy_pack(rows, weights, caps)
    assert list(chosen) == [1, 0, 0] and value == 5.0
    caps2 = np.array([2, 1, 1], dtype=np.int32)
    chosen2, value2 = np_impl.greedy_pack(rows, weights, caps2)
    assert list(chosen2) == [1, 1, 0] and value2 == 9.0


def valid_rows(rng, m, n, width=3):
    """Left-packed rows of 2..width distinct node indexes (the real contract)."""
    rows = np.full((m, width), -1, dtype=np.int32)
    for i in range(m):
        size = int(rng.integers(2, width + 1))
        rows[i, :size] = rng.choice(n, size=size, replace=False)
    return rows


def test_share_bound_dominates_any_packing():
    rng = np.random.default_rng(5)
    for _ in range(25):
        m, n = int(rng.integers(1, 40)), int(rng.integers(3, 12))
        rows = valid_rows(rng, m, n)
        weights = rng.integers(1, 6, size=m).astype(np.float64)
        caps = rng.integers(0, 2, size=n).astype(np.int32)
        chosen, value = np_impl.greedy_pack(rows, weights, caps)
        bound = np_impl.share_bound(
            rows, weights, np.ones(m, dtype=np.uint8), caps.astype(np.int64)
        )
        assert bound + 1e-9 >= value


def test_backend_flag_selects_numpy(monkeypatch):
    import importlib
    import ddchain.kernels as K

    monkeypatch.setenv("DDCHAIN_NUMBA", "0")
    mod = importlib.reload(K)
    assert mod.BACKEND == "numpy"
    monkeypatch.delenv("DDCHAIN_NUMBA")
    mod = importlib.reload(K)
    assert mod.BACKEND in ("numba", "numpy")
