"""Hot inner loops behind a backend switch.

Two interchangeable implementations exist: numba ``@njit`` kernels
(:mod:`._numba_impl`) and a pure-numpy fallback (:mod:`._numpy_impl`).
The env var ``DDCHAIN_NUMBA`` selects: unset/``1`` prefers numba when
importable, ``0``/``off``/``false`` forces the numpy path.  Both backends
produce bit-identical outputs (see tests/test_kernels.py); only speed
differs (see benchmarks/bench_kernels.py).

Exported functions::

    two_cycles(adj)                 -> int32[m, 2]
    three_cycles(adj)               -> int32[m, 3]
    chains_upto(indptr, indices, roots, mid_ok, term_ok, k) -> int32[m, k+1]
    greedy_pack(rows, weights, caps) -> (uint8[m], float)
    share_bound(rows, weights, active, avail) -> float
"""
from __future__ import annotations

import os

_flag = os.environ.get("DDCHAIN_NUMBA", "").strip().lower()
_want_numba = _flag not in ("0", "off", "false", "no")

BACKEND = "numpy"
if _want_numba:
    try:
        from ._numba_impl import (  # noqa: F401
            chains_upto,
            greedy_pack,
            share_bound,
            three_cycles,
            two_cycles,
        )

        BACKEND = "numba"
    except ImportError:
        _want_numba = False

if not _want_numba:
    from ._numpy_impl import (  # noqa: F401
        chains_upto,
        greedy_pack,
        share_bound,
        three_cycles,
        two_cycles,
    )

__all__ = [
    "BACKEND",
    "two_cycles",
    "three_cycles",
    "chains_upto",
    "greedy_pack",
    "share_bound",
]
