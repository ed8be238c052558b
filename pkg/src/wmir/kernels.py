"""Scan backend selection: compiled Cython kernel with a numpy fallback.

The backend is chosen once at import time. ``WMIR_KERNEL=numpy`` or
``WMIR_KERNEL=cython`` forces a backend (the latter raises if the extension
was not built). Both backends promote float32 values exactly to float64
before multiply-accumulate. A Scanner always scores its full bound matrix,
and callers apply restrictions by masking afterwards, so restrict/exclude
never perturb scores. The compiled kernel additionally makes each row's
score a pure function of (row, query); BLAS results can shift in the last
ulp when the matrix shape changes.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["Scanner", "backend_name", "available_backends", "make_scanner"]

try:
    from . import _scan as _scan_ext
except ImportError:
    _scan_ext = None

_FORCED = os.environ.get("WMIR_KERNEL", "").strip().lower()
if _FORCED == "numpy":
    _BACKEND = "numpy"
elif _FORCED == "cython":
    if _scan_ext is None:
        raise ImportError("WMIR_KERNEL=cython but the wmir._scan extension is not built")
    _BACKEND = "cython"
else:
    _BACKEND = "cython" if _scan_ext is not None else "numpy"


def backend_name() -> str:
    """Name of the backend selected at import: 'cython' or 'numpy'."""
    return _BACKEND


def available_backends() -> list[str]:
    backends = ["numpy"]
    if _scan_ext is not None:
        backends.insert(0, "cython")
    return backends


class Scanner:
    """Scores one query against all rows of a fixed float32 matrix.

    The matrix is bound at construction so backends can prepare their
    preferred layout once (the numpy backend caches a float64 copy for
    BLAS; the compiled kernel reads float32 directly).
    """

    def __init__(self, matrix: np.ndarray, backend: str | None = None):
        if matrix.ndim != 2 or matrix.dtype != np.float32:
            raise ValueError("Scanner expects a 2-D float32 matrix")
        self.backend = backend or _BACKEND
        if self.backend == "cython" and _scan_ext is None:
            raise ValueError("cython backend requested but extension not built")
        if self.backend not in ("cython", "numpy"):
            raise ValueError(f"unknown backend '{self.backend}'")
        self._mat32 = np.ascontiguousarray(matrix)
        self._mat64 = (
            self._mat32.astype(np.float64) if self.backend == "numpy" else None
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self._mat32.shape

    def scores(self, query: np.ndarray) -> np.ndarray:
        """Float64 dot products of ``query`` against every row."""
        q64 = np.ascontiguousarray(query, dtype=np.float64)
        if q64.shape != (self._mat32.shape[1],):
            raise ValueError("query dimension does not match matrix")
        if self.backend == "cython":
            out = np.empty(self._mat32.shape[0], dtype=np.float64)
            _scan_ext.scan_scores(self._mat32, q64, out)
            return out
        return self._mat64 @ q64


def make_scanner(matrix: np.ndarray, backend: str | None = None) -> Scanner:
    return Scanner(matrix, backend=backend)
