"""Batch kernels over encoded record tables.

Two interchangeable backends implement the same functions:

* ``numba`` (default when numba imports): compiled per-pair loops.
* ``numpy``: chunked array code with no compiler dependency.

Set ``MDMERGE_BACKEND=numpy`` in the environment to force the fallback, or
switch at runtime with :func:`use_backend`.
"""

from __future__ import annotations

import contextlib
import importlib
import logging
import os
from types import ModuleType
from typing import Iterator

import numpy as np

from ..columnar import RecordTable

logger = logging.getLogger(__name__)

STAGE_NONE, STAGE_DET, STAGE_FUZZY, STAGE_ML = 0, 1, 2, 3
BACKENDS = ("numba", "numpy")
ENV_VAR = "MDMERGE_BACKEND"

_loaded: dict[str, ModuleType] = {}
_active: str | None = None


def _load(name: str) -> ModuleType:
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; choose from {BACKENDS}")
    if name not in _loaded:
        _loaded[name] = importlib.import_module(f"{__name__}._{name}")
    return _loaded[name]


def available_backends() -> list[str]:
    names = []
    for name in BACKENDS:
        try:
            _load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def active_backend() -> str:
    global _active
    if _active is None:
        wanted = os.environ.get(ENV_VAR, "").strip().lower() or "numba"
        try:
            _load(wanted)
            _active = wanted
        except ImportError:
            logger.warning("kernel backend %r unavailable, falling back to numpy", wanted)
            _active = "numpy"
    return _active


def set_backend(name: str) -> None:
    global _active
    _load(name)
    _active = name


@contextlib.contextmanager
def use_backend(name: str) -> Iterator[None]:
    previous = active_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def set_workers(n: int | None) -> None:
    """Thread count for the parallel numba kernels (no-op for numpy)."""
    if n is None or active_backend() != "numba":
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _impl() -> ModuleType:
    return _load(active_backend())


def _idx(a) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.dtype not in (np.int32, np.int64):
        a = a.astype(np.int64)
    return a


def score_pairs(table: RecordTable, left, right, theta1: float, theta2: float,
                model=None, tau: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Run the staged match over candidate pairs.

    Returns ``(stage, score)``: stage codes ``0`` (none), ``1`` (deterministic),
    ``2`` (fuzzy), ``3`` (ML) and the evidence score (``nan`` when no stage
    produced one).  ``model=None`` disables the ML stage.
    """
    use_ml = model is not None
    if use_ml:
        beta, means, scales = model.beta, model.feature_means, model.feature_scales
    else:
        beta, means, scales = np.zeros(6), np.zeros(5), np.ones(5)
    return _impl().score_pairs(
        _idx(left), _idx(right), *table.arrays,
        float(theta1), float(theta2), use_ml, float(tau),
        np.ascontiguousarray(beta, dtype=np.float64),
        np.ascontiguousarray(means, dtype=np.float64),
        np.ascontiguousarray(scales, dtype=np.float64),
    )


def pair_features(table: RecordTable, left, right) -> np.ndarray:
    """Feature matrix ``(n_pairs, 5)`` in the resolver's feature order."""
    return _impl().pair_features(_idx(left), _idx(right), *table.arrays)


def expand_block_pairs(members, offsets) -> tuple[np.ndarray, np.ndarray]:
    """All within-block pairs, given concatenated block members and offsets."""
    return _impl().expand_block_pairs(_idx(members), _idx(offsets))
