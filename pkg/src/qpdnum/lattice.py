"""Counting points of the lattice T Z^d inside an origin-centred box.

``beta_T`` is the number of integer vectors ``I`` with ``T I`` in the box B
whose i-th side is ``4 rho |T_ii| + 2 ||T||_inf``.  Equivalently it counts
``Z^d`` inside the parallelotope ``T^{-1}(B)``, which is what the
enumerator walks over.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ParamError, SingularT

DEFAULT_BUDGET = 10**8
BOUNDARY_TOL = 1e-12
_CHUNK = 1 << 20


@dataclass(frozen=True)
class BoxB:
    side_lengths: np.ndarray
    rho: float

    @property
    def half(self) -> np.ndarray:
        return self.side_lengths / 2.0


@dataclass(frozen=True)
class LatticeCountResult:
    exact: int | None
    upper: int
    rho: float
    enumerated_points: int | None = None

    @property
    def best(self) -> int:
        """The tightest available value: exact when enumerated, else the upper bound."""
        return self.upper if self.exact is None else self.exact


def _matrix(t) -> np.ndarray:
    T = getattr(t, "entries", t)
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ParamError(f"T must be square, got shape {T.shape}")
    return T


def _inverse(T: np.ndarray) -> np.ndarray:
    try:
        Ti = np.linalg.inv(T)
    except np.linalg.LinAlgError as exc:
        raise SingularT(str(exc)) from exc
    if not np.all(np.isfinite(Ti)) or np.linalg.cond(T) > 1e14:
        raise SingularT("T is numerically singular")
    return Ti


def build_box(t, rho: float = 1.0) -> BoxB:
    """Box with sides ``4 rho |T_ii| + 2 ||T||_inf`` (max absolute row sum)."""
    if not rho >= 1.0:
        raise ParamError(f"rho must be >= 1, got {rho}")
    T = _matrix(t)
    norm_inf = np.max(np.sum(np.abs(T), axis=1))
    sides = 4.0 * rho * np.abs(np.diag(T)) + 2.0 * norm_inf
    return BoxB(sides, float(rho))


def enclosing_sides(t, box: BoxB) -> np.ndarray:
    """Side lengths ``l*_i = sum_j |T^-1_ij| side_j`` of the tightest axis-aligned
    box around ``T^{-1}(B)``."""
    Ti = _inverse(_matrix(t))
    return np.abs(Ti) @ box.side_lengths


def count_upper(t, box: BoxB) -> int:
    """prod_i (floor(l*_i) + 1), an upper bound on beta_T."""
    lstar = enclosing_sides(t, box)
    out = 1
    for l in lstar:
        out *= int(np.floor(l)) + 1
    return out


def count_exact(t, box: BoxB, budget: int = DEFAULT_BUDGET) -> LatticeCountResult:
    """Enumerate integer candidates in the enclosing box of ``T^{-1}(B)`` and
    keep those whose image lies in B (closed, tolerance 1e-12 * side).

    When the candidate count exceeds ``budget`` only the upper bound is
    returned (``exact is None``).
    """
    T = _matrix(t)
    upper = count_upper(T, box)
    half_enc = enclosing_sides(T, box) / 2.0
    lo = np.ceil(-half_enc - 1e-9).astype(np.int64)
    hi = np.floor(half_enc + 1e-9).astype(np.int64)
    sizes = hi - lo + 1
    n_candidates = 1
    for s in sizes:
        n_candidates *= int(s)
    if n_candidates > budget:
        return LatticeCountResult(None, upper, box.rho, None)

    lim = box.half + BOUNDARY_TOL * box.side_lengths
    d = T.shape[0]
    # trailing axes form a dense grid, leading axes are looped over
    split = d
    block = 1
    while split > 0 and block * int(sizes[split - 1]) <= _CHUNK:
        split -= 1
        block *= int(sizes[split])
    axes = [np.arange(lo[i], hi[i] + 1) for i in range(split, d)]
    if axes:
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d - split).astype(float)
        img_trail = grid @ T[:, split:].T
    else:
        img_trail = np.zeros((1, d))
    count = 0
    lead_ranges = [range(lo[i], hi[i] + 1) for i in range(split)]
    for lead in itertools.product(*lead_ranges):
        shift = T[:, :split] @ np.asarray(lead, dtype=float) if split else 0.0
        img = img_trail + shift
        count += int(np.count_nonzero(np.all(np.abs(img) <= lim, axis=1)))
    return LatticeCountResult(count, upper, box.rho, n_candidates)
