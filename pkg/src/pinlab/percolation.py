"""Site percolation on Z^n x N and minimal Lipschitz surfaces.

A Lipschitz surface is a height function L on the (periodic) base lattice
with (a, L(a)) open for every column and |L(a) - L(b)| <= 1 across
neighbours.  find_minimal_surface computes the pointwise-least such surface
by a monotone fixed-point iteration; failures within the height budget are
reported as "budget exhausted", never as a disproof (the existence theorem
lives on the infinite lattice).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .rng import EnvironmentSeed, Stream, uniform_array

__all__ = [
    "SiteField",
    "LipschitzSurface",
    "find_minimal_surface",
    "surface_check",
    "open_box_probability",
    "min_box_side",
]


@dataclass
class SiteField:
    """Open/closed states over (base box) x [j_min, j_min + height_cap).

    The base box is periodic, n in {1, 2}.  Openness is Bernoulli(p) driven
    by a counter-based seed, or supplied explicitly as per-column sorted
    arrays of open heights (e.g. 'strong obstacle present in cuboid').
    """

    base_shape: tuple
    height_cap: int
    j_min: int = 1
    p: Optional[float] = None
    env: Optional[EnvironmentSeed] = None
    open_heights: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        if self.height_cap < 1:
            raise ValueError("height budget must be >= 1")
        if len(self.base_shape) not in (1, 2):
            raise ValueError("base dimension must be 1 or 2")
        if (self.p is None) == (self.open_heights is None):
            raise ValueError("give exactly one of (p, env) or open_heights")
        if self.p is not None:
            if not 0.0 < self.p < 1.0:
                raise ValueError("p must be in (0, 1)")
            if self.env is None:
                raise ValueError("Bernoulli fields need an environment seed")

    @property
    def n_columns(self) -> int:
        return int(np.prod(self.base_shape))

    @property
    def j_max(self) -> int:
        return self.j_min + self.height_cap - 1

    def is_open(self, cols, js):
        """Vectorised openness over flattened column indices and heights."""
        cols = np.asarray(cols, dtype=np.int64)
        js = np.asarray(js, dtype=np.int64)
        if self.p is not None:
            u = uniform_array(self.env.seed, self.env.stream_tag, cols, js)
            return u < self.p
        out = np.zeros(cols.shape, dtype=bool)
        flat_c = np.atleast_1d(cols).ravel()
        flat_j = np.atleast_1d(js).ravel()
        flat_o = out.reshape(-1)
        for k in range(flat_c.size):
            hs = self.open_heights[flat_c[k]]
            idx = np.searchsorted(hs, flat_j[k])
            flat_o[k] = idx < len(hs) and hs[idx] == flat_j[k]
        return out

    def next_open(self, cols, targets) -> np.ndarray:
        """Smallest open height >= target per column; -1 if beyond budget."""
        cols = np.asarray(cols, dtype=np.int64)
        targets = np.maximum(np.asarray(targets, dtype=np.int64), self.j_min)
        if self.open_heights is not None:
            out = np.empty(cols.shape, dtype=np.int64)
            for k in range(cols.size):
                hs = self.open_heights[cols[k]]
                idx = np.searchsorted(hs, targets[k])
                out[k] = hs[idx] if idx < len(hs) else -1
            return out
        out = targets.copy()
        unresolved = np.ones(cols.shape, dtype=bool)
        while np.any(unresolved):
            over = unresolved & (out > self.j_max)
            out[over] = -1
            unresolved &= ~over
            if not np.any(unresolved):
                break
            hit = np.zeros(cols.shape, dtype=bool)
            hit[unresolved] = self.is_open(cols[unresolved], out[unresolved])
            unresolved &= ~hit
            out[unresolved] += 1
        return out


@dataclass
class LipschitzSurface:
    """Heights L over the base box, |L(a) - L(b)| <= 1 for lattice neighbours."""

    heights: np.ndarray  # shape = base_shape

    @property
    def base_shape(self) -> tuple:
        return self.heights.shape


def _neighbor_bound(L: np.ndarray) -> np.ndarray:
    """max over lattice neighbours of L(b) - 1, periodic."""
    b = None
    for axis in range(L.ndim):
        for shift in (1, -1):
            r = np.roll(L, shift, axis=axis)
            b = r if b is None else np.maximum(b, r)
    return b - 1


def find_minimal_surface(field: SiteField, max_sweeps: Optional[int] = None) -> Optional[LipschitzSurface]:
    """Pointwise-minimal Lipschitz surface through open sites, or None.

    Monotone fixed point: start each column at its lowest open site, then
    repeatedly raise any column violating the neighbour constraint to the
    next open height meeting it.  Updates only ever raise, so the iteration
    terminates at the least admissible surface or exhausts the budget.
    """
    shape = field.base_shape
    ncols = field.n_columns
    all_cols = np.arange(ncols, dtype=np.int64)
    L_flat = field.next_open(all_cols, np.full(ncols, field.j_min, dtype=np.int64))
    if np.any(L_flat < 0):
        return None
    L = L_flat.reshape(shape)
    limit = max_sweeps if max_sweeps is not None else field.height_cap * field.n_columns + 8
    for _ in range(limit):
        bound = _neighbor_bound(L)
        need = L < bound
        if not np.any(need):
            return LipschitzSurface(L)
        cols = all_cols.reshape(shape)[need]
        raised = field.next_open(cols, bound[need])
        if np.any(raised < 0):
            return None
        L[need] = raised
    return None


def surface_check(surface: LipschitzSurface, field: SiteField):
    """Exact verification of openness and the neighbour-increment bound."""
    L = surface.heights
    violations = []
    flat = L.reshape(-1)
    cols = np.arange(flat.size, dtype=np.int64)
    open_ok = field.is_open(cols, flat)
    for c in cols[~np.asarray(open_ok)]:
        violations.append(("closed_site", int(c), int(flat[c])))
    for axis in range(L.ndim):
        d = np.abs(L - np.roll(L, 1, axis=axis))
        bad = np.argwhere(d > 1)
        for idx in bad:
            violations.append(("lipschitz", axis, tuple(int(x) for x in idx)))
    return len(violations) == 0, violations


def open_box_probability(lam: float, l: float, h: float, r1: float, n: int, tail: float) -> float:
    """P(a cuboid is open): a strong-enough obstacle centre in the dotted sub-box."""
    if l <= 2 * r1:
        raise ValueError("invalid geometry: need l > 2*r1")
    if h <= 0:
        raise ValueError("invalid geometry: need h > 0")
    return 1.0 - math.exp(-lam * (l - 2 * r1) ** n * h * tail)


def min_box_side(lam: float, h: float, n: int, tail: float, r1: float) -> float:
    """Smallest box side putting the openness probability over 1 - 1/(2n+2)^2."""
    if tail <= 0:
        raise ValueError("no finite box side: tail probability is zero")
    if h <= 0:
        raise ValueError("invalid geometry: need h > 0")
    return 2 * r1 + (2.0 * math.log(2 * n + 2) / (lam * h * tail)) ** (1.0 / n)
