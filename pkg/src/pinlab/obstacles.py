"""Random obstacle force fields for the continuum model.

Obstacles share one bump shape, sit at Poisson positions in
R^n x [r1, y_max] (periodic in the base directions) and carry i.i.d.
strictly positive strengths.  The force is
f(x, y) = sum_i s_i * bump(x - x_i, y - y_i), evaluated through a spatial
hash grid that reproduces the brute-force sum exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .distributions import StrengthDistribution
from .rng import EnvironmentSeed, Stream, uniform_array

__all__ = [
    "BumpShape",
    "Box",
    "ObstacleSet",
    "ForceField",
    "make_bump",
    "sample_obstacles",
    "sample_anchored_obstacles",
    "eval_force",
]


def _smoothstep(w):
    """Quintic smoothstep on [0, 1]; C^2 flat at both ends."""
    w = np.clip(w, 0.0, 1.0)
    return w * w * w * (10.0 + w * (-15.0 + 6.0 * w))


def _smoothstep_d1(w):
    inside = (w > 0.0) & (w < 1.0)
    w = np.clip(w, 0.0, 1.0)
    return np.where(inside, w * w * (30.0 + w * (-60.0 + 30.0 * w)), 0.0)


def _smoothstep_d2(w):
    inside = (w > 0.0) & (w < 1.0)
    w = np.clip(w, 0.0, 1.0)
    return np.where(inside, w * (60.0 + w * (-180.0 + 120.0 * w)), 0.0)


@dataclass(frozen=True)
class BumpShape:
    """Product of 1d plateau profiles over the n base coordinates and height.

    Each factor is 1 on [-rho, rho], 0 outside [-rho_p, rho_p] and a quintic
    smoothstep in between, with rho = r0 and rho_p = r1/sqrt(n+1).  Then the
    bump is >= 1 on the full-strength cylinder max(|x|,|y|) <= r0 and
    vanishes for |(x,y)| >= r1.  Requires r1 > sqrt(n+1) * r0, slightly
    stronger than the bare support condition, so the plateau corners fit.
    """

    r0: float
    r1: float
    n: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("base dimension must be 1 or 2")
        if not (self.r0 > 0 and self.r1 > 0):
            raise ValueError("radii must be positive")
        if self.r1 <= math.sqrt(self.n + 1) * self.r0:
            raise ValueError(
                f"invalid shape: need r1 > sqrt(n+1)*r0 = {math.sqrt(self.n + 1) * self.r0:.6g}"
            )

    @property
    def rho(self) -> float:
        return self.r0

    @property
    def rho_p(self) -> float:
        return self.r1 / math.sqrt(self.n + 1)

    def factor(self, t):
        """1d plateau factor and the bump along any single coordinate."""
        a = np.abs(np.asarray(t, dtype=np.float64))
        w = (self.rho_p - a) / (self.rho_p - self.rho)
        out = np.where(a <= self.rho, 1.0, np.where(a >= self.rho_p, 0.0, _smoothstep(w)))
        return out if out.ndim else float(out)

    def factor_d1(self, t):
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        w = (self.rho_p - a) / (self.rho_p - self.rho)
        mid = (a > self.rho) & (a < self.rho_p)
        d = -_smoothstep_d1(w) / (self.rho_p - self.rho) * np.sign(t)
        out = np.where(mid, d, 0.0)
        return out if out.ndim else float(out)

    def factor_d2(self, t):
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        w = (self.rho_p - a) / (self.rho_p - self.rho)
        mid = (a > self.rho) & (a < self.rho_p)
        d = _smoothstep_d2(w) / (self.rho_p - self.rho) ** 2
        out = np.where(mid, d, 0.0)
        return out if out.ndim else float(out)

    def value(self, dx, dy):
        """bump(dx, dy); dx has shape (..., n) for n = 2, scalar-like for n = 1."""
        if self.n == 1:
            return self.factor(dx) * self.factor(dy)
        dx = np.asarray(dx, dtype=np.float64)
        return self.factor(dx[..., 0]) * self.factor(dx[..., 1]) * self.factor(dy)


def make_bump(r0: float, r1: float, n: int) -> BumpShape:
    return BumpShape(r0=float(r0), r1=float(r1), n=int(n))


@dataclass(frozen=True)
class Box:
    """Simulation domain: periodic in x with the given edge lengths,
    [y_min, y_max] in the height coordinate."""

    x_lengths: tuple
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.y_max <= self.y_min:
            raise ValueError("empty height range")
        if any(L <= 0 for L in self.x_lengths):
            raise ValueError("base lengths must be positive")

    @property
    def n(self) -> int:
        return len(self.x_lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.x_lengths)) * (self.y_max - self.y_min)


@dataclass
class ObstacleSet:
    """Centres, heights and strengths of all obstacles in a box."""

    box: Box
    x: np.ndarray          # shape (N, n)
    y: np.ndarray          # shape (N,)
    strengths: np.ndarray  # shape (N,)
    intensity: float
    seed: int
    meta: dict = dc_field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.y)

    def to_json_dict(self) -> dict:
        return {
            "box": {"x_lengths": list(self.box.x_lengths), "y_min": self.box.y_min,
                    "y_max": self.box.y_max},
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "strengths": self.strengths.tolist(),
            "intensity": self.intensity,
            "seed": self.seed,
            "meta": self.meta,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ObstacleSet":
        box = Box(tuple(d["box"]["x_lengths"]), d["box"]["y_min"], d["box"]["y_max"])
        return ObstacleSet(
            box=box,
            x=np.asarray(d["x"], dtype=np.float64).reshape(-1, box.n),
            y=np.asarray(d["y"], dtype=np.float64),
            strengths=np.asarray(d["strengths"], dtype=np.float64),
            intensity=d["intensity"],
            seed=d["seed"],
            meta=d.get("meta", {}),
        )


def sample_obstacles(box: Box, lam: float, dist: StrengthDistribution,
                     seed: int, tag: int = 0) -> ObstacleSet:
    """Poisson(lam * volume) obstacles, uniform positions, i.i.d. strengths.

    Count, positions and strengths come from three independent substreams of
    the seed, so the same configuration replays exactly.
    """
    if lam < 0:
        raise ValueError("intensity must be >= 0")
    env_count = EnvironmentSeed(seed, Stream.COUNT)
    n_obs = int(env_count.numpy_generator(tag, 0).poisson(lam * box.volume)) if lam > 0 else 0
    xs = np.empty((n_obs, box.n))
    idx = np.arange(n_obs, dtype=np.int64) + (tag << 40)
    for dim in range(box.n):
        u = uniform_array(seed, Stream.POSITION, idx, np.full(n_obs, dim, dtype=np.int64))
        xs[:, dim] = u * box.x_lengths[dim]
    uy = uniform_array(seed, Stream.POSITION, idx, np.full(n_obs, box.n, dtype=np.int64))
    ys = box.y_min + uy * (box.y_max - box.y_min)
    us = uniform_array(seed, Stream.STRENGTH, idx, np.zeros(n_obs, dtype=np.int64))
    if dist.is_discrete:
        from .distributions import invert_uniform

        ss = invert_uniform(dist.sampling_plan(), us).astype(np.float64)
    else:
        ss = dist.quantile_continuous(us)
    return ObstacleSet(box=box, x=xs, y=ys, strengths=ss, intensity=lam, seed=seed)


def sample_anchored_obstacles(
    box: Box,
    lam: float,
    dist: StrengthDistribution,
    seed: int,
    anchor_boxes,
    min_strength: float,
) -> ObstacleSet:
    """Background Poisson obstacles plus one qualifying obstacle per cuboid.

    anchor_boxes: list of (x_lo, x_hi, y_lo, y_hi) dotted sub-cuboids (n = 1).
    Each receives an obstacle with centre uniform in the sub-cuboid and
    strength drawn from dist conditioned on >= min_strength.  This is the
    conditional-sampling stand-in for waiting on a percolating Poisson
    configuration, which at desk scale would require astronomically large
    boxes; the verifier never uses openness probabilities, only the realised
    field.
    """
    base = sample_obstacles(box, lam, dist, seed, tag=0)
    k = len(anchor_boxes)
    idx = np.arange(k, dtype=np.int64)
    ux = uniform_array(seed, Stream.HEIGHTS, idx, np.zeros(k, dtype=np.int64))
    uy = uniform_array(seed, Stream.HEIGHTS, idx, np.ones(k, dtype=np.int64))
    us = uniform_array(seed, Stream.HEIGHTS, idx, np.full(k, 2, dtype=np.int64))
    ax, ay, ast = [], [], []
    for i, (x_lo, x_hi, y_lo, y_hi) in enumerate(anchor_boxes):
        ax.append(x_lo + ux[i] * (x_hi - x_lo))
        ay.append(y_lo + uy[i] * (y_hi - y_lo))
        ast.append(float(dist.conditional_tail_quantile(min_strength, us[i])))
    x = np.concatenate([base.x, np.asarray(ax).reshape(-1, 1)])
    y = np.concatenate([base.y, np.asarray(ay)])
    s = np.concatenate([base.strengths, np.asarray(ast)])
    out = ObstacleSet(box=box, x=x, y=y, strengths=s, intensity=lam, seed=seed)
    out.meta = {"anchors": k, "min_strength": min_strength, "anchored": True}
    return out


class ForceField:
    """f(x, y) = sum_i s_i bump(x - x_i, y - y_i), periodic in x.

    A hash grid of cell size r1 accelerates point evaluation; the result
    equals the brute-force sum exactly (obstacles are visited in index
    order within the candidate set).
    """

    def __init__(self, obstacles: ObstacleSet, bump: BumpShape):
        if bump.n != obstacles.box.n:
            raise ValueError("bump and box dimensions differ")
        self.obstacles = obstacles
        self.bump = bump
        self._build_grid()

    def _build_grid(self):
        obs = self.obstacles
        cell = self.bump.r1
        self._cell = cell
        self._nx = [max(1, int(math.floor(L / cell))) for L in obs.box.x_lengths]
        ny = max(1, int(math.ceil((obs.box.y_max - obs.box.y_min + 2 * cell) / cell)))
        self._ny = ny
        self._y0 = obs.box.y_min - cell
        buckets = {}
        for i in range(obs.count):
            key = self._key(obs.x[i], obs.y[i])
            buckets.setdefault(key, []).append(i)
        self._buckets = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}

    def _key(self, x, y):
        obs = self.obstacles
        parts = []
        for dim in range(obs.box.n):
            L = obs.box.x_lengths[dim]
            c = int(math.floor((x[dim] % L) / L * self._nx[dim]))
            parts.append(min(c, self._nx[dim] - 1))
        cy = int(math.floor((y - self._y0) / self._cell))
        parts.append(cy)
        return tuple(parts)

    def candidates(self, x, y) -> np.ndarray:
        """Obstacle indices in the 3^(n+1) cells around (x, y), index-sorted."""
        obs = self.obstacles
        key = self._key(x, y)
        out = []
        ranges = [(-1, 0, 1)] * (obs.box.n + 1)
        import itertools

        for offs in itertools.product(*ranges):
            kk = []
            for dim in range(obs.box.n):
                kk.append((key[dim] + offs[dim]) % self._nx[dim])
            kk.append(key[-1] + offs[-1])
            got = self._buckets.get(tuple(kk))
            if got is not None:
                out.append(got)
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(out))

    def _periodic_dx(self, xq, idx):
        obs = self.obstacles
        d = np.empty((len(idx), obs.box.n))
        for dim in range(obs.box.n):
            L = obs.box.x_lengths[dim]
            raw = (np.asarray(xq).reshape(-1)[dim] - obs.x[idx, dim]) % L
            d[:, dim] = np.where(raw > L / 2, raw - L, raw)
        return d

    def eval(self, x, y) -> float:
        """Point force via the hash grid; equals the brute-force sum."""
        obs = self.obstacles
        idx = self.candidates(np.atleast_1d(np.asarray(x, dtype=np.float64)), y)
        if len(idx) == 0:
            return 0.0
        d = self._periodic_dx(x, idx)
        dy = y - obs.y[idx]
        if obs.box.n == 1:
            vals = self.bump.factor(d[:, 0]) * self.bump.factor(dy)
        else:
            vals = (self.bump.factor(d[:, 0]) * self.bump.factor(d[:, 1])
                    * self.bump.factor(dy))
        return float(np.sum(obs.strengths[idx] * vals))

    def eval_brute(self, x, y) -> float:
        """Reference sum over every obstacle (oracle for tests)."""
        obs = self.obstacles
        idx = np.arange(obs.count, dtype=np.int64)
        if obs.count == 0:
            return 0.0
        d = self._periodic_dx(x, idx)
        dy = y - obs.y
        if obs.box.n == 1:
            vals = self.bump.factor(d[:, 0]) * self.bump.factor(dy)
        else:
            vals = (self.bump.factor(d[:, 0]) * self.bump.factor(d[:, 1])
                    * self.bump.factor(dy))
        return float(np.sum(obs.strengths * vals))

    # -- vectorised column machinery (1d base) ------------------------------

    def column_candidates(self, grid_x: np.ndarray):
        """CSR candidate arrays for fixed grid columns (n = 1).

        For every grid point x_i, lists obstacles with periodic |x_i - x_k|
        inside the bump support, sorted by centre height, premultiplying
        strength * bump_x.  Feeds both the PDE kernel and the vectorised
        field evaluation on verification grids.
        """
        obs = self.obstacles
        if obs.box.n != 1:
            raise ValueError("column candidates are for 1d bases")
        L = obs.box.x_lengths[0]
        rho_p = self.bump.rho_p
        N = len(grid_x)
        ptr = np.zeros(N + 1, dtype=np.int64)
        ys, sbx = [], []
        order = np.argsort(obs.y, kind="stable")
        ox = obs.x[order, 0]
        oy = obs.y[order]
        os_ = obs.strengths[order]
        for i, xg in enumerate(grid_x):
            raw = (xg - ox) % L
            d = np.where(raw > L / 2, raw - L, raw)
            hit = np.abs(d) < rho_p
            ptr[i + 1] = ptr[i] + int(np.count_nonzero(hit))
            if np.any(hit):
                ys.append(oy[hit])
                sbx.append(os_[hit] * self.bump.factor(d[hit]))
        cand_y = np.concatenate(ys) if ys else np.empty(0)
        cand_sbx = np.concatenate(sbx) if sbx else np.empty(0)
        return ptr, cand_y, cand_sbx

    def eval_columns(self, ptr, cand_y, cand_sbx, y_values: np.ndarray) -> np.ndarray:
        """f(x_i, y_i) for per-column heights, using CSR candidates."""
        N = len(y_values)
        counts = np.diff(ptr)
        pt_idx = np.repeat(np.arange(N, dtype=np.int64), counts)
        dy = y_values[pt_idx] - cand_y
        vals = cand_sbx * self.bump.factor(dy)
        out = np.zeros(N)
        np.add.at(out, pt_idx, vals)
        return out


def eval_force(field: ForceField, x, y) -> float:
    return field.eval(x, y)
