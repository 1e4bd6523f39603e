"""Finite probability measures on the Galerkin phase space.

Points are flat state vectors; the H inner product is diagonal with weights
``metric`` (1 on velocity coefficients, ``gamma`` on temperature ones), so
``|z|_H^2 = sum(metric * z**2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import EmptyCover, InvalidMeasure, TimeOffGrid, UnboundedF, UncoveredAtoms

WEIGHT_TOL = 1e-12
RADIUS_RATIO = 1.05


def h_metric(n_u: int, n_t: int, gamma: float) -> np.ndarray:
    return np.concatenate([np.ones(n_u), np.full(n_t, float(gamma))])


@dataclass
class DiscreteMeasure:
    """Convex combination of Dirac masses ``sum_i w_i delta_{z_i}``."""

    weights: np.ndarray
    points: np.ndarray
    metric: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.metric is None:
            self.metric = np.ones(self.points.shape[1])
        self.metric = np.asarray(self.metric, dtype=float)
        n = self.weights.size
        if n < 1:
            raise InvalidMeasure("a measure needs at least one atom")
        if self.points.shape[0] != n:
            raise InvalidMeasure(f"{n} weights but {self.points.shape[0]} points")
        if self.metric.shape != (self.points.shape[1],):
            raise InvalidMeasure("metric length differs from point dimension")
        if not np.all(np.isfinite(self.points)):
            raise InvalidMeasure("non-finite atom coordinates")
        if not np.all(self.weights > 0) or not np.all(np.isfinite(self.weights)):
            raise InvalidMeasure("weights must be finite and positive")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidMeasure(f"weights sum to {total!r}, not 1")

    @classmethod
    def dirac(cls, z, metric=None) -> "DiscreteMeasure":
        return cls(np.ones(1), np.asarray(z, dtype=float)[None, :], metric)

    @classmethod
    def empirical(cls, points, metric=None) -> "DiscreteMeasure":
        pts = np.atleast_2d(points)
        return cls(np.full(pts.shape[0], 1.0 / pts.shape[0]), pts, metric)

    @classmethod
    def restricted(cls, masses, points, metric=None) -> "DiscreteMeasure":
        """Normalised restriction ``mu(. & D) / mu(D)`` from the raw masses
        ``mu({z_i})``; the masses are kept so :meth:`scaled_weights` with
        ``mu(D)`` returns them bit for bit."""
        masses = np.array(masses, dtype=float)
        total = math.fsum(masses)
        m = cls(masses / total, np.array(points, dtype=float), metric)
        m.masses, m.mass_total = masses, total
        return m

    def scaled_weights(self, W: float) -> np.ndarray:
        """Weights of ``W * self`` inside a mixture."""
        masses = getattr(self, "masses", None)
        if masses is not None:
            return masses * (W / self.mass_total)
        return W * self.weights

    @property
    def n_atoms(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def h_norm_sq(self) -> np.ndarray:
        return self.points ** 2 @ self.metric

    def h_norm(self) -> np.ndarray:
        return np.sqrt(self.h_norm_sq())

    def atoms(self):
        return list(zip(self.weights.tolist(), self.points))


def _evaluate(phi: Callable, points: np.ndarray) -> np.ndarray:
    """Apply ``phi`` to all rows, vectorised when ``phi`` supports it."""
    try:
        vals = np.asarray(phi(points), dtype=float)
        if vals.shape == (points.shape[0],):
            return vals
    except Exception:
        pass
    return np.array([float(phi(z)) for z in points])


def moment(m: DiscreteMeasure, phi: Callable) -> float:
    """``sum_i w_i phi(z_i)`` with an exactly rounded summation."""
    return math.fsum(m.weights * _evaluate(phi, m.points))


def same_atoms(m1: DiscreteMeasure, m2: DiscreteMeasure, *, max_ulps: int = 0) -> bool:
    """Multiset equality of atoms: identical points, weights within
    ``max_ulps`` units in the last place."""
    if m1.points.shape != m2.points.shape:
        return False
    o1 = np.lexsort(m1.points.T[::-1])
    o2 = np.lexsort(m2.points.T[::-1])
    if not np.array_equal(m1.points[o1], m2.points[o2]):
        return False
    w1, w2 = m1.weights[o1], m2.weights[o2]
    return bool(np.all(np.abs(w1 - w2) <= max_ulps * np.spacing(np.maximum(w1, w2))))


# ---------------------------------------------------- test functionals

@dataclass
class TestFunctionalSuite:
    """Bounded cylinder functionals ``tanh(<z, w_j>_H + c_j)``.

    Directions are unit vectors in H and offsets are uniform in
    ``[-1, 1]``, both drawn from ``seed``, so every functional is bounded
    by 1 and 1-Lipschitz in the H norm.
    """

    __test__ = False  # not a pytest class

    seed: int
    directions: np.ndarray
    offsets: np.ndarray
    metric: np.ndarray
    lipschitz: float = 1.0

    @classmethod
    def create(cls, dim: int, metric=None, n_functionals: int = 16,
               seed: int = 0) -> "TestFunctionalSuite":
        metric = np.ones(dim) if metric is None else np.asarray(metric, dtype=float)
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((n_functionals, dim))
        w /= np.sqrt(w ** 2 @ metric)[:, None]
        c = rng.uniform(-1.0, 1.0, n_functionals)
        return cls(seed=seed, directions=w, offsets=c, metric=metric)

    def __len__(self):
        return self.offsets.size

    def values(self, points) -> np.ndarray:
        """``(n_points, n_functionals)`` matrix of functional values."""
        pts = np.atleast_2d(points)
        return np.tanh((pts * self.metric) @ self.directions.T + self.offsets)

    def functional(self, j: int) -> Callable:
        return lambda z: self.values(z)[:, j]

    def integrals(self, m: DiscreteMeasure) -> np.ndarray:
        vals = self.values(m.points)
        return np.array([math.fsum(m.weights * vals[:, j]) for j in range(len(self))])

    def distance(self, m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
        """``max_j |m1(phi_j) - m2(phi_j)|``."""
        return float(np.max(np.abs(self.integrals(m1) - self.integrals(m2))))


# ------------------------------------------------- Choquet-type quantiser

@dataclass
class DyadicPartition:
    """Nested boxes in coordinates ``y = axes @ (sqrt(metric) z)``.

    ``axes`` has orthonormal rows, so ``|y| <= |z|_H``.  At level ``depth``
    axis ``k`` is cut at ``2**depth - 1`` breakpoints; the outermost boxes
    extend to ``+-K`` so the H ball of radius ``K`` is covered.  With
    ``spacing="uniform"`` the breakpoints split ``[-K, K]`` evenly; with
    ``spacing="quantile"`` they sit at the dyadic weighted quantiles
    ``j / 2**depth`` of the reference marginal (midway between the
    neighbouring order statistics).  Either way every level refines the
    previous one.
    """

    axes: np.ndarray
    K: float
    depth: int
    metric: np.ndarray
    spacing: str = "quantile"
    marginals: list = field(default_factory=list)   # (sorted y, cumulative w) per axis

    def refine(self, levels: int = 1) -> "DyadicPartition":
        return DyadicPartition(self.axes, self.K, self.depth + levels, self.metric,
                               self.spacing, self.marginals)

    def coordinates(self, points) -> np.ndarray:
        return (np.atleast_2d(points) * np.sqrt(self.metric)) @ self.axes.T

    def breakpoints(self, k: int) -> np.ndarray:
        n = 2 ** self.depth
        if self.spacing == "uniform":
            return -self.K + 2 * self.K * np.arange(1, n) / n
        ys, cum = self.marginals[k]
        levels = np.arange(1, n) / n
        i = np.searchsorted(cum, levels * cum[-1], side="left")
        i = np.minimum(i, ys.size - 1)
        nxt = np.minimum(i + 1, ys.size - 1)
        return 0.5 * (ys[i] + ys[nxt])

    def cell_ids(self, points) -> np.ndarray:
        """Integer box index per point (rows of a ``(n, d)`` array)."""
        y = self.coordinates(points)
        return np.stack([np.searchsorted(self.breakpoints(k), y[:, k], side="right")
                         for k in range(self.axes.shape[0])], axis=1)


def dyadic_partition(mu_ref: DiscreteMeasure, K: float, depth: int, d_cell: int = 6,
                     spacing: str = "quantile", axes=None) -> DyadicPartition:
    """Partition aligned with the weighted principal directions of ``mu_ref``
    (in H-scaled coordinates), using the top ``min(d_cell, dim)`` of them,
    unless explicit orthonormal ``axes`` are given."""
    if spacing not in ("quantile", "uniform"):
        raise ValueError(f"unknown spacing {spacing!r}")
    X = mu_ref.points * np.sqrt(mu_ref.metric)
    w = mu_ref.weights
    if axes is None:
        Xc = X - w @ X
        cov = (Xc * w[:, None]).T @ Xc
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(-vals, kind="stable")
        d = min(d_cell, mu_ref.dim)
        axes = vecs[:, order[:d]].T
        # fix the sign so the partition is reproducible across platforms
        signs = np.sign(axes[np.arange(d), np.argmax(np.abs(axes), axis=1)])
        axes = axes * signs[:, None]
    axes = np.atleast_2d(np.asarray(axes, dtype=float))
    Y = X @ axes.T
    marginals = []
    for k in range(axes.shape[0]):
        o = np.argsort(Y[:, k], kind="stable")
        marginals.append((Y[o, k], np.cumsum(w[o])))
    return DyadicPartition(axes, float(K), int(depth), mu_ref.metric.copy(), spacing, marginals)


def _round_weight(total: Fraction, f_rep: float) -> float:
    """Float close to ``total`` with ``w * f_rep <= total * f_rep`` exactly."""
    w = float(total)
    if f_rep > 0 and Fraction(w) > total:
        w = math.nextafter(w, 0.0)
    elif f_rep < 0 and Fraction(w) < total:
        w = math.nextafter(w, math.inf)
    return w


def choquet_approximate(mu_ref: DiscreteMeasure, K_radius: float,
                        cells: DyadicPartition, f: Callable) -> DiscreteMeasure:
    """One atom per occupied cell, weighted by the cell mass and placed at
    the lowest-index support point whose ``f`` does not exceed the
    cell-conditional mean of ``f``.

    Comparisons are done in exact rational arithmetic and cell masses are
    rounded in the direction that keeps ``int f d(output) <= int f d(mu_ref)``
    true exactly (see :func:`eq0_gap`).
    """
    norms = mu_ref.h_norm()
    if np.any(norms > K_radius * (1 + 1e-12)):
        i = int(np.argmax(norms))
        raise EmptyCover(f"atom {i} has |z|_H={norms[i]:.6g} outside the radius {K_radius}")
    fv = _evaluate(f, mu_ref.points)
    if not np.all(np.isfinite(fv)):
        raise UnboundedF("f is not finite on the support")
    ids = cells.cell_ids(mu_ref.points)
    _, inverse = np.unique(ids, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    reps, weights = [], []
    for c in range(inverse.max() + 1):
        members = np.flatnonzero(inverse == c)
        wf = [Fraction(float(x)) for x in mu_ref.weights[members]]
        mass = sum(wf, Fraction(0))
        integral = sum((w * Fraction(float(v)) for w, v in zip(wf, fv[members])), Fraction(0))
        rep = next(int(i) for i in members if Fraction(float(fv[i])) * mass <= integral)
        reps.append(rep)
        weights.append(_round_weight(mass, float(fv[rep])))
    order = np.argsort(reps, kind="stable")
    reps = np.asarray(reps)[order]
    weights = np.asarray(weights)[order]
    return DiscreteMeasure(weights, mu_ref.points[reps].copy(), mu_ref.metric.copy())


def eq0_gap(approx: DiscreteMeasure, mu_ref: DiscreteMeasure, f: Callable) -> Fraction:
    """Exact ``int f d(mu_ref) - int f d(approx)`` (non-negative when the
    approximation inequality holds)."""
    def exact(m):
        vals = _evaluate(f, m.points)
        return sum((Fraction(float(w)) * Fraction(float(v))
                    for w, v in zip(m.weights, vals)), Fraction(0))
    return exact(mu_ref) - exact(approx)


# ------------------------------------------------- annulus decomposition

def annulus_decompose(mu0: DiscreteMeasure, radii) -> list:
    """Split ``mu0`` over ``D_1 = {|z|_H <= r_1}`` and the annuli
    ``D_j = {r_{j-1} < |z|_H <= r_j}``.

    Returns ``[(mu0(D_j), mu0(. | D_j)), ...]`` for the non-empty pieces.
    Recombining the pieces with :func:`recombine` restores ``mu0`` exactly.
    """
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size == 0 or not np.all(np.isfinite(r)) or r[0] <= 0 \
            or np.any(np.diff(r) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    norms = mu0.h_norm()
    if np.any(norms > r[-1]):
        n_out = int(np.sum(norms > r[-1]))
        raise UncoveredAtoms(f"{n_out} atoms lie beyond the last radius {r[-1]}")
    band = np.searchsorted(r, norms, side="left")
    out = []
    for j in range(r.size):
        members = np.flatnonzero(band == j)
        if members.size == 0:
            continue
        comp = DiscreteMeasure.restricted(mu0.weights[members], mu0.points[members],
                                          mu0.metric)
        out.append((comp.mass_total, comp))
    return out


def recombine(components) -> DiscreteMeasure:
    """``sum_j w_j mu_j`` for ``[(w_j, mu_j), ...]``."""
    comps = list(components)
    if not comps:
        raise InvalidMeasure("nothing to recombine")
    weights = np.concatenate([m.scaled_weights(W) for W, m in comps])
    points = np.concatenate([m.points for _, m in comps])
    return DiscreteMeasure(weights, points, comps[0][1].metric.copy())


# ------------------------------------------------ pushforward / tightness

def pushforward_at(ensemble, t: float) -> DiscreteMeasure:
    """Image of the ensemble under evaluation at time ``t``."""
    trajs = ensemble.trajectories
    j = trajs[0].index_of(t)
    pts = np.stack([tr.samples[j] for tr in trajs])
    return DiscreteMeasure(np.asarray(ensemble.weights, dtype=float).copy(), pts,
                           ensemble.metric.copy())


def radius_grid_ceil(r: float, ratio: float = RADIUS_RATIO) -> float:
    """Smallest ``ratio**k`` (integer ``k``) that is ``>= r``; 0 for ``r <= 0``."""
    if r <= 0:
        return 0.0
    k = math.ceil(math.log(r) / math.log(ratio))
    while ratio ** k < r:
        k += 1
    while ratio ** (k - 1) >= r:
        k -= 1
    return ratio ** k


def mass_radius(m: DiscreteMeasure, eps: float) -> float:
    """Smallest ``|z_i|_H^2`` level carrying mass ``>= 1 - eps``."""
    r = m.h_norm_sq()
    order = np.argsort(r, kind="stable")
    cum = np.cumsum(m.weights[order])
    k = int(np.searchsorted(cum, 1.0 - eps - WEIGHT_TOL, side="left"))
    return float(r[order][min(k, r.size - 1)])


def tightness_radius(measures, eps: float, ratio: float = RADIUS_RATIO) -> float:
    """Smallest radius on the grid ``{0} U {ratio**k}`` such that every
    measure has mass ``>= 1 - eps`` on ``{|z|_H^2 <= R}``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    worst = max(mass_radius(m, eps) for m in measures)
    return radius_grid_ceil(worst, ratio)


def gaussian_empirical(n_atoms: int, scales, seed: int, metric=None,
                       radius: float | None = None) -> DiscreteMeasure:
    """Equal-weight sample of a centred Gaussian with per-coordinate standard
    deviations ``scales``; atoms beyond H-radius ``radius`` are pulled back
    onto that sphere."""
    scales = np.asarray(scales, dtype=float)
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_atoms, scales.size)) * scales
    m = DiscreteMeasure.empirical(pts, metric)
    if radius is not None:
        nrm = m.h_norm()
        shrink = np.where(nrm > radius, radius / np.maximum(nrm, 1e-300), 1.0)
        m = DiscreteMeasure(m.weights, pts * shrink[:, None], m.metric)
    return m
