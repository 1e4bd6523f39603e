"""Finite-dimensional Boussinesq operators.

The Galerkin state is a flat vector ``z = [a, b]`` of velocity coefficients
``a`` (length ``n_u``) and temperature coefficients ``b`` (length ``n_t``).
Its time derivative is::

    da_i/dt = -nu (S1 a)_i - sum_jk Tuu[j,k,i] a_j a_k + g alpha (C b)_i + f_i
    db_k/dt = -kappa (S2 b)_k - sum_jm Tut[j,m,k] a_j b_m + (D^T a)_k + g_bg_k

with ``Tuu[i,j,k] = ((phi_i . grad) phi_j, phi_k)``,
``Tut[i,j,k] = ((phi_i . grad) theta_j, theta_k)``,
``C[i,j] = (theta_j e3, phi_i)``,
``D[i,k] = -(u . grad T_b)`` tested against ``theta_k`` for ``u = phi_i``
and ``g_bg[k] = kappa <Lap T_b, theta_k>`` in weak form.  The norm weight
``gamma`` never enters the evolution, only the norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import Grid, TempBasis, VelBasis
from .errors import DimensionMismatch, QuadratureFailure, SkewSymmetryViolation
from .params import Parameters, background_temperature

SKEW_TOL = 1e-10


@dataclass
class PhaseVector:
    a: np.ndarray
    b: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @classmethod
    def from_flat(cls, z, n_u):
        z = np.asarray(z, dtype=float)
        return cls(a=z[:n_u].copy(), b=z[n_u:].copy())


def truncated_h_norm_sq(z, n_u: int, gamma: float, k_u: int, k_t: int):
    """``|P z|_H^2`` keeping the first ``k_u`` velocity and ``k_t``
    temperature coefficients of ``z = [a, b]``."""
    z = np.asarray(z, dtype=float)
    a, b = z[..., :n_u], z[..., n_u:]
    zero = np.zeros(z.shape[:-1])
    su = np.cumsum(a * a, axis=-1)[..., k_u - 1] if k_u > 0 else zero
    st = np.cumsum(b * b, axis=-1)[..., k_t - 1] if k_t > 0 else zero
    return su + gamma * st


@dataclass
class OperatorSet:
    S1: np.ndarray
    S2: np.ndarray
    Tuu: np.ndarray
    Tut: np.ndarray
    C: np.ndarray
    f_const: np.ndarray
    D: np.ndarray
    g_bg: np.ndarray
    nu: float
    kappa: float
    g_alpha: float
    gamma: float
    skew_errors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_u = self.S1.shape[0]
        self.n_t = self.S2.shape[0]
        self.lam1, self.Q1 = np.linalg.eigh(self.S1)
        self.lam2, self.Q2 = np.linalg.eigh(self.S2)
        self._Tuu2 = self.Tuu.reshape(self.n_u * self.n_u, self.n_u)
        self._Tut2 = self.Tut.reshape(self.n_u * self.n_t, self.n_t)

    @property
    def n(self) -> int:
        return self.n_u + self.n_t

    # ---- norms -------------------------------------------------------
    def split(self, z):
        z = np.asarray(z)
        return z[..., :self.n_u], z[..., self.n_u:]

    def h_norm_sq(self, z):
        """Sequential sums, so truncating trailing modes never increases it."""
        return self.truncated_h_norm_sq(z, self.n_u, self.n_t)

    def truncated_h_norm_sq(self, z, k_u: int, k_t: int):
        return truncated_h_norm_sq(z, self.n_u, self.gamma, k_u, k_t)

    def v_norm_sq(self, z):
        a, b = self.split(z)
        return (np.einsum("...i,ij,...j->...", a, self.S1, a)
                + self.gamma * np.einsum("...i,ij,...j->...", b, self.S2, b))

    def dual_norm_sq(self, dz):
        """``|f|_{V1'}^2 + gamma |g|_{V2'}^2`` using stiffness inverses."""
        f, g = self.split(dz)
        fe = f @ self.Q1
        ge = g @ self.Q2
        return np.sum(fe * fe / self.lam1, axis=-1) + self.gamma * np.sum(ge * ge / self.lam2, axis=-1)

    # ---- dynamics ----------------------------------------------------
    def linear(self, z):
        """``-A z`` (viscous and conductive dissipation)."""
        a, b = self.split(z)
        return np.concatenate([-self.nu * a @ self.S1, -self.kappa * b @ self.S2], axis=-1)

    def nonlinear(self, z):
        """``-B(z, z) - R z``: advection, buoyancy and background terms."""
        z = np.asarray(z, dtype=float)
        a, b = self.split(z)
        if z.ndim == 1:
            aa = np.outer(a, a).ravel()
            ab = np.outer(a, b).ravel()
        else:
            aa = (a[:, :, None] * a[:, None, :]).reshape(len(z), -1)
            ab = (a[:, :, None] * b[:, None, :]).reshape(len(z), -1)
        da = -(aa @ self._Tuu2) + self.g_alpha * (b @ self.C.T) + self.f_const
        db = -(ab @ self._Tut2) + a @ self.D + self.g_bg
        return np.concatenate([da, db], axis=-1)

    def linear_only(self) -> "OperatorSet":
        """Copy with advection, buoyancy and background forcing removed."""
        return replace(self, Tuu=np.zeros_like(self.Tuu), Tut=np.zeros_like(self.Tut),
                       C=np.zeros_like(self.C), f_const=np.zeros_like(self.f_const),
                       D=np.zeros_like(self.D), g_bg=np.zeros_like(self.g_bg))

    # ---- energy budget pieces ---------------------------------------
    def velocity_work(self, z):
        """``(g alpha theta e3 + forcing, u)`` per state."""
        a, b = self.split(z)
        return self.g_alpha * np.einsum("...i,ij,...j->...", a, self.C, b) + a @ self.f_const

    def temperature_work(self, z):
        """``-((u.grad) T_b, theta) + kappa <Lap T_b, theta>`` per state."""
        a, b = self.split(z)
        return np.einsum("...i,ik,...k->...", a, self.D, b) + b @ self.g_bg

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in
                ("S1", "S2", "Tuu", "Tut", "C", "f_const", "D", "g_bg")}


def rhs(ops: OperatorSet, p: Parameters | None, z) -> np.ndarray:
    """Time derivative of the Galerkin state (``p`` kept for signature
    symmetry; all coefficients live in ``ops``)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != ops.n:
        raise DimensionMismatch(f"state has length {z.shape[-1]}, expected {ops.n}")
    return ops.linear(z) + ops.nonlinear(z)


def _required_panel_nodes(M3: int) -> int:
    # triple products of clamped profiles reach degree ~3 (M3 + 3)
    return (3 * (M3 + 3) + 2) // 2


def assemble_operators(vel: VelBasis, temp: TempBasis, grid: Grid, p: Parameters, *,
                       check: bool = True) -> OperatorSet:
    Kh_t = int(np.max(np.abs(temp.modes[:, :2]))) if temp.n else 0
    Kh = max(vel.Kh, Kh_t)
    if check:
        if min(grid.x1.size, grid.x2.size) <= 3 * Kh:
            raise QuadratureFailure(
                f"horizontal grid {grid.x1.size}x{grid.x2.size} aliases triple products at Kh={Kh}")
        if grid.vertical == "gauss" and grid.panel_nodes < _required_panel_nodes(vel.M3):
            raise QuadratureFailure(
                f"{grid.panel_nodes} Gauss nodes per panel < {_required_panel_nodes(vel.M3)}")
    if vel.fields.shape[-1] != grid.size:
        raise DimensionMismatch("velocity basis was built on a different grid")

    w = grid.weights
    U, dU = vel.fields, vel.grads                  # (Nu,3,G), (Nu,3,3,G)
    th, dth = temp.evaluate(grid)                  # (Nt,G), (Nt,3,G)
    n_u, n_t = U.shape[0], th.shape[0]
    Uw = (U * w).reshape(n_u, -1)
    thw = th * w

    Tuu = np.empty((n_u, n_u, n_u))
    Tut = np.empty((n_u, n_t, n_t))
    for i in range(n_u):
        adv = np.einsum("mg,jlmg->jlg", U[i], dU)  # (phi_i . grad) phi_j
        Tuu[i] = adv.reshape(n_u, -1) @ Uw.T
        advt = np.einsum("mg,jmg->jg", U[i], dth)
        Tut[i] = advt @ thw.T

    dth_w = (dth * w).reshape(n_t, -1)
    S2 = dth_w @ dth.reshape(n_t, -1).T
    S2 = 0.5 * (S2 + S2.T)
    u3w = U[:, 2] * w
    C = u3w @ th.T
    _, _, X3 = grid.mesh()
    Tb = background_temperature(p, X3)
    f_const = p.g_alpha * (u3w @ (Tb + p.T0 - p.T1))
    slope = (p.T1 - p.T0) / p.epsilon
    strip = grid.strip_mask
    D = -slope * ((u3w * strip) @ th.T)
    g_bg = -p.kappa * slope * ((dth[:, 2] * w * strip).sum(axis=1))

    skew_uu = float(np.max(np.abs(Tuu + Tuu.transpose(0, 2, 1))))
    skew_ut = float(np.max(np.abs(Tut + Tut.transpose(0, 2, 1)))) if n_t else 0.0
    if check and max(skew_uu, skew_ut) > SKEW_TOL:
        raise SkewSymmetryViolation(
            f"skew residuals Tuu={skew_uu:.3g}, Tut={skew_ut:.3g} exceed {SKEW_TOL}")
    return OperatorSet(S1=vel.stiffness.copy(), S2=S2, Tuu=Tuu, Tut=Tut, C=C,
                       f_const=f_const, D=D, g_bg=g_bg, nu=p.nu, kappa=p.kappa,
                       g_alpha=p.g_alpha, gamma=p.gamma,
                       skew_errors={"Tuu": skew_uu, "Tut": skew_ut})


# ------------------------------------------------------ weak residual

RESIDUAL_TOL_FACTOR = 1.0


@dataclass
class WeakResidual:
    """Weak-form residual against ``basis mode x sin^4 window`` tests.

    ``relative`` holds, per window, the largest modal residual divided by
    the largest modal magnitude of the integrand; ``tolerance`` is
    ``(dt / window_length)^2``, which integrator output stays well below.
    """

    residual: np.ndarray        # (n_windows, n) raw integrals
    scale: np.ndarray           # (n_windows,) normaliser per window
    relative: np.ndarray        # (n_windows,)
    windows: list               # (start_step, end_step)
    tolerance: float
    max_abs: float
    max_relative: float
    worst_window: tuple
    worst_mode: int

    @property
    def passed(self) -> bool:
        return self.max_relative <= self.tolerance


def _trapz_weights(m, dt):
    w = np.full(m, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def residual_windows(n_steps: int, n_windows: int = 8):
    """Half-overlapping windows whose width is a fixed fraction of the run.

    The last window is shifted to end on the final sample so every interior
    sample sits well inside at least one window.
    """
    width = min(n_steps, max(8, n_steps // n_windows))
    width -= width % 2
    if width < 2:
        raise ValueError(f"need at least 2 steps for a residual window, got {n_steps}")
    stride = width // 2
    starts = list(range(0, n_steps - width + 1, stride))
    if starts[-1] + width < n_steps:
        starts.append(n_steps - width)
    return [(s, s + width) for s in starts]


def weak_residual(traj, ops: OperatorSet, p: Parameters | None = None, *,
                  n_windows: int = 8) -> WeakResidual:
    """``int (-z phi' - rhs(z) phi) dt`` per mode and window by trapezoid.

    Vanishes for exact solutions since every window test function vanishes
    with its derivative at both ends; integrator output leaves an
    ``O(dt^2)`` residue.  Samples at the very ends of the run are invisible
    to compactly supported tests, so the energy checks cover those.
    """
    Z = traj.samples
    dt = traj.dt
    F = rhs(ops, p, Z)
    wins = residual_windows(Z.shape[0] - 1, n_windows)
    R = np.empty((len(wins), Z.shape[1]))
    S = np.empty(len(wins))
    for w_i, (s, e) in enumerate(wins):
        m = e - s + 1
        T = (e - s) * dt
        x = np.arange(m) / (m - 1)
        sx, cx = np.sin(math.pi * x), np.cos(math.pi * x)
        phi = sx ** 4
        dphi = (4 * math.pi / T) * sx ** 3 * cx
        tw = _trapz_weights(m, dt)
        Zw, Fw = Z[s:e + 1], F[s:e + 1]
        R[w_i] = tw @ (-Zw * dphi[:, None] - Fw * phi[:, None])
        S[w_i] = np.max(tw @ (np.abs(Zw) * np.abs(dphi)[:, None] + np.abs(Fw) * phi[:, None]))
    rel = np.abs(R) / np.maximum(S, np.finfo(float).tiny)[:, None]
    wi, mi = np.unravel_index(np.argmax(rel), rel.shape)
    width = wins[0][1] - wins[0][0]
    tol = RESIDUAL_TOL_FACTOR / width ** 2
    return WeakResidual(residual=R, scale=S, relative=rel.max(axis=1), windows=wins,
                        tolerance=tol, max_abs=float(np.max(np.abs(R))),
                        max_relative=float(rel[wi, mi]),
                        worst_window=wins[wi], worst_mode=int(mi))
