"""Time stepping, trajectories and the energy / a-priori estimate checks.

Time integrals of squared stiffness norms use a log-mean rule per
stiffness eigenmode: on each step ``int y^2`` is replaced by
``dt * (y0^2 - y1^2) / log(y0^2 / y1^2)``.  It is second order like the
trapezoid rule but exact for purely exponential decay, so that for the
linear (B = R = 0) configuration the energy balances close to round-off.
Work terms and the remaining time integrals use the trapezoid rule.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import NonFiniteState, SolverFailure, TimeOffGrid
from .operators import OperatorSet, rhs
from .params import DerivedConstants, Parameters

SCHEMES = ("etdrk2", "imex_euler", "cnab2")
TOL_FACTOR = 10.0
ALL_PAIRS_MAX = 512


# ------------------------------------------------------------ helpers

def phi1(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2 + x * x / 6, np.expm1(xs) / xs)


def phi2(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    series = 0.5 + x / 6 + x * x / 24 + x ** 3 / 120
    return np.where(small, series, (np.expm1(xs) - xs) / (xs * xs))


def log_mean(x, y):
    """Logarithmic mean of non-negative arrays (0 if either is 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = (x > 0) & (y > 0)
    xs = np.where(pos, x, 1.0)
    ys = np.where(pos, y, 1.0)
    d = np.log(ys / xs)
    small = np.abs(d) < 1e-6
    ds = np.where(small, 1.0, d)
    val = np.where(small, xs * (1 + d / 2 + d * d / 6), xs * np.expm1(ds) / ds)
    return np.where(pos, val, 0.0)


def cumulative_trapezoid(values, dt):
    out = np.zeros_like(values, dtype=float)
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


# ------------------------------------------------------------ stepper

class Stepper:
    """Second-order exponential (``etdrk2``) or IMEX stepper.

    The dissipative part ``A`` is handled exactly (``etdrk2``) or implicitly
    with once-factorised matrices (``imex_euler``: backward/forward Euler;
    ``cnab2``: Crank-Nicolson / Adams-Bashforth-2, first step AB1).
    Advection, buoyancy and background terms are explicit.
    """

    def __init__(self, ops: OperatorSet, dt: float, scheme: str = "etdrk2"):
        if not dt > 0:
            raise ValueError("dt must be positive")
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        self.ops, self.dt, self.scheme = ops, dt, scheme
        self._prev = None
        nu, ka = ops.nu, ops.kappa
        if scheme == "etdrk2":
            self._blocks = []
            for Q, lam, c in ((ops.Q1, ops.lam1, nu), (ops.Q2, ops.lam2, ka)):
                x = -c * lam * dt
                self._blocks.append(tuple((Q * v) @ Q.T for v in
                                          (np.exp(x), phi1(x), phi2(x))))
        else:
            theta = 1.0 if scheme == "imex_euler" else 0.5
            self._facs, self._expl = [], []
            for S, c in ((ops.S1, nu), (ops.S2, ka)):
                n = S.shape[0]
                try:
                    self._facs.append(linalg.cho_factor(np.eye(n) + theta * dt * c * S))
                except linalg.LinAlgError as exc:
                    raise SolverFailure(str(exc)) from exc
                self._expl.append(np.eye(n) - (1 - theta) * dt * c * S)

    def _apply(self, mats, z):
        n_u = self.ops.n_u
        return np.concatenate([mats[0] @ z[:n_u], mats[1] @ z[n_u:]])

    def reset(self):
        self._prev = None

    def step(self, z):
        ops, dt = self.ops, self.dt
        N0 = ops.nonlinear(z)
        if self.scheme == "etdrk2":
            E = [b[0] for b in self._blocks]
            P1 = [b[1] for b in self._blocks]
            P2 = [b[2] for b in self._blocks]
            a = self._apply(E, z) + dt * self._apply(P1, N0)
            return a + dt * self._apply(P2, ops.nonlinear(a) - N0)
        if self.scheme == "imex_euler":
            forcing = N0
        else:
            forcing = N0 if self._prev is None else 1.5 * N0 - 0.5 * self._prev
            self._prev = N0
        r = self._apply(self._expl, z) + dt * forcing
        n_u = ops.n_u
        return np.concatenate([linalg.cho_solve(self._facs[0], r[:n_u]),
                               linalg.cho_solve(self._facs[1], r[n_u:])])


def step_imex(ops: OperatorSet, p: Parameters | None, z, dt: float,
              scheme: str = "etdrk2") -> np.ndarray:
    """One step from ``z`` (single-step use; ``cnab2`` starts with AB1)."""
    out = Stepper(ops, dt, scheme).step(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(1)
    return out


# --------------------------------------------------------- trajectory

@dataclass
class Trajectory:
    """Uniformly sampled Galerkin trajectory with cached energy series.

    Cached per sample: ``h_norm_sq``, ``v_norm_sq``, ``u_sq`` (|u|^2),
    ``th_sq`` (|theta|^2), ``work_u``, ``work_t``, ``dual_sq``
    (``|dz/dt|_{V'}^2``).  Cached per step: ``diss_u``/``diss_t``
    (log-mean integrals of ``||u||^2`` and ``||theta||^2``).
    """

    t0: float
    dt: float
    samples: np.ndarray
    n_u: int
    h_norm_sq: np.ndarray
    v_norm_sq: np.ndarray
    u_sq: np.ndarray
    th_sq: np.ndarray
    work_u: np.ndarray
    work_t: np.ndarray
    dual_sq: np.ndarray
    diss_u: np.ndarray
    diss_t: np.ndarray
    gamma: float

    @classmethod
    def from_samples(cls, samples, t0: float, dt: float, ops: OperatorSet) -> "Trajectory":
        Z = np.asarray(samples, dtype=float)
        a, b = ops.split(Z)
        ya = a @ ops.Q1
        yb = b @ ops.Q2
        ea, eb = ya * ya, yb * yb
        diss_u = dt * (log_mean(ea[:-1], ea[1:]) @ ops.lam1)
        diss_t = dt * (log_mean(eb[:-1], eb[1:]) @ ops.lam2)
        return cls(t0=float(t0), dt=float(dt), samples=Z, n_u=ops.n_u,
                   h_norm_sq=ops.h_norm_sq(Z), v_norm_sq=ops.v_norm_sq(Z),
                   u_sq=np.sum(a * a, axis=1), th_sq=np.sum(b * b, axis=1),
                   work_u=ops.velocity_work(Z), work_t=ops.temperature_work(Z),
                   dual_sq=ops.dual_norm_sq(rhs(ops, None, Z)),
                   diss_u=diss_u, diss_t=diss_t, gamma=ops.gamma)

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.shape[0])

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n_steps

    def index_of(self, t: float) -> int:
        k = (t - self.t0) / self.dt
        j = int(round(k))
        if j < 0 or j > self.n_steps or abs(k - j) > 1e-9 * max(1.0, abs(k)):
            raise TimeOffGrid(f"t={t} is not on the grid t0={self.t0}, dt={self.dt}")
        return j

    def at(self, t: float) -> np.ndarray:
        return self.samples[self.index_of(t)]

    def cumulative_v(self) -> np.ndarray:
        """``int_{t0}^{t_n} ||z||_V^2`` at every sample."""
        out = np.zeros(self.samples.shape[0])
        out[1:] = np.cumsum(self.diss_u + self.gamma * self.diss_t)
        return out


def integrate(ops: OperatorSet, p: Parameters | None, z0, t0: float, t_end: float,
              dt: float, scheme: str = "etdrk2") -> Trajectory:
    span = (t_end - t0) / dt
    n = int(round(span))
    if n < 1 or abs(span - n) > 1e-9 * max(1.0, span):
        raise ValueError(f"(t_end - t0)/dt = {span} must be a positive integer")
    z = np.array(z0, dtype=float)
    if z.shape != (ops.n,):
        raise ValueError(f"z0 must have shape ({ops.n},)")
    stepper = Stepper(ops, dt, scheme)
    out = np.empty((n + 1, ops.n))
    out[0] = z
    # overflow is reported as NonFiniteState below, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            z = stepper.step(z)
            if not np.all(np.isfinite(z)):
                raise NonFiniteState(k)
            out[k] = z
    return Trajectory.from_samples(out, t0, dt, ops)


# ------------------------------------------------------------ reports

@dataclass
class CheckResult:
    name: str
    slack: float
    tolerance: float
    passed: bool
    location: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class EstimateReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def energy_scale(traj: Trajectory) -> float:
    """Largest ``|z|_H^2`` along the trajectory (floor 1)."""
    return max(1.0, float(np.max(traj.h_norm_sq)))


def slack_tolerance(traj: Trajectory, scale: float | None = None,
                    factor: float = TOL_FACTOR) -> float:
    """``factor * dt^2 * scale``: the O(dt^2) budget for discrete checks."""
    return factor * traj.dt ** 2 * (energy_scale(traj) if scale is None else scale)


def start_indices(n_steps: int, extra=None, all_pairs_max: int = ALL_PAIRS_MAX) -> np.ndarray:
    """Initial indices ``t'``: all of them for short runs, otherwise a
    logarithmic subsample that always contains ``t0``."""
    if n_steps <= all_pairs_max:
        idx = np.arange(n_steps)
    else:
        idx = np.unique(np.concatenate(
            [[0], np.round(np.geomspace(1, n_steps - 1, 64)).astype(int)]))
    if extra is not None:
        idx = np.unique(np.concatenate([idx, np.asarray(extra, dtype=int)]))
    return idx[idx < n_steps]


def _worst_pair(defect, starts):
    """min over s in starts, t > s of ``defect[s] - defect[t]``."""
    suffix_max = np.maximum.accumulate(defect[::-1])[::-1]
    arg = np.empty(defect.size, dtype=int)
    best = -1
    for k in range(defect.size - 1, -1, -1):
        if best < 0 or defect[k] >= defect[best]:
            best = k
        arg[k] = best
    vals = defect[starts] - suffix_max[starts + 1]
    i = int(np.argmin(vals))
    return float(vals[i]), int(starts[i]), int(arg[starts[i] + 1])


def energy_defects(traj: Trajectory, ops_or_params) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative energy defects for the velocity and temperature balances.

    ``slack(t', t) = defect(t') - defect(t)`` for each component.
    """
    nu, kappa = ops_or_params.nu, ops_or_params.kappa
    du = np.zeros(traj.samples.shape[0])
    dtt = np.zeros_like(du)
    du[1:] = np.cumsum(traj.diss_u)
    dtt[1:] = np.cumsum(traj.diss_t)
    def_u = (0.5 * (traj.u_sq - traj.u_sq[0]) + nu * du
             - cumulative_trapezoid(traj.work_u, traj.dt))
    def_t = (0.5 * (traj.th_sq - traj.th_sq[0]) + kappa * dtt
             - cumulative_trapezoid(traj.work_t, traj.dt))
    return def_u, def_t


def check_energy_inequalities(traj: Trajectory, ops: OperatorSet, p: Parameters | None = None,
                              *, extra_starts=None, tol: float | None = None) -> EstimateReport:
    """Both component energy inequalities from every checked ``t'`` to every
    later grid time."""
    if tol is None:
        tol = slack_tolerance(traj)
    starts = start_indices(traj.n_steps, extra_starts)
    checks = []
    for name, defect in zip(("energy_velocity", "energy_temperature"),
                            energy_defects(traj, ops)):
        slack, s, t = _worst_pair(defect, starts)
        dev = float(np.max(defect) - np.min(defect))
        checks.append(CheckResult(
            name=name, slack=slack, tolerance=tol, passed=slack >= -tol,
            location={"t_prime": traj.t0 + s * traj.dt, "t": traj.t0 + t * traj.dt},
            info={"max_abs_defect_spread": dev, "n_starts": int(starts.size)}))
    return EstimateReport(checks)


def eq39_rhs(h0, dt_elapsed, consts: DerivedConstants):
    decay = np.exp(-consts.eta * consts.lambda0 * dt_elapsed)
    return h0 * decay + consts.R0 * (1.0 - decay)


def check_apriori_bounds(traj: Trajectory, consts: DerivedConstants, p: Parameters, *,
                         extra_starts=None, tol: float | None = None) -> EstimateReport:
    """Absorbing-ball decay, integrated V-norm bound and the fitted constant
    of the time-derivative bound, over all checked ``(t', t)`` pairs."""
    if tol is None:
        tol = 1e-6 + slack_tolerance(traj)
    starts = start_indices(traj.n_steps, extra_starts)
    n = traj.samples.shape[0]
    idx = np.arange(n)
    elapsed = (idx[None, :] - starts[:, None]) * traj.dt          # (S, n)
    valid = idx[None, :] > starts[:, None]
    H = traj.h_norm_sq

    def worst(slack):
        s = np.where(valid, slack, np.inf)
        i, j = np.unravel_index(np.argmin(s), s.shape)
        return float(s[i, j]), {"t_prime": traj.t0 + starts[i] * traj.dt,
                                "t": traj.t0 + j * traj.dt}

    s39, loc39 = worst(eq39_rhs(H[starts][:, None], elapsed, consts) - H[None, :])

    cumV = traj.cumulative_v()
    lhs40 = cumV[None, :] - cumV[starts][:, None]
    rhs40 = H[starts][:, None] / consts.eta + 2.0 * consts.Kb / consts.eta * elapsed
    s40, loc40 = worst(rhs40 - lhs40)

    c41, loc41 = fitted_derivative_constant(traj, consts, p, starts)
    checks = [
        CheckResult("absorbing_decay", s39, tol, s39 >= -tol, loc39),
        CheckResult("dissipation_integral", s40, tol, s40 >= -tol, loc40),
        CheckResult("time_derivative_fit", -c41, math.inf, bool(np.isfinite(c41)), loc41,
                    info={"C_fit": c41}),
    ]
    return EstimateReport(checks)


def fitted_derivative_constant(traj: Trajectory, consts: DerivedConstants, p: Parameters,
                               starts=None) -> tuple[float, dict]:
    """Smallest ``C`` with ``(int ||dz/dt||_{V'}^{4/3})^{3/4} <= C * bracket``
    over all checked pairs."""
    if starts is None:
        starts = start_indices(traj.n_steps)
    nk = p.nu * p.kappa
    lam0 = consts.lambda0
    cum = cumulative_trapezoid(traj.dual_sq ** (2.0 / 3.0), traj.dt)
    n = cum.size
    idx = np.arange(n)
    elapsed = (idx[None, :] - starts[:, None]) * traj.dt
    valid = idx[None, :] > starts[:, None]
    lhs = np.maximum(cum[None, :] - cum[starts][:, None], 0.0) ** 0.75
    bracket = (nk ** (-3 / 8) * traj.h_norm_sq[starts][:, None]
               + nk ** (1 / 8) * lam0 ** (-1.5) * elapsed + nk ** (5 / 8) * lam0 ** (-0.5))
    ratio = np.where(valid, lhs / bracket, -np.inf)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    return float(ratio[i, j]), {"t_prime": traj.t0 + starts[i] * traj.dt,
                                "t": traj.t0 + j * traj.dt}
