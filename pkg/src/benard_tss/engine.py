"""Finite trajectory statistical solutions.

A :class:`TrajectoryEnsemble` is a weighted set of integrator trajectories
on a shared time grid, i.e. the measure ``sum_i w_i delta_{z_i(.)}`` on path
space.  The checks here are finite-dimensional stand-ins for the conditions
such a measure must satisfy: its time-``t0`` marginal is the prescribed
initial measure, it is carried by solutions, and the time-averaged energy
functional ``V`` behaves as solutions force it to.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AtomIntegrationError, BadModeCount, DimensionMismatch
from .integrator import (CheckResult, EstimateReport, TOL_FACTOR, Trajectory, _jsonable,
                         check_energy_inequalities, cumulative_trapezoid, eq39_rhs,
                         integrate)
from .measures import (DiscreteMeasure, TestFunctionalSuite, h_metric, mass_radius,
                       pushforward_at, radius_grid_ceil, tightness_radius)
from .operators import OperatorSet, truncated_h_norm_sq, weak_residual
from .params import DerivedConstants, Parameters


@dataclass
class TrajectoryEnsemble:
    weights: np.ndarray
    trajectories: list
    metric: np.ndarray
    provenance: dict = field(default_factory=dict)
    source: DiscreteMeasure | None = None     # measure this ensemble was lifted from

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.size != len(self.trajectories) or not self.trajectories:
            raise ValueError("need one positive weight per trajectory")
        first = self.trajectories[0]
        for tr in self.trajectories[1:]:
            if (tr.t0, tr.dt, tr.samples.shape) != (first.t0, first.dt, first.samples.shape):
                raise ValueError("trajectories must share t0, dt and length")

    def __len__(self):
        return len(self.trajectories)

    @property
    def t0(self) -> float:
        return self.trajectories[0].t0

    @property
    def dt(self) -> float:
        return self.trajectories[0].dt

    @property
    def n_steps(self) -> int:
        return self.trajectories[0].n_steps

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    def initial_measure(self) -> DiscreteMeasure:
        return pushforward_at(self, self.t0)


# ---------------------------------------------------------------- lifting

_WORKER_STATE: dict = {}


def _init_worker(ops, p, horizon, dt, t0, scheme):
    _WORKER_STATE.update(ops=ops, p=p, horizon=horizon, dt=dt, t0=t0, scheme=scheme)


def _integrate_atom(args):
    i, z0 = args
    s = _WORKER_STATE
    try:
        return integrate(s["ops"], s["p"], z0, s["t0"], s["t0"] + s["horizon"], s["dt"],
                         s["scheme"]).samples
    except Exception as exc:  # tagged and re-raised in the parent
        return AtomIntegrationError(i, exc)


def lift_measure(mu0: DiscreteMeasure, ops: OperatorSet, p: Parameters, horizon: float,
                 dt: float, *, t0: float = 0.0, scheme: str = "etdrk2", workers: int = 1,
                 provenance: dict | None = None) -> TrajectoryEnsemble:
    """One trajectory per atom of ``mu0``; weights are copied unchanged.

    With ``workers > 1`` atoms are integrated in separate processes; the
    result is bit-identical to the serial run.
    """
    if mu0.dim != ops.n:
        raise DimensionMismatch(f"measure lives in dimension {mu0.dim}, operators in {ops.n}")
    jobs = list(enumerate(mu0.points))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(ops, p, horizon, dt, t0, scheme)) as pool:
            results = list(pool.map(_integrate_atom, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        _init_worker(ops, p, horizon, dt, t0, scheme)
        results = [_integrate_atom(j) for j in jobs]
    trajs = []
    for r in results:
        if isinstance(r, AtomIntegrationError):
            raise r
        trajs.append(Trajectory.from_samples(r, t0, dt, ops))
    return TrajectoryEnsemble(weights=mu0.weights.copy(), trajectories=trajs,
                              metric=h_metric(ops.n_u, ops.n_t, ops.gamma),
                              provenance=dict(provenance or {}), source=mu0)


def mixture_ensemble(parts) -> TrajectoryEnsemble:
    """``sum_j w_j rho_j`` for ``[(w_j, ensemble_j), ...]``."""
    parts = list(parts)
    weights = np.concatenate([e.source.scaled_weights(w) if e.source is not None
                              else w * e.weights for w, e in parts])
    trajs = [tr for _, e in parts for tr in e.trajectories]
    return TrajectoryEnsemble(weights, trajs, parts[0][1].metric.copy())


# ------------------------------------------------------------ V functional

def v_curve(traj: Trajectory, h=None) -> np.ndarray:
    """``V(t_j, z)`` at every grid time: trapezoid average of ``h`` over
    ``[t0, t_j]`` for ``j > 0`` and ``h[0]`` at ``t0``."""
    h = traj.h_norm_sq if h is None else h
    out = np.empty_like(h)
    out[0] = h[0]
    out[1:] = cumulative_trapezoid(h, traj.dt)[1:] / (traj.dt * np.arange(1, h.size))
    return out


def v_functional(traj: Trajectory, t: float) -> float:
    """Time average of ``|z(s)|_H^2`` over ``[t0, t]``; ``|z(t0)|_H^2`` at ``t0``."""
    return float(v_curve(traj)[traj.index_of(t)])


def galerkin_v(traj: Trajectory, t: float, k: int) -> float:
    """``V`` evaluated on ``P_k z``: the first ``k`` velocity and the first
    ``k`` temperature coefficients (fewer when a block is shorter).

    Nondecreasing in ``k`` and equal to :func:`v_functional` once ``k``
    reaches the larger block size.
    """
    n_u = traj.n_u
    n_t = traj.samples.shape[1] - n_u
    N = max(n_u, n_t)
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= N):
        raise BadModeCount(f"k must be an integer in [1, {N}], got {k!r}")
    j = traj.index_of(t)
    h = truncated_h_norm_sq(traj.samples[:j + 1], n_u, traj.gamma, min(k, n_u), min(k, n_t))
    return float(v_curve(traj, h)[j]) if j else float(h[0])


# --------------------------------------------------------- H-conditions

def probe_windows(n_steps: int) -> list:
    """Step counts ``1, 2, 4, ...`` (up to the run length) of the probe
    windows ``[t0, t0 + w dt]``."""
    out, w = [], 1
    while w <= n_steps:
        out.append(w)
        w *= 2
    return out


def right_continuity(traj: Trajectory, Kb: float, tol: float) -> dict:
    """Distances and upper ``V`` deviations on shrinking windows at ``t0``.

    ``D(w) = sup |z(t) - z(t0)|_H^2`` over the first ``w`` steps must vanish
    at least linearly as the window shrinks to one step,
    ``D(1) <= D(2) / 2 + tol`` (a jump right after ``t0`` keeps
    ``D(1) ~ D(2)``), and ``V(t) - V(t0) <= Kb (t - t0) + tol`` in every
    window.
    """
    z0 = traj.samples[0]
    d = truncated_h_norm_sq(traj.samples - z0, traj.n_u, traj.gamma, traj.n_u,
                            traj.samples.shape[1] - traj.n_u)
    dv = v_curve(traj) - traj.h_norm_sq[0]
    wins = probe_windows(traj.n_steps)
    D = np.array([d[:w + 1].max() for w in wins])
    Vup = np.array([dv[:w + 1].max() for w in wins])
    dist_slack = 0.5 * D[1] + tol - D[0] if D.size > 1 else tol
    v_slack = float(np.min(Kb * traj.dt * np.array(wins) + tol - Vup))
    return {"windows": wins, "sup_distance": D, "sup_v_excess": Vup,
            "distance_slack": float(dist_slack), "v_slack": v_slack,
            "passed": bool(dist_slack >= 0 and v_slack >= 0)}


def _ensemble_tol(ensemble: TrajectoryEnsemble, factor: float) -> float:
    scale = max(1.0, max(float(tr.h_norm_sq.max()) for tr in ensemble.trajectories))
    return factor * ensemble.dt ** 2 * scale


def check_h_conditions(ensemble: TrajectoryEnsemble, consts: DerivedConstants,
                       p: Parameters | None = None, *, tol: float | None = None,
                       tol_factor: float = TOL_FACTOR) -> EstimateReport:
    """Right-continuity at ``t0`` per trajectory, the ensemble-uniform bound
    ``V(t) - V(t0) <= Kb (t - t0)`` and the absorbing-ball envelope."""
    if tol is None:
        tol = _ensemble_tol(ensemble, tol_factor)
    times = ensemble.times
    elapsed = times - ensemble.t0

    rc = [right_continuity(tr, consts.Kb, tol) for tr in ensemble.trajectories]
    rc_slack = np.array([min(r["distance_slack"], r["v_slack"]) for r in rc])
    i_rc = int(np.argmin(rc_slack))

    excess = np.stack([v_curve(tr) - tr.h_norm_sq[0] for tr in ensemble.trajectories])
    kb_slack = consts.Kb * elapsed - excess                     # (atoms, times)
    ia, it = np.unravel_index(np.argmin(kb_slack), kb_slack.shape)

    env = np.stack([eq39_rhs(tr.h_norm_sq[0], elapsed, consts) - tr.h_norm_sq
                    for tr in ensemble.trajectories])
    ea, et = np.unravel_index(np.argmin(env), env.shape)

    checks = [
        CheckResult("right_continuity", float(rc_slack[i_rc]), 0.0,
                    bool(all(r["passed"] for r in rc)), {"atom": i_rc, "t": float(times[0])},
                    info={"n_failed": int(sum(not r["passed"] for r in rc)),
                          "windows": rc[i_rc]["windows"],
                          "sup_distance": rc[i_rc]["sup_distance"],
                          "sup_v_excess": rc[i_rc]["sup_v_excess"]}),
        CheckResult("v_growth_bound", float(kb_slack[ia, it]), tol,
                    bool(kb_slack[ia, it] >= -tol), {"atom": int(ia), "t": float(times[it])},
                    info={"Kb": consts.Kb}),
        CheckResult("absorbing_envelope", float(env[ea, et]), tol,
                    bool(env[ea, et] >= -tol), {"atom": int(ea), "t": float(times[et])}),
    ]
    return EstimateReport(checks)


# ------------------------------------------------------------ full report

@dataclass
class StatSolutionReport:
    initial_error: float
    initial_functional_error: float
    carrier: list
    checks: list
    tightness: dict
    tol_factor: float
    suite_seed: int

    @property
    def carrier_fraction(self) -> float:
        return sum(c["passed"] for c in self.carrier) / len(self.carrier)

    @property
    def passed(self) -> bool:
        return (self.initial_error == 0.0 and self.carrier_fraction == 1.0
                and all(c.passed for c in self.checks) and self.tightness["passed"])

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _jsonable({
            "passed": self.passed,
            "initial_error": self.initial_error,
            "initial_functional_error": self.initial_functional_error,
            "carrier_fraction": self.carrier_fraction,
            "carrier": self.carrier,
            "checks": [c.to_dict() for c in self.checks],
            "tightness": self.tightness,
            "tol_factor": self.tol_factor,
            "suite_seed": self.suite_seed,
        })


def carrier_check(traj: Trajectory, ops: OperatorSet, p: Parameters | None = None) -> dict:
    """Weak residual and both energy inequalities for one trajectory."""
    wr = weak_residual(traj, ops, p)
    en = check_energy_inequalities(traj, ops, p)
    return {"residual_passed": wr.passed, "residual": wr.max_relative,
            "residual_tolerance": wr.tolerance,
            "residual_window": [traj.t0 + wr.worst_window[0] * traj.dt,
                                traj.t0 + wr.worst_window[1] * traj.dt],
            "residual_mode": wr.worst_mode,
            "energy_passed": en.passed,
            "energy_slack": min(c.slack for c in en.checks),
            "passed": bool(wr.passed and en.passed)}


def verify_statistical_solution(ensemble: TrajectoryEnsemble, mu0: DiscreteMeasure,
                                consts: DerivedConstants, p: Parameters, ops: OperatorSet, *,
                                suite: TestFunctionalSuite | None = None,
                                tightness_eps: float = 1e-3,
                                tol_factor: float = TOL_FACTOR) -> StatSolutionReport:
    if suite is None:
        suite = TestFunctionalSuite.create(mu0.dim, mu0.metric, seed=0)
    init = ensemble.initial_measure()
    if init.points.shape == mu0.points.shape:
        init_err = float(max(np.max(np.abs(init.points - mu0.points)),
                             np.max(np.abs(init.weights - mu0.weights))))
    else:
        init_err = math.inf
    init_ferr = suite.distance(init, mu0) if math.isfinite(init_err) else math.inf

    carrier = [dict(atom=i, **carrier_check(tr, ops, p))
               for i, tr in enumerate(ensemble.trajectories)]

    tol = _ensemble_tol(ensemble, tol_factor)
    h = check_h_conditions(ensemble, consts, p, tol=tol)

    w = ensemble.weights
    elapsed = ensemble.times - ensemble.t0
    H = np.stack([tr.h_norm_sq for tr in ensemble.trajectories])
    envelope = np.stack([eq39_rhs(tr.h_norm_sq[0], elapsed, consts)
                         for tr in ensemble.trajectories])
    mean_slack = w @ envelope - w @ H
    k = int(np.argmin(mean_slack))
    mean_check = CheckResult("mean_energy", float(mean_slack[k]), tol,
                             bool(mean_slack[k] >= -tol),
                             {"t": float(ensemble.times[k])})

    radius_t = [tightness_radius([pushforward_at(ensemble, t)], tightness_eps)
                for t in ensemble.times]
    r_init = mass_radius(mu0, tightness_eps)
    bound = radius_grid_ceil(max(r_init, consts.R0) + tol)
    tight = {"eps": tightness_eps, "radius": max(radius_t), "initial_radius": r_init,
             "R0": consts.R0, "bound": bound, "passed": bool(max(radius_t) <= bound),
             "radius_by_time_max_index": int(np.argmax(radius_t))}
    return StatSolutionReport(initial_error=init_err, initial_functional_error=init_ferr,
                              carrier=carrier, checks=list(h.checks) + [mean_check],
                              tightness=tight, tol_factor=tol_factor, suite_seed=suite.seed)
