"""Acceptance criteria, one test per criterion.

Each test prints (and records for the terminal summary) a single line
``[criterion N] PASS|FAIL <name>: <detail>``.  Run directly with
``python tests/test_acceptance.py`` or via pytest.
"""
import math
import time

import numpy as np
import pytest

from benard_tss import io
from benard_tss.cli import EXIT_OK, run
from benard_tss.engine import (galerkin_v, lift_measure, mixture_ensemble, right_continuity,
                               verify_statistical_solution, _ensemble_tol)
from benard_tss.integrator import (TOL_FACTOR, check_apriori_bounds, check_energy_inequalities,
                                   fitted_derivative_constant, integrate, slack_tolerance)
from benard_tss.measures import (DiscreteMeasure, TestFunctionalSuite, annulus_decompose,
                                 choquet_approximate, dyadic_partition, eq0_gap,
                                 gaussian_empirical, recombine, same_atoms)
from benard_tss.pipeline import build_discretization, quantise, smooth_scales, smooth_state

from conftest import DESK_INI

RESULTS: list = []


def report(n: int, name: str, passed: bool, detail: str) -> None:
    line = f"[criterion {n:2d}] {'PASS' if passed else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)


def _sphere_states(disc, n, seed0, level):
    return [smooth_state(disc.ops, seed0 + i, level) for i in range(n)]


def test_c01_operator_integrity(disc):
    ops, vel, temp, grid = disc.ops, disc.vel, disc.temp, disc.grid
    rng = np.random.default_rng(2024)
    worst = 0.0
    for T, (n1, n2) in ((ops.Tuu, (ops.n_u, ops.n_u)), (ops.Tut, (ops.n_u, ops.n_t))):
        i = rng.integers(0, n1, 10_000)
        j = rng.integers(0, n2, 10_000)
        k = rng.integers(0, n2, 10_000)
        worst = max(worst, float(np.max(np.abs(T[i, j, k] + T[i, k, j]))))
    gram_v = float(np.max(np.abs(vel.gram - np.eye(vel.n_modes))))
    th, _ = temp.evaluate(grid)
    gram_t = float(np.max(np.abs((th * grid.weights) @ th.T - np.eye(temp.n))))
    div = vel.residuals["divergence"]
    ok = worst < 1e-10 and gram_v < 1e-10 and gram_t < 1e-10 and div < 1e-8
    report(1, "operator integrity", ok,
           f"skew {worst:.2e}, gram_u {gram_v:.2e}, gram_theta {gram_t:.2e}, div {div:.2e}")
    assert ok


def test_c02_linear_oracle(disc):
    ops = disc.ops.linear_only()
    errs = []
    for seed in range(3):
        z0 = smooth_state(ops, seed, disc.consts.R0)
        traj = integrate(ops, None, z0, 0.0, 5.0, 0.01)
        ya, yb = ops.Q1.T @ z0[:ops.n_u], ops.Q2.T @ z0[ops.n_u:]
        t = traj.times
        exact = (np.exp(-2 * ops.nu * np.outer(t, ops.lam1)) @ ya ** 2
                 + ops.gamma * np.exp(-2 * ops.kappa * np.outer(t, ops.lam2)) @ yb ** 2)
        errs.append(float(np.max(np.abs(traj.h_norm_sq - exact))))
    ok = max(errs) < 1e-8
    report(2, "linear oracle", ok, f"max |H - exact| over 5 time units = {max(errs):.2e}")
    assert ok


def test_c03_energy_inequalities(disc):
    ops = disc.ops
    worst_ratio = math.inf
    n_fail = 0
    rng = np.random.default_rng(3)
    for seed in range(20):
        z0 = smooth_state(ops, 100 + seed, rng.uniform(0.1, 2.0) * disc.consts.R0)
        traj = integrate(ops, None, z0, 0.0, 1.0, 0.01)
        interior = np.linspace(5, 95, 16).astype(int)
        rep = check_energy_inequalities(traj, ops, extra_starts=interior)
        tol = slack_tolerance(traj)
        n_fail += not rep.passed
        worst_ratio = min(worst_ratio, min(c.slack for c in rep.checks) / tol)
    # the defect spread is the largest violation of the exact balance; its
    # halving ratio is taken in the asymptotic range dt <= 0.005
    rates = []
    for seed in (7, 8, 9):
        z0 = smooth_state(ops, seed, disc.consts.R0)
        spreads = []
        for dt in (0.005, 0.0025, 0.00125):
            rep = check_energy_inequalities(integrate(ops, None, z0, 0.0, 1.0, dt), ops)
            spreads.append(max(c.info["max_abs_defect_spread"] for c in rep.checks))
        rates += [spreads[0] / spreads[1], spreads[1] / spreads[2]]
    ok = n_fail == 0 and all(3.0 < r < 5.5 for r in rates)
    report(3, "energy inequalities", ok,
           f"20 trajectories, failures {n_fail}, worst slack/tol {worst_ratio:.3f}, "
           f"halving ratios {' '.join(f'{r:.2f}' for r in rates)}")
    assert ok


def test_c04_apriori_bounds(disc):
    ops, c, p = disc.ops, disc.consts, disc.params
    n_fail = 0
    for seed in range(10):
        z0 = smooth_state(ops, 200 + seed, (0.2 + 0.2 * seed) * c.R0)
        rep = check_apriori_bounds(integrate(ops, None, z0, 0.0, 1.0, 0.01), c, p)
        n_fail += not (rep["absorbing_decay"].passed and rep["dissipation_integral"].passed)
    z0 = smooth_state(ops, 12, c.R0)
    fit = lambda T, dt: fitted_derivative_constant(integrate(ops, None, z0, 0.0, T, dt), c, p)[0]
    base, long, fine = fit(1.0, 0.01), fit(2.0, 0.01), fit(1.0, 0.005)
    var = max(abs(long / base - 1), abs(fine / base - 1))
    ok = n_fail == 0 and var < 0.2
    report(4, "a priori bounds", ok,
           f"absorbing/dissipation failures {n_fail}; C_fit {base:.4g} "
           f"(2T {long:.4g}, dt/2 {fine:.4g}, variation {100 * var:.1f}%)")
    assert ok


def test_c05_absorbing_ball(disc):
    R0, dt = disc.consts.R0, 0.01
    worst = 0.0
    for z0 in _sphere_states(disc, 64, 300, R0):
        traj = integrate(disc.ops, None, z0, 0.0, 2.0, dt)
        worst = max(worst, float(traj.h_norm_sq.max()))
    bound = R0 * (1 + TOL_FACTOR * dt ** 2)
    ok = worst <= bound
    report(5, "absorbing ball", ok, f"max |z|^2_H {worst:.6g} vs bound {bound:.6g} (R0 {R0:.6g})")
    assert ok


def _random_measure_and_f(rng, k):
    n = int(rng.integers(1, 300))
    d = int(rng.integers(1, 9))
    raw = rng.exponential(size=n) + 1e-4
    metric = rng.uniform(0.5, 5.0, d)
    mu = DiscreteMeasure(raw / math.fsum(raw), rng.standard_normal((n, d)) * rng.uniform(0.1, 4, d),
                         metric)
    v = rng.standard_normal(d)
    kind = k % 4
    if kind == 0:
        f = lambda Z: (Z ** 2) @ metric
    elif kind == 1:
        f = lambda Z: np.exp(0.5 * np.tanh(Z @ v)) + (Z ** 2) @ metric
    elif kind == 2:
        f = lambda Z: np.log1p((Z ** 2) @ metric)
    else:
        f = lambda Z: Z @ v
    return mu, f


def test_c06_choquet_approximation(disc):
    rng = np.random.default_rng(6)
    exact_ok = 0
    for k in range(100):
        mu, f = _random_measure_and_f(rng, k)
        K = float(mu.h_norm().max())
        out = choquet_approximate(mu, K, dyadic_partition(mu, K, int(rng.integers(0, 5))), f)
        exact_ok += eq0_gap(out, mu, f) >= 0
    s = smooth_scales(disc.ops)
    s = s * math.sqrt(0.5 * disc.consts.R0 / float(s ** 2 @ disc.metric))
    curves = []
    for seed in range(3):
        mu = gaussian_empirical(10_000, s, seed, disc.metric)
        K = float(mu.h_norm().max())
        suite = TestFunctionalSuite.create(mu.dim, disc.metric, 16, seed)
        f = lambda Z: (Z ** 2) @ disc.metric
        part = dyadic_partition(mu, K, 1)
        errs = []
        for _ in range(4):
            out = choquet_approximate(mu, K, part, f)
            exact_ok += eq0_gap(out, mu, f) >= 0
            errs.append(suite.distance(out, mu))
            part = part.refine()
        curves.append(errs)
    monotone = all(all(b <= a for a, b in zip(e, e[1:])) for e in curves)
    finest = max(e[-1] for e in curves)
    ok = exact_ok == 112 and monotone and finest < 1e-3
    report(6, "Choquet approximation", ok,
           f"inequality exact {exact_ok}/112, monotone {monotone}, "
           f"levels 1-4 errors {' '.join(f'{x:.1e}' for x in curves[0])}, finest max {finest:.2e}")
    assert ok


def test_c07_decomposition_identity(disc):
    rng = np.random.default_rng(7)
    exact = 0
    for _ in range(100):
        n, d = int(rng.integers(1, 1000)), int(rng.integers(1, 10))
        raw = rng.exponential(size=n) + 1e-6
        mu = DiscreteMeasure(raw / math.fsum(raw), rng.standard_normal((n, d)),
                             rng.uniform(0.5, 3, d))
        top = float(mu.h_norm().max())
        radii = np.sort(rng.uniform(0, top, int(rng.integers(0, 6))))
        radii = [r for r in radii if r > 0] + [top]
        radii = sorted(set(radii))
        exact += same_atoms(recombine(annulus_decompose(mu, radii)), mu)
    mu = gaussian_empirical(48, smooth_scales(disc.ops), 3, disc.metric)
    mu = DiscreteMeasure(mu.weights, mu.points * math.sqrt(
        1.5 * disc.consts.R0 / mu.h_norm_sq().max()), disc.metric)
    direct = lift_measure(mu, disc.ops, disc.params, 0.5, 0.01)
    R = math.sqrt(disc.consts.R0)
    comps = annulus_decompose(mu, [0.4 * R, 0.8 * R, 1.3 * R])
    mixed = mixture_ensemble([(w, lift_measure(c, disc.ops, disc.params, 0.5, 0.01))
                              for w, c in comps])
    by_start = {tr.samples[0].tobytes(): (w, tr) for w, tr in zip(direct.weights, direct.trajectories)}
    lift_ok = len(mixed) == len(direct) and all(
        by_start[tr.samples[0].tobytes()][0] == w
        and by_start[tr.samples[0].tobytes()][1].samples.tobytes() == tr.samples.tobytes()
        for w, tr in zip(mixed.weights, mixed.trajectories))
    ok = exact == 100 and lift_ok
    report(7, "decomposition identity", ok,
           f"exact reconstruction {exact}/100, mixture lift = direct lift {lift_ok} "
           f"({len(comps)} components)")
    assert ok


@pytest.fixture(scope="module")
def stat_run(disc):
    s = smooth_scales(disc.ops)
    s = s * math.sqrt(0.5 * disc.consts.R0 / float(s ** 2 @ disc.metric))
    raw = gaussian_empirical(128, s, 0, disc.metric, radius=math.sqrt(disc.consts.R0))
    mu0 = quantise(raw, 1)
    ens = lift_measure(mu0, disc.ops, disc.params, 1.0, 0.01)
    rep = verify_statistical_solution(ens, mu0, disc.consts, disc.params, disc.ops)
    return raw, mu0, ens, rep


def test_c08_statistical_solution_report(disc, stat_run):
    raw, mu0, ens, rep = stat_run
    f = lambda Z: (Z ** 2) @ disc.metric
    ineq = eq0_gap(mu0, raw, f) >= 0
    ok = (ineq and rep.initial_error == 0.0 and rep.carrier_fraction == 1.0
          and rep["mean_energy"].passed and rep["v_growth_bound"].passed
          and rep["absorbing_envelope"].passed)
    report(8, "statistical-solution report", ok,
           f"{raw.n_atoms} -> {mu0.n_atoms} atoms, initial error {rep.initial_error}, "
           f"carrier {100 * rep.carrier_fraction:.0f}%, mean-energy slack "
           f"{rep['mean_energy'].slack:.3g}, Kb-line slack {rep['v_growth_bound'].slack:.3g}")
    assert ok


def test_c09_v_functional_structure(disc, stat_run):
    _, _, ens, _ = stat_run
    N = max(disc.ops.n_u, disc.ops.n_t)
    times = ens.times[::10]
    mono = True
    for tr in ens.trajectories[:16]:
        for t in times:
            seq = [galerkin_v(tr, float(t), k) for k in range(1, N + 1)]
            mono &= all(b >= a for a, b in zip(seq, seq[1:]))
    tol = _ensemble_tol(ens, TOL_FACTOR)
    rc = [right_continuity(tr, disc.consts.Kb, tol) for tr in ens.trajectories]
    extra = [integrate(disc.ops, None, smooth_state(disc.ops, 900 + i, disc.consts.R0),
                       0.0, 0.5, 0.01) for i in range(8)]
    rc += [right_continuity(tr, disc.consts.Kb, slack_tolerance(tr)) for tr in extra]
    n_rc = sum(r["passed"] for r in rc)
    ok = mono and n_rc == len(rc)
    report(9, "V-functional structure", ok,
           f"galerkin_v monotone {mono} on {16 * len(times)} (trajectory, t) pairs, "
           f"right-continuous {n_rc}/{len(rc)}")
    assert ok


def test_c10_determinism_and_formats(tmp_path, desk_config):
    cfg = tmp_path / "run.ini"
    cfg.write_text(DESK_INI.replace("horizon = 1.0", "horizon = 0.2"))
    out = tmp_path / "out"
    runs = []
    for workers in ("1", "2"):
        code = run(["ensemble", "--config", str(cfg), "--out", str(out), "--workers", workers])
        text = (out / "ensemble" / "report.json").read_text().splitlines()
        runs.append((code, text))
    same_report = runs[0][0] == runs[1][0] == EXIT_OK and runs[0][1][1:] == runs[1][1][1:]
    cache = tmp_path / "cache"
    built = build_discretization(desk_config, cache)
    loaded = build_discretization(desk_config, cache, log=pytest.fail)
    arrays_same = all(loaded.ops.arrays()[k].tobytes() == v.tobytes()
                      for k, v in built.ops.arrays().items())
    basis_same = (loaded.vel.fields.tobytes() == built.vel.fields.tobytes()
                  and loaded.vel.stiffness.tobytes() == built.vel.stiffness.tobytes()
                  and loaded.grid.w3.tobytes() == built.grid.w3.tobytes()
                  and loaded.temp.eigenvalues.tobytes() == built.temp.eigenvalues.tobytes())
    ok = same_report and arrays_same and basis_same
    report(10, "determinism and formats", ok,
           f"report re-run identical {same_report}, operator cache bit-exact {arrays_same}, "
           f"basis cache bit-exact {basis_same}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
