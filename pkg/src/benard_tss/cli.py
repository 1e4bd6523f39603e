"""Command-line front end.

Subcommands::

    validate-params   check gamma/epsilon constraints, print derived constants
    build-basis       build (or reuse) the basis and operator caches
    simulate          one trajectory from the configured Dirac state
    ensemble          initial measure -> quantise -> lift -> verify
    verify            re-check a trajectory CSV or a dumped ensemble directory
    report            plot data and summary from a dumped ensemble

Exit status: 0 success, 2 a verification check failed, 1 any other error.
Outputs written by a run that ends in an error are removed.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import io
from .basis import build_temperature_basis, velocity_eigenvalues
from .config import RunConfig, load_config
from .engine import (TrajectoryEnsemble, lift_measure, mixture_ensemble, v_curve,
                     verify_statistical_solution)
from .errors import BenardError
from .integrator import (Trajectory, check_apriori_bounds,
                         check_energy_inequalities, eq39_rhs, integrate)
from .measures import TestFunctionalSuite, annulus_decompose, recombine, same_atoms
from .operators import weak_residual
from .params import derived_constants
from .pipeline import (Discretization, build_discretization, initial_measure, quantise,
                       resolve_parameters, smooth_state)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class Outputs:
    """Tracks files and directories created by this run for cleanup."""

    def __init__(self, root: Path):
        self.root = root
        self.created: list[Path] = []

    def dir(self, *parts) -> Path:
        d = self.root.joinpath(*parts)
        missing = []
        p = d
        while not p.exists():
            missing.append(p)
            p = p.parent
        d.mkdir(parents=True, exist_ok=True)
        self.created.extend(reversed(missing))
        return d

    def file(self, *parts) -> Path:
        f = self.root.joinpath(*parts)
        self.dir(*parts[:-1]) if len(parts) > 1 else self.dir()
        if not f.exists():
            self.created.append(f)
        return f

    def cleanup(self):
        for p in reversed(self.created):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="benard-tss", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI run configuration")
    common.add_argument("--out", help="output directory (overrides [output] directory)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int, help="override [ensemble] seed")
    common.add_argument("--dt", type=float, help="override [time] dt")
    common.add_argument("--horizon", type=float, help="override [time] horizon")
    for name in ("validate-params", "build-basis", "simulate", "ensemble"):
        sub.add_parser(name, parents=[common])
    v = sub.add_parser("verify", parents=[common])
    v.add_argument("path", help="trajectory CSV or ensemble directory")
    r = sub.add_parser("report", parents=[common])
    r.add_argument("path", nargs="?", help="ensemble directory (default OUT/ensemble)")
    return ap


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage error
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    outputs = None
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, dt=args.dt, horizon=args.horizon, out=args.out)
        outputs = Outputs(Path(cfg.output.directory))
        handler = _COMMANDS[args.command]
        return handler(cfg, args, outputs)
    except (BenardError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if outputs is not None:
            outputs.cleanup()
        return EXIT_ERROR


def main():
    sys.exit(run())


# ----------------------------------------------------------- commands

def _disc(cfg: RunConfig, outputs: Outputs) -> Discretization:
    cache = outputs.dir("cache")
    for name in ("basis.cache", "operators.cache"):
        outputs.file("cache", name)
    return build_discretization(cfg, cache)


def _header(cfg: RunConfig, disc: Discretization | None = None) -> dict:
    h = {"seed": cfg.ensemble.seed, "config_hash": cfg.stage_hash(*cfg.to_dict().keys()),
         "config": cfg.to_dict()}
    if disc is not None:
        h["parameters"] = disc.params.base().to_dict()
        h["derived"] = disc.consts.to_dict()
    return h


def cmd_validate(cfg, args, outputs) -> int:
    p = resolve_parameters(cfg)
    d = cfg.discretization
    lam1 = float(velocity_eigenvalues(p, d.Kh, d.M3, d.n_modes)[0])
    lam2 = float(build_temperature_basis(p, d.Kh, d.Mv).lambda2)
    consts = derived_constants(p, lam1, lam2)
    out = {"parameters": p.base().to_dict(), "derived": consts.to_dict(), "valid": True}
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_build_basis(cfg, args, outputs) -> int:
    disc = _disc(cfg, outputs)
    summary = {"n_u": disc.ops.n_u, "n_t": disc.ops.n_t,
               "residuals": disc.vel.residuals, "skew_errors": disc.ops.skew_errors,
               "derived": disc.consts.to_dict()}
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def trajectory_report(traj: Trajectory, disc: Discretization) -> dict:
    wr = weak_residual(traj, disc.ops, disc.params)
    en = check_energy_inequalities(traj, disc.ops, disc.params)
    ap = check_apriori_bounds(traj, disc.consts, disc.params)
    residual = {
        "name": "weak_residual", "slack": wr.tolerance - wr.max_relative,
        "tolerance": wr.tolerance, "passed": wr.passed, "max_relative": wr.max_relative,
        "location": {"t_start": traj.t0 + wr.worst_window[0] * traj.dt,
                     "t_end": traj.t0 + wr.worst_window[1] * traj.dt,
                     "mode": wr.worst_mode},
    }
    checks = [residual] + [c.to_dict() for c in en.checks + ap.checks]
    return {"passed": bool(all(c["passed"] for c in checks)), "checks": checks,
            "t0": traj.t0, "dt": traj.dt, "n_steps": traj.n_steps}


def cmd_simulate(cfg, args, outputs) -> int:
    disc = _disc(cfg, outputs)
    t = cfg.time
    z0 = smooth_state(disc.ops, cfg.ensemble.seed, cfg.ensemble.scale * disc.consts.R0)
    traj = integrate(disc.ops, disc.params, z0, t.t0, t.t0 + t.horizon, t.dt, t.scheme)
    io.write_trajectory_csv(outputs.file("simulate", "trajectory.csv"), traj,
                            stride=cfg.output.stride, coefficients=cfg.output.coefficients)
    rep = {**_header(cfg, disc), **trajectory_report(traj, disc)}
    io.write_report(outputs.file("simulate", "report.json"), rep)
    print(f"simulate: {'PASS' if rep['passed'] else 'FAIL'} "
          f"({traj.n_steps} steps) -> {outputs.root / 'simulate'}")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def _lift(cfg, disc, mu0, workers):
    t = cfg.time
    kw = dict(t0=t.t0, scheme=t.scheme, workers=workers)
    radii = cfg.ensemble.annulus_radii
    if not radii:
        return lift_measure(mu0, disc.ops, disc.params, t.horizon, t.dt, **kw), None
    scale = float(np.sqrt(disc.consts.R0))
    r = [x * scale for x in radii]
    r[-1] = max(r[-1], float(mu0.h_norm().max()))
    parts = annulus_decompose(mu0, r)
    ens = mixture_ensemble((w, lift_measure(m, disc.ops, disc.params, t.horizon, t.dt, **kw))
                           for w, m in parts)
    mixed = recombine(parts)
    info = {"radii": r, "components": len(parts), "weights": [w for w, _ in parts],
            "reconstruction_exact": same_atoms(mixed, mu0),
            "reconstruction_within_ulp": same_atoms(mixed, mu0, max_ulps=1)}
    return ens, (mixed, info)


def _stat_report(ens, mu0, disc, cfg) -> dict:
    suite = TestFunctionalSuite.create(mu0.dim, mu0.metric, cfg.ensemble.n_functionals,
                                       seed=cfg.ensemble.seed)
    rep = verify_statistical_solution(ens, mu0, disc.consts, disc.params, disc.ops,
                                      suite=suite, tightness_eps=cfg.ensemble.tightness_eps)
    return rep.to_dict()


def cmd_ensemble(cfg, args, outputs) -> int:
    disc = _disc(cfg, outputs)
    raw = initial_measure(cfg, disc)
    mu0 = quantise(raw, cfg.ensemble.choquet_depth)
    ens, annulus = _lift(cfg, disc, mu0, args.workers)
    if annulus is not None:
        mu0 = annulus[0]
    root = ("ensemble",)
    io.write_measure_csv(outputs.file(*root, "measure.csv"), mu0)
    outputs.dir(*root, "trajectories")
    for i, tr in enumerate(ens.trajectories):
        io.write_trajectory_csv(outputs.file(*root, "trajectories", f"traj_{i:04d}.csv"), tr,
                                stride=cfg.output.stride, coefficients=cfg.output.coefficients)
    rep = {**_header(cfg, disc), **_stat_report(ens, mu0, disc, cfg),
           "n_atoms": len(ens), "initial_atoms_before_quantisation": raw.n_atoms,
           "choquet_depth": cfg.ensemble.choquet_depth}
    if annulus is not None:
        rep["annulus"] = annulus[1]
    io.write_report(outputs.file(*root, "report.json"), rep)
    print(f"ensemble: {'PASS' if rep['passed'] else 'FAIL'} ({len(ens)} atoms, "
          f"initial error {rep['initial_error']}) -> {outputs.root / 'ensemble'}")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def load_ensemble_dir(path: Path, disc: Discretization):
    mu0 = io.read_measure_csv(path / "measure.csv", disc.metric)
    files = sorted((path / "trajectories").glob("traj_*.csv"))
    if len(files) != mu0.n_atoms:
        raise ValueError(f"{path}: {len(files)} trajectories for {mu0.n_atoms} atoms")
    trajs = [io.trajectory_from_csv(f, disc.ops) for f in files]
    return mu0, TrajectoryEnsemble(mu0.weights.copy(), trajs, disc.metric.copy())


def cmd_verify(cfg, args, outputs) -> int:
    disc = _disc(cfg, outputs)
    path = Path(args.path)
    if path.is_dir():
        mu0, ens = load_ensemble_dir(path, disc)
        rep = {**_header(cfg, disc), **_stat_report(ens, mu0, disc, cfg), "source": str(path)}
    else:
        traj = io.trajectory_from_csv(path, disc.ops)
        rep = {**_header(cfg, disc), **trajectory_report(traj, disc), "source": str(path)}
    io.write_report(outputs.file("verify_report.json"), rep)
    failed = [c for c in rep["checks"] if not c["passed"]]
    for c in failed:
        print(f"FAIL {c['name']}: slack {c['slack']:.6g} at {c['location']}")
    print(f"verify: {'PASS' if rep['passed'] else 'FAIL'} ({path})")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_report(cfg, args, outputs) -> int:
    disc = _disc(cfg, outputs)
    path = Path(args.path) if args.path else outputs.root / "ensemble"
    mu0, ens = load_ensemble_dir(path, disc)
    stored = io.read_report(path / "report.json")
    times = ens.times
    w = ens.weights
    H = np.stack([tr.h_norm_sq for tr in ens.trajectories])
    env = np.stack([eq39_rhs(tr.h_norm_sq[0], times - ens.t0, disc.consts)
                    for tr in ens.trajectories])
    excess = np.stack([v_curve(tr) - tr.h_norm_sq[0] for tr in ens.trajectories])
    with open(outputs.file("plot_data.csv"), "w") as fh:
        fh.write("t,mean_h_norm_sq,mean_envelope,max_h_norm_sq,sup_v_excess,kb_line\n")
        for j, t in enumerate(times):
            row = [t, w @ H[:, j], w @ env[:, j], H[:, j].max(), excess[:, j].max(),
                   disc.consts.Kb * (t - ens.t0)]
            fh.write(",".join("%.17g" % x for x in row) + "\n")
    summary = {**_header(cfg, disc), "source": str(path), "passed": stored["passed"],
               "checks": [{k: c[k] for k in ("name", "slack", "tolerance", "passed")}
                          for c in stored["checks"]],
               "carrier_fraction": stored["carrier_fraction"],
               "initial_error": stored["initial_error"], "tightness": stored["tightness"]}
    io.write_report(outputs.file("summary.json"), summary)
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: slack {c['slack']:.6g}")
    return EXIT_OK if stored["passed"] else EXIT_FAIL


_COMMANDS = {
    "validate-params": cmd_validate,
    "build-basis": cmd_build_basis,
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
    "report": cmd_report,
}


if __name__ == "__main__":
    main()
