"""Stage functions shared by the CLI and the experiment scripts."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .basis import (Grid, TempBasis, VelBasis, build_temperature_basis,
                    build_velocity_basis, quadrature_grid, velocity_eigenvalues)
from .config import RunConfig
from .errors import CacheError
from .measures import (DiscreteMeasure, choquet_approximate, dyadic_partition,
                       gaussian_empirical, h_metric)
from .operators import OperatorSet, assemble_operators
from .params import (DerivedConstants, ValidatedParameters, derived_constants,
                     propose_gamma_epsilon, validate_parameters)

BASIS_SECTIONS = ("physics", "norms", "discretization")


def resolve_parameters(cfg: RunConfig) -> ValidatedParameters:
    """Fill in ``auto`` gamma/epsilon from the analytic spectra and validate.

    The 1D Stokes eigenvalues are grid independent, so ``lambda0`` is known
    before the quadrature grid (which depends on epsilon) is built.
    """
    d = cfg.discretization
    p = cfg.parameters()
    lam1 = float(velocity_eigenvalues(p, d.Kh, d.M3, d.n_modes)[0])
    lam2 = float(build_temperature_basis(p, d.Kh, d.Mv).lambda2)
    lam0 = min(lam1, lam2)
    gamma, eps = propose_gamma_epsilon(p, lam0)
    p = cfg.parameters(gamma=gamma, epsilon=eps)
    return validate_parameters(p, lam0)


@dataclass
class Discretization:
    params: ValidatedParameters
    grid: Grid
    vel: VelBasis
    temp: TempBasis
    ops: OperatorSet
    consts: DerivedConstants

    @property
    def metric(self) -> np.ndarray:
        return h_metric(self.ops.n_u, self.ops.n_t, self.ops.gamma)


def build_discretization(cfg: RunConfig, cache_dir: str | Path | None = None,
                         log=None) -> Discretization:
    """Parameters, grid, bases and operators, reusing caches in ``cache_dir``
    when their config hash matches and rebuilding them otherwise."""
    log = log or (lambda msg: print(msg, file=sys.stderr))
    d = cfg.discretization
    p0 = resolve_parameters(cfg)
    key = cfg.stage_hash(*BASIS_SECTIONS)
    basis_path = ops_path = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        basis_path = cache_dir / "basis.cache"
        ops_path = cache_dir / "operators.cache"

    grid = vel = temp = ops = None
    if basis_path is not None and basis_path.exists():
        try:
            grid, vel, temp, _ = io.load_basis(basis_path, key)
        except CacheError as exc:
            log(f"basis cache not reused ({exc}); rebuilding")
    if grid is None:
        grid = quadrature_grid(p0, d.N1, d.N2, d.N3, vertical=d.vertical)
        vel = build_velocity_basis(p0, d.Kh, d.M3, d.n_modes, grid)
        temp = build_temperature_basis(p0, d.Kh, d.Mv)
        if basis_path is not None:
            cache_dir.mkdir(parents=True, exist_ok=True)
            io.save_basis(basis_path, grid, vel, temp, config_hash=key)
            if ops_path.exists():
                ops_path.unlink()
    # the discrete spectrum is what the estimates see
    p = validate_parameters(p0.base(), min(vel.lambda1, temp.lambda2))
    if ops_path is not None and ops_path.exists():
        try:
            ops = io.load_operators(ops_path, key)
        except CacheError as exc:
            log(f"operator cache not reused ({exc}); rebuilding")
    if ops is None:
        ops = assemble_operators(vel, temp, grid, p)
        if ops_path is not None:
            io.save_operators(ops_path, ops, config_hash=key)
    consts = derived_constants(p, vel.lambda1, temp.lambda2)
    return Discretization(p, grid, vel, temp, ops, consts)


# ------------------------------------------------------- initial measures

def smooth_scales(ops: OperatorSet) -> np.ndarray:
    """Per-coefficient scales ``1 / diag(stiffness)`` (smooth fields)."""
    return 1.0 / np.concatenate([np.diag(ops.S1), np.diag(ops.S2)])


def smooth_state(ops: OperatorSet, seed: int, h_norm_sq: float) -> np.ndarray:
    """Random state with ``1/lambda`` decaying coefficients and the given
    ``|z|_H^2``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(ops.n) * smooth_scales(ops)
    nrm = float(ops.h_norm_sq(z))
    return z * math.sqrt(h_norm_sq / nrm) if h_norm_sq > 0 else np.zeros(ops.n)


def initial_measure(cfg: RunConfig, disc: Discretization) -> DiscreteMeasure:
    """Initial measure from the ``[ensemble]`` section (before quantisation)."""
    e = cfg.ensemble
    ops, R0 = disc.ops, disc.consts.R0
    metric = disc.metric
    if e.kind == "dirac":
        return DiscreteMeasure.dirac(smooth_state(ops, e.seed, e.scale * R0), metric)
    if e.kind == "file":
        return io.read_measure_csv(e.file, metric)
    s = smooth_scales(ops)
    s = s * math.sqrt(e.scale * R0 / float(s ** 2 @ metric)) if e.scale > 0 else s * 0.0
    return gaussian_empirical(e.count, s, e.seed, metric, radius=math.sqrt(e.clip * R0))


def quantise(mu: DiscreteMeasure, depth: int) -> DiscreteMeasure:
    """Choquet-type quantisation of ``mu`` at dyadic ``depth`` with
    ``f = |z|_H^2`` (identity for ``depth == 0``)."""
    if depth == 0:
        return mu
    K = float(mu.h_norm().max())
    metric = mu.metric
    part = dyadic_partition(mu, K, depth)
    return choquet_approximate(mu, K, part, lambda Z: (Z ** 2) @ metric)
