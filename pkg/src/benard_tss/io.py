"""On-disk formats.

Cache container (bases and operators)::

    line 1   b"BENARD-TSS-CACHE\\n"
    line 2   one-line JSON header: {"schema": 1, "kind": ..., "config_hash": ...,
             "meta": {...}, "arrays": [{"name", "shape", "dtype"}, ...]}
    rest     the arrays in header order, C-contiguous little-endian float64

Integer arrays are stored as float64 and restored with their recorded dtype,
so a save/load round trip is bit-exact.

Trajectory CSV: header ``t,h_norm_sq,v_norm_sq[,a_0..,b_0..]``, one row per
sample, values printed with 17 significant digits.  Measure CSV: header
``weight,z_0,...``.  Reports: a ``# generated <timestamp>`` line followed by
JSON with sorted keys, so reports from identical runs differ only in line 1.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

from .basis import Grid, TempBasis, VelBasis
from .errors import CacheError
from .integrator import Trajectory
from .measures import DiscreteMeasure
from .operators import OperatorSet

MAGIC = b"BENARD-TSS-CACHE\n"
SCHEMA = 1


# ------------------------------------------------------------ container

def write_container(path, kind: str, arrays: dict, meta: dict, config_hash: str) -> None:
    specs, blobs = [], []
    for name, arr in arrays.items():
        a = np.asarray(arr)
        specs.append({"name": name, "shape": list(a.shape), "dtype": a.dtype.str})
        blobs.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    header = {"schema": SCHEMA, "kind": kind, "config_hash": config_hash,
              "meta": meta, "arrays": specs}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)


def read_container(path, kind: str | None = None, config_hash: str | None = None):
    """Return ``(arrays, meta, header)``.

    Raises :class:`CacheError` on a malformed file, a different ``kind`` or
    a ``config_hash`` mismatch.
    """
    try:
        with open(path, "rb") as fh:
            if fh.readline() != MAGIC:
                raise CacheError(f"{path}: not a cache container")
            header = json.loads(fh.readline())
            data = fh.read()
    except (OSError, ValueError) as exc:
        raise CacheError(f"{path}: {exc}") from None
    if header.get("schema") != SCHEMA:
        raise CacheError(f"{path}: unsupported schema {header.get('schema')}")
    if kind is not None and header.get("kind") != kind:
        raise CacheError(f"{path}: holds {header.get('kind')!r}, expected {kind!r}")
    if config_hash is not None and header.get("config_hash") != config_hash:
        raise CacheError(f"{path}: config hash mismatch")
    arrays, off = {}, 0
    for spec in header["arrays"]:
        n = math.prod(spec["shape"])
        chunk = data[off:off + 8 * n]
        if len(chunk) != 8 * n:
            raise CacheError(f"{path}: truncated array {spec['name']}")
        a = np.frombuffer(chunk, dtype="<f8").reshape(spec["shape"])
        arrays[spec["name"]] = a.astype(np.dtype(spec["dtype"]))
        off += 8 * n
    if off != len(data):
        raise CacheError(f"{path}: {len(data) - off} trailing bytes")
    return arrays, header["meta"], header


# ------------------------------------------------------- basis / operators

_GRID_SCALARS = ("L1", "L2", "h", "strip_start", "panel_nodes")


def save_basis(path, grid: Grid, vel: VelBasis, temp: TempBasis, *, config_hash: str,
               meta: dict | None = None) -> None:
    """Grid, both bases and their quality figures; velocity fields are
    re-evaluated on load, which reproduces them bit for bit."""
    arrays = {
        "grid.x1": grid.x1, "grid.x2": grid.x2, "grid.x3": grid.x3, "grid.w3": grid.w3,
        "vel.kinds": vel.kinds, "vel.waves": vel.waves, "vel.profiles": vel.profiles,
        "vel.eigenvalues": vel.eigenvalues, "vel.mix": vel.mix, "vel.gram": vel.gram,
        "vel.stiffness": vel.stiffness,
        "temp.modes": temp.modes, "temp.parity": temp.parity,
        "temp.eigenvalues": temp.eigenvalues,
    }
    m = {"grid": {k: getattr(grid, k) for k in _GRID_SCALARS} | {"vertical": grid.vertical},
         "vel": {"M3": vel.M3, "Kh": vel.Kh, "h": vel.h, "L1": vel.L1, "L2": vel.L2,
                 "residuals": vel.residuals, "n_modes": vel.n_modes},
         "temp": {"h": temp.h, "L1": temp.L1, "L2": temp.L2, "n_modes": temp.n}}
    m.update(meta or {})
    write_container(path, "basis", arrays, m, config_hash)


def load_basis(path, config_hash: str | None = None):
    a, m, _ = read_container(path, "basis", config_hash)
    gm = m["grid"]
    grid = Grid(x1=a["grid.x1"], x2=a["grid.x2"], x3=a["grid.x3"], w3=a["grid.w3"],
                L1=gm["L1"], L2=gm["L2"], h=gm["h"], strip_start=gm["strip_start"],
                vertical=gm["vertical"], panel_nodes=int(gm["panel_nodes"]))
    vm = m["vel"]
    vel = VelBasis(kinds=a["vel.kinds"], waves=a["vel.waves"], profiles=a["vel.profiles"],
                   eigenvalues=a["vel.eigenvalues"], mix=a["vel.mix"], fields=None,
                   grads=None, gram=a["vel.gram"], stiffness=a["vel.stiffness"],
                   M3=int(vm["M3"]), Kh=int(vm["Kh"]), h=vm["h"], L1=vm["L1"], L2=vm["L2"],
                   residuals=vm["residuals"])
    vel.fields, vel.grads = vel.evaluate(grid)
    tm = m["temp"]
    temp = TempBasis(modes=a["temp.modes"], parity=a["temp.parity"],
                     eigenvalues=a["temp.eigenvalues"], h=tm["h"], L1=tm["L1"], L2=tm["L2"])
    return grid, vel, temp, m


def save_operators(path, ops: OperatorSet, *, config_hash: str, meta: dict | None = None) -> None:
    m = {"nu": ops.nu, "kappa": ops.kappa, "g_alpha": ops.g_alpha, "gamma": ops.gamma,
         "skew_errors": ops.skew_errors, "n_u": ops.n_u, "n_t": ops.n_t}
    m.update(meta or {})
    write_container(path, "operators", ops.arrays(), m, config_hash)


def load_operators(path, config_hash: str | None = None) -> OperatorSet:
    a, m, _ = read_container(path, "operators", config_hash)
    return OperatorSet(**a, nu=m["nu"], kappa=m["kappa"], g_alpha=m["g_alpha"],
                       gamma=m["gamma"], skew_errors=m["skew_errors"])


# ---------------------------------------------------------------- CSV

def _fmt(x) -> str:
    return "%.17g" % x


def write_trajectory_csv(path, traj: Trajectory, *, stride: int = 1,
                         coefficients: bool = True) -> None:
    n_u = traj.n_u
    n_t = traj.samples.shape[1] - n_u
    cols = ["t", "h_norm_sq", "v_norm_sq"]
    if coefficients:
        cols += [f"a_{i}" for i in range(n_u)] + [f"b_{i}" for i in range(n_t)]
    idx = range(0, traj.samples.shape[0], stride)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for j in idx:
            row = [traj.t0 + j * traj.dt, traj.h_norm_sq[j], traj.v_norm_sq[j]]
            if coefficients:
                row += list(traj.samples[j])
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_trajectory_csv(path):
    """Return ``(times, samples, n_u, header)``; ``samples`` is ``None`` when
    the file has no coefficient columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["t", "h_norm_sq", "v_norm_sq"]:
        raise ValueError(f"{path}: not a trajectory CSV")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    n_u = sum(1 for c in header if c.startswith("a_"))
    samples = data[:, 3:] if len(header) > 3 else None
    return data[:, 0], samples, n_u, header


def trajectory_from_csv(path, ops: OperatorSet) -> Trajectory:
    times, samples, n_u, _ = read_trajectory_csv(path)
    if samples is None:
        raise ValueError(f"{path}: coefficient columns are required")
    if samples.shape[1] != ops.n or n_u != ops.n_u:
        raise ValueError(f"{path}: {samples.shape[1]} coefficients, operators expect {ops.n}")
    if times.size < 2:
        raise ValueError(f"{path}: need at least two samples")
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (times.size - 1)
    if np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise ValueError(f"{path}: time grid is not uniform")
    return Trajectory.from_samples(samples, times[0], dt, ops)


def write_measure_csv(path, m: DiscreteMeasure) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["weight"] + [f"z_{i}" for i in range(m.dim)]) + "\n")
        for w, z in zip(m.weights, m.points):
            fh.write(",".join(_fmt(x) for x in [w, *z]) + "\n")


def read_measure_csv(path, metric=None) -> DiscreteMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "weight":
        raise ValueError(f"{path}: not a measure CSV")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    return DiscreteMeasure(data[:, 0], data[:, 1:], metric)


# ------------------------------------------------------------- reports

def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=True) + "\n"


def write_report(path, report: dict, *, timestamp: str | None = None) -> None:
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    Path(path).write_text(f"# generated {timestamp}\n" + dumps_report(report))


def read_report(path) -> dict:
    lines = Path(path).read_text().splitlines(keepends=True)
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    return json.loads("".join(lines))
