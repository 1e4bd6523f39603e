"""Run configuration: an INI file with a fixed schema.

Sections and keys (defaults in brackets)::

    [physics]        nu kappa g alpha T0 T1 h L1 L2          (all required)
    [norms]          gamma [auto]  epsilon [auto]
    [discretization] Kh [1] Mv [3] M3 [16] n_modes [40]
                     N1 [8] N2 [8] N3 [32] vertical [gauss]
    [time]           t0 [0] horizon [1] dt [0.01] scheme [etdrk2]
    [ensemble]       kind [gaussian: dirac | gaussian | file] seed [0]
                     count [128] scale [0.5] clip [1.0] file []
                     choquet_depth [0] annulus_radii [] tightness_eps [1e-3]
                     n_functionals [16]
    [output]         directory [out] stride [1] coefficients [true]

``scale`` and ``clip`` are fractions of ``R0`` for ``|z|_H^2``;
``annulus_radii`` are fractions of ``sqrt(R0)`` for ``|z|_H``.  Unknown
sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .params import Parameters


@dataclass(frozen=True)
class PhysicsConfig:
    nu: float
    kappa: float
    g: float
    alpha: float
    T0: float
    T1: float
    h: float
    L1: float
    L2: float


@dataclass(frozen=True)
class NormsConfig:
    gamma: float | None = None       # None means "auto"
    epsilon: float | None = None


@dataclass(frozen=True)
class DiscretizationConfig:
    Kh: int = 1
    Mv: int = 3
    M3: int = 16
    n_modes: int = 40
    N1: int = 8
    N2: int = 8
    N3: int = 32
    vertical: str = "gauss"


@dataclass(frozen=True)
class TimeConfig:
    t0: float = 0.0
    horizon: float = 1.0
    dt: float = 0.01
    scheme: str = "etdrk2"


@dataclass(frozen=True)
class EnsembleConfig:
    kind: str = "gaussian"
    seed: int = 0
    count: int = 128
    scale: float = 0.5
    clip: float = 1.0
    file: str = ""
    choquet_depth: int = 0
    annulus_radii: tuple = ()
    tightness_eps: float = 1e-3
    n_functionals: int = 16


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    stride: int = 1
    coefficients: bool = True


@dataclass(frozen=True)
class RunConfig:
    physics: PhysicsConfig
    norms: NormsConfig = field(default_factory=NormsConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ensemble"]["annulus_radii"] = list(d["ensemble"]["annulus_radii"])
        return d

    def parameters(self, gamma: float = 1.0, epsilon: float | None = None) -> Parameters:
        """Physical parameters with explicit ``gamma``/``epsilon`` filled in
        where the config says ``auto``."""
        ph = self.physics
        eps = self.norms.epsilon if self.norms.epsilon is not None else (
            epsilon if epsilon is not None else 0.5 * ph.h)
        return Parameters(nu=ph.nu, kappa=ph.kappa, g=ph.g, alpha=ph.alpha, T0=ph.T0,
                          T1=ph.T1, h=ph.h, L1=ph.L1, L2=ph.L2,
                          gamma=self.norms.gamma if self.norms.gamma is not None else gamma,
                          epsilon=eps)

    def stage_hash(self, *sections: str) -> str:
        """SHA-256 of the canonical JSON of the named sections."""
        d = self.to_dict()
        blob = json.dumps({s: d[s] for s in sections}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, *, seed=None, dt=None, horizon=None, out=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, ensemble=replace(cfg.ensemble, seed=int(seed)))
        if dt is not None or horizon is not None:
            cfg = replace(cfg, time=replace(
                cfg.time, dt=float(dt) if dt is not None else cfg.time.dt,
                horizon=float(horizon) if horizon is not None else cfg.time.horizon))
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=str(out)))
        validate_config(cfg)
        return cfg


_SECTIONS = {
    "physics": PhysicsConfig,
    "norms": NormsConfig,
    "discretization": DiscretizationConfig,
    "time": TimeConfig,
    "ensemble": EnsembleConfig,
    "output": OutputConfig,
}


def _convert(section: str, key: str, raw: str, default):
    raw = raw.strip()
    try:
        if section == "norms":
            return None if raw.lower() == "auto" else float(raw)
        if key == "annulus_radii":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (T0, Kh, ...)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    if "physics" not in cp:
        raise ConfigError("missing [physics] section")
    parts = {}
    for name, cls in _SECTIONS.items():
        known = {f.name: f for f in fields(cls)}
        values = {}
        if name in cp:
            for key, raw in cp[name].items():
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                default = 0.0 if name == "physics" else known[key].default
                values[key] = _convert(name, key, raw, default)
        if name == "physics":
            missing = [k for k in known if k not in values]
            if missing:
                raise ConfigError(f"[physics] is missing {missing}")
        parts[name] = cls(**values)
    cfg = RunConfig(**parts)
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def validate_config(cfg: RunConfig) -> None:
    d, t, e, o = cfg.discretization, cfg.time, cfg.ensemble, cfg.output
    problems = []
    if d.Kh < 0 or d.Mv < 1 or d.M3 < 16 or d.n_modes < 1:
        problems.append("need Kh >= 0, Mv >= 1, M3 >= 16, n_modes >= 1")
    if min(d.N1, d.N2, d.N3) < 1:
        problems.append("grid sizes must be positive")
    if d.vertical not in ("gauss", "uniform"):
        problems.append(f"vertical must be gauss or uniform, not {d.vertical!r}")
    if not (t.dt > 0 and t.horizon > 0):
        problems.append("dt and horizon must be positive")
    else:
        steps = t.horizon / t.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            problems.append("horizon must be an integer multiple of dt")
    if t.scheme not in ("etdrk2", "imex_euler", "cnab2"):
        problems.append(f"unknown scheme {t.scheme!r}")
    if e.kind not in ("dirac", "gaussian", "file"):
        problems.append(f"ensemble kind must be dirac, gaussian or file, not {e.kind!r}")
    if e.kind == "file" and not e.file:
        problems.append("ensemble kind 'file' needs a file path")
    if e.count < 1 or e.scale < 0 or e.clip <= 0 or e.choquet_depth < 0:
        problems.append("need count >= 1, scale >= 0, clip > 0, choquet_depth >= 0")
    if not 0 < e.tightness_eps < 1:
        problems.append("tightness_eps must lie in (0, 1)")
    r = e.annulus_radii
    if any(x <= 0 for x in r) or any(b <= a for a, b in zip(r, r[1:])):
        problems.append("annulus_radii must be positive and increasing")
    if o.stride < 1:
        problems.append("stride must be >= 1")
    if problems:
        raise ConfigError("; ".join(problems))
