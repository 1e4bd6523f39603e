"""Galerkin bases on the periodic channel ``(0,L1) x (0,L2) x (0,h)``.

Horizontal dependence uses real trigonometric functions normalised in
L2 of the periodic cell.  Temperature modes are the exact Dirichlet
Laplacian eigenfunctions.  Velocity modes solve a one-dimensional Stokes
eigenproblem per horizontal wavevector with a Legendre-Galerkin vertical
discretisation (Shen's Dirichlet and clamped bases): shear modes for
``k = 0``, toroidal and poloidal potentials otherwise, so every field is
divergence free and no-slip by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as leg
from scipy import linalg

from .errors import ResolutionTooLow, StripUnderresolved
from .params import Parameters

STRIP_MIN = 8

# velocity mode kinds
SHEAR_X, SHEAR_Y, TOROIDAL, POLOIDAL = 0, 1, 2, 3
COS, SIN = 0, 1


# ---------------------------------------------------------------- grid

@dataclass
class Grid:
    """Tensor quadrature grid, flattened in C order ``(x1, x2, x3)``."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    w3: np.ndarray
    L1: float
    L2: float
    h: float
    strip_start: float
    vertical: str
    panel_nodes: int

    @property
    def shape(self):
        return (self.x1.size, self.x2.size, self.x3.size)

    @property
    def size(self):
        return self.x1.size * self.x2.size * self.x3.size

    @property
    def weights(self) -> np.ndarray:
        w12 = (self.L1 / self.x1.size) * (self.L2 / self.x2.size)
        return np.broadcast_to(w12 * self.w3, self.shape).ravel()

    def mesh(self):
        X1, X2, X3 = np.meshgrid(self.x1, self.x2, self.x3, indexing="ij")
        return X1.ravel(), X2.ravel(), X3.ravel()

    @property
    def strip_mask(self) -> np.ndarray:
        """Nodes in the background-profile strip ``[h - eps, h]``."""
        m3 = self.x3 >= self.strip_start
        return np.broadcast_to(m3, self.shape).ravel()

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.ravel(values)))


def _gauss_panel(a, b, n):
    xi, wi = leg.leggauss(n)
    return 0.5 * (b - a) * xi + 0.5 * (a + b), 0.5 * (b - a) * wi


def quadrature_grid(p: Parameters, N1: int, N2: int, N3: int, *,
                    vertical: str = "gauss", strip_min: int = STRIP_MIN) -> Grid:
    """Build the quadrature grid.

    ``vertical="gauss"`` puts ``N3`` Gauss-Legendre nodes on each of the two
    panels ``[0, h-eps]`` and ``[h-eps, h]`` so that piecewise polynomial
    integrands (including the background strip terms) are integrated
    exactly.  ``vertical="uniform"`` uses ``N3`` equispaced nodes with
    trapezoid weights.
    """
    if N1 < 4 or N2 < 4 or N1 % 2 or N2 % 2:
        raise ValueError("N1, N2 must be even and >= 4")
    if N3 < 16:
        raise ValueError("N3 must be >= 16")
    x1 = p.L1 * np.arange(N1) / N1
    x2 = p.L2 * np.arange(N2) / N2
    s = p.h - p.epsilon
    if vertical == "gauss":
        if N3 < strip_min:
            raise StripUnderresolved(f"{N3} nodes in strip < {strip_min}")
        za, wa = _gauss_panel(0.0, s, N3)
        zb, wb = _gauss_panel(s, p.h, N3)
        x3 = np.concatenate([za, zb])
        w3 = np.concatenate([wa, wb])
    elif vertical == "uniform":
        x3 = np.linspace(0.0, p.h, N3)
        w3 = np.full(N3, p.h / (N3 - 1))
        w3[0] *= 0.5
        w3[-1] *= 0.5
        n_strip = int(np.count_nonzero(x3 >= s))
        if n_strip < strip_min:
            raise StripUnderresolved(
                f"only {n_strip} of {N3} uniform nodes in [h-eps, h]; need {strip_min}")
    else:
        raise ValueError(f"unknown vertical rule {vertical!r}")
    return Grid(x1=x1, x2=x2, x3=x3, w3=w3, L1=p.L1, L2=p.L2, h=p.h,
                strip_start=s, vertical=vertical, panel_nodes=N3)


# --------------------------------------------------------- horizontal

def horizontal_functions(Kh: int):
    """Real horizontal functions ``(k1, k2, parity)`` with ``|k1|,|k2| <= Kh``.

    One constant plus a cos/sin pair per wavevector in the upper half
    plane: ``(2 Kh + 1)**2`` functions in total.
    """
    out = [(0, 0, COS)]
    for k1 in range(0, Kh + 1):
        for k2 in range(-Kh, Kh + 1):
            if k1 == 0 and k2 <= 0:
                continue
            out.append((k1, k2, COS))
            out.append((k1, k2, SIN))
    return out


def _wavevector(k1, k2, L1, L2):
    return 2 * math.pi * k1 / L1, 2 * math.pi * k2 / L2


def horizontal_values(k1, k2, parity, L1, L2, X1, X2):
    """Return ``c, dc/dx1, dc/dx2, d2c/dx1dx1, d2c/dx1dx2, d2c/dx2dx2``."""
    q1, q2 = _wavevector(k1, k2, L1, L2)
    if k1 == 0 and k2 == 0:
        c = np.full_like(X1, 1.0 / math.sqrt(L1 * L2))
        z = np.zeros_like(X1)
        return c, z, z, z, z, z
    nrm = math.sqrt(2.0 / (L1 * L2))
    ph = q1 * X1 + q2 * X2
    cs, sn = nrm * np.cos(ph), nrm * np.sin(ph)
    if parity == COS:
        c, d = cs, -sn      # d = derivative of c w.r.t. the phase
    else:
        c, d = sn, cs
    return c, q1 * d, q2 * d, -q1 * q1 * c, -q1 * q2 * c, -q2 * q2 * c


# ------------------------------------------------------- temperature

@dataclass
class TempBasis:
    """Exact eigenfunctions ``c(x1,x2) * sqrt(2/h) sin(m pi x3 / h)``."""

    modes: np.ndarray           # (N, 3): k1, k2, m
    parity: np.ndarray          # (N,)
    eigenvalues: np.ndarray     # (N,)
    h: float
    L1: float
    L2: float

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[0])

    def evaluate(self, grid: Grid):
        """Values ``(N, G)`` and gradients ``(N, 3, G)`` on ``grid``."""
        X1, X2, X3 = grid.mesh()
        G = X1.size
        vals = np.empty((self.n, G))
        grads = np.empty((self.n, 3, G))
        vn = math.sqrt(2.0 / self.h)
        for i, ((k1, k2, m), par) in enumerate(zip(self.modes, self.parity)):
            c, c1, c2, *_ = horizontal_values(k1, k2, par, self.L1, self.L2, X1, X2)
            kz = m * math.pi / self.h
            s, ds = vn * np.sin(kz * X3), vn * kz * np.cos(kz * X3)
            vals[i] = c * s
            grads[i, 0] = c1 * s
            grads[i, 1] = c2 * s
            grads[i, 2] = c * ds
        return vals, grads


def temperature_mode_count(Kh: int, Mv: int) -> int:
    """``(2 Kh + 1)**2`` real horizontal functions times ``Mv`` sines."""
    return (2 * Kh + 1) ** 2 * Mv


def build_temperature_basis(p: Parameters, Kh: int, Mv: int) -> TempBasis:
    if Kh < 0 or Mv < 1:
        raise ValueError("need Kh >= 0 and Mv >= 1")
    rows, par, lam = [], [], []
    for k1, k2, pa in horizontal_functions(Kh):
        q1, q2 = _wavevector(k1, k2, p.L1, p.L2)
        for m in range(1, Mv + 1):
            rows.append((k1, k2, m))
            par.append(pa)
            lam.append(q1 * q1 + q2 * q2 + (m * math.pi / p.h) ** 2)
    lam = np.array(lam)
    order = _stable_order(lam)
    return TempBasis(modes=np.array(rows, dtype=np.int64)[order],
                     parity=np.array(par, dtype=np.int64)[order],
                     eigenvalues=lam[order], h=p.h, L1=p.L1, L2=p.L2)


def _stable_order(lam):
    # rounding keeps analytically degenerate eigenvalues in enumeration order
    key = np.round(lam, 9)
    return np.lexsort((np.arange(lam.size), key))


# ---------------------------------------------- vertical Legendre bases

def shen_dirichlet(M: int) -> np.ndarray:
    """Legendre coefficients (rows) of ``L_n - L_{n+2}``, n < M."""
    B = np.zeros((M, M + 2))
    for n in range(M):
        B[n, n] = 1.0
        B[n, n + 2] = -1.0
    return B


def shen_clamped(M: int) -> np.ndarray:
    """Legendre coefficients of Shen's biharmonic basis (value and slope
    vanish at both ends)."""
    B = np.zeros((M, M + 4))
    for n in range(M):
        B[n, n] = 1.0
        B[n, n + 2] = -2.0 * (2 * n + 5) / (2 * n + 7)
        B[n, n + 4] = (2 * n + 3) / (2 * n + 7)
    return B


def _profile_derivs(B, xi, h, order):
    """Rows of ``d^k/dz^k`` of each basis profile at ``xi`` for k <= order."""
    out = []
    scale = 2.0 / h
    for k in range(order + 1):
        Bk = B
        for _ in range(k):
            Bk = np.array([leg.legder(row) for row in Bk])
        out.append(leg.legvander(xi, Bk.shape[1] - 1) @ Bk.T * scale ** k)
    return out


def stokes_profiles(kind: int, q: float, M: int, h: float):
    """Solve the vertical Stokes eigenproblem for one horizontal wavenumber.

    Returns ascending eigenvalues and Legendre coefficient rows of the
    profiles, normalised so the corresponding 3D field has unit L2 norm.
    ``kind`` is SHEAR_X/SHEAR_Y/TOROIDAL (``-f'' + q^2 f``, Dirichlet) or
    POLOIDAL (``P'''' - 2 q^2 P'' + q^4 P`` against ``-P'' + q^2 P``, clamped).
    """
    n_q = M + 8
    xi, wq = leg.leggauss(n_q)
    wz = 0.5 * h * wq
    if kind == POLOIDAL:
        B = shen_clamped(M)
        P, dP, d2P = _profile_derivs(B, xi, h, 2)
        mass = (dP.T * wz) @ dP + q * q * (P.T * wz) @ P
        stiff = ((d2P.T * wz) @ d2P + 2 * q * q * (dP.T * wz) @ dP
                 + q ** 4 * (P.T * wz) @ P)
    else:
        B = shen_dirichlet(M)
        P, dP = _profile_derivs(B, xi, h, 1)
        mass = (P.T * wz) @ P
        stiff = (dP.T * wz) @ dP + q * q * mass
    lam, X = linalg.eigh(stiff, mass)
    return lam, X.T @ B


@dataclass
class VelBasis:
    """Divergence-free no-slip velocity modes evaluated on a grid.

    ``fields`` is ``(N, 3, G)``, ``grads[i, l, m]`` is ``d u_l / d x_m`` of
    mode ``i``.  ``mix`` is the orthonormalisation applied to the raw
    eigen-profiles (close to the identity).
    """

    kinds: np.ndarray           # (N,) kind codes
    waves: np.ndarray           # (N, 3): k1, k2, parity
    profiles: np.ndarray        # (N, P) Legendre coefficients in xi
    eigenvalues: np.ndarray     # (N,) 1D Galerkin eigenvalues
    mix: np.ndarray             # (N, N)
    fields: np.ndarray
    grads: np.ndarray
    gram: np.ndarray
    stiffness: np.ndarray
    M3: int
    Kh: int
    h: float
    L1: float
    L2: float
    residuals: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return self.kinds.size

    @property
    def lambda1(self) -> float:
        return float(np.linalg.eigvalsh(self.stiffness)[0])

    def evaluate(self, grid: Grid):
        f, g = _eval_raw_velocity(self.kinds, self.waves, self.profiles,
                                  self.h, self.L1, self.L2, grid)
        f = np.einsum("ij,jcg->icg", self.mix, f)
        g = np.einsum("ij,jcdg->icdg", self.mix, g)
        return f, g


def _candidate_velocity_modes(p: Parameters, Kh: int, M3: int):
    kinds, waves, profs, lams = [], [], [], []
    width = M3 + 4
    for k1, k2, par in horizontal_functions(Kh):
        q1, q2 = _wavevector(k1, k2, p.L1, p.L2)
        q = math.hypot(q1, q2)
        block_kinds = (SHEAR_X, SHEAR_Y) if q == 0 else (TOROIDAL, POLOIDAL)
        for kind in block_kinds:
            lam, C = stokes_profiles(kind, q, M3, p.h)
            C = np.pad(C, ((0, 0), (0, width - C.shape[1])))
            for j in range(lam.size):
                kinds.append(kind)
                waves.append((k1, k2, par))
                profs.append(C[j])
                lams.append(lam[j])
    return (np.array(kinds, dtype=np.int64), np.array(waves, dtype=np.int64),
            np.array(profs), np.array(lams))


def velocity_mode_count(Kh: int, M3: int) -> int:
    return (2 * Kh + 1) ** 2 * 2 * M3


def velocity_eigenvalues(p: Parameters, Kh: int, M3: int, n_modes: int) -> np.ndarray:
    """The ``n_modes`` smallest 1D Galerkin Stokes eigenvalues, ascending."""
    _, _, _, lam = _candidate_velocity_modes(p, Kh, M3)
    return np.sort(lam)[:n_modes]


def _eval_raw_velocity(kinds, waves, profiles, h, L1, L2, grid: Grid):
    X1, X2, X3 = grid.mesh()
    xi3 = 2.0 * grid.x3 / h - 1.0
    n3 = grid.x3.size
    N = kinds.size
    G = X1.size
    fields = np.zeros((N, 3, G))
    grads = np.zeros((N, 3, 3, G))
    rep = X1.size // n3
    sc = 2.0 / h

    def prof(c, k):
        for _ in range(k):
            c = leg.legder(c)
        return np.tile(leg.legval(xi3, c) * sc ** k, rep)

    for i in range(N):
        k1, k2, par = waves[i]
        c, c1, c2, c11, c12, c22 = horizontal_values(k1, k2, par, L1, L2, X1, X2)
        coef = profiles[i]
        kind = kinds[i]
        if kind in (SHEAR_X, SHEAR_Y):
            U, dU = prof(coef, 0), prof(coef, 1)
            comp = 0 if kind == SHEAR_X else 1
            fields[i, comp] = U * c
            grads[i, comp, 2] = dU * c
            continue
        q = math.hypot(*_wavevector(k1, k2, L1, L2))
        if kind == TOROIDAL:
            psi, dpsi = prof(coef, 0) / q, prof(coef, 1) / q
            fields[i, 0] = psi * c2
            fields[i, 1] = -psi * c1
            grads[i, 0, 0] = psi * c12
            grads[i, 0, 1] = psi * c22
            grads[i, 0, 2] = dpsi * c2
            grads[i, 1, 0] = -psi * c11
            grads[i, 1, 1] = -psi * c12
            grads[i, 1, 2] = -dpsi * c1
        else:
            P, dP, d2P = prof(coef, 0) / q, prof(coef, 1) / q, prof(coef, 2) / q
            fields[i, 0] = dP * c1
            fields[i, 1] = dP * c2
            fields[i, 2] = q * q * P * c
            grads[i, 0, 0] = dP * c11
            grads[i, 0, 1] = dP * c12
            grads[i, 0, 2] = d2P * c1
            grads[i, 1, 0] = dP * c12
            grads[i, 1, 1] = dP * c22
            grads[i, 1, 2] = d2P * c2
            grads[i, 2, 0] = q * q * P * c1
            grads[i, 2, 1] = q * q * P * c2
            grads[i, 2, 2] = q * q * dP * c
    return fields, grads


def _gram(fields, w):
    F = fields.reshape(fields.shape[0], -1)
    W = np.tile(w, fields.shape[1])
    return (F * W) @ F.T


def build_velocity_basis(p: Parameters, Kh: int, M3: int, n_modes: int,
                         grid: Grid, *, tol: float = 1e-8) -> VelBasis:
    """Collect the ``n_modes`` lowest Stokes modes, orthonormalise them in L2
    on ``grid`` and assemble the stiffness matrix."""
    if M3 < 16:
        raise ValueError("M3 must be >= 16")
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    kinds, waves, profs, lams = _candidate_velocity_modes(p, Kh, M3)
    if n_modes > lams.size:
        raise ValueError(f"only {lams.size} candidate modes for Kh={Kh}, M3={M3}")
    order = _stable_order(lams)[:n_modes]
    kinds, waves, profs, lams = kinds[order], waves[order], profs[order], lams[order]

    raw_f, raw_g = _eval_raw_velocity(kinds, waves, profs, p.h, p.L1, p.L2, grid)
    w = grid.weights
    G0 = _gram(raw_f, w)
    ev, Q = np.linalg.eigh(G0)
    mix = (Q / np.sqrt(ev)) @ Q.T          # symmetric (Loewdin) G^{-1/2}
    fields = np.einsum("ij,jcg->icg", mix, raw_f)
    grads = np.einsum("ij,jcdg->icdg", mix, raw_g)
    gram = _gram(fields, w)
    Gf = grads.reshape(n_modes, -1)
    stiff = (Gf * np.tile(w, 9)) @ Gf.T
    stiff = 0.5 * (stiff + stiff.T)

    div = grads[:, 0, 0] + grads[:, 1, 1] + grads[:, 2, 2]
    fnorm = np.sqrt(np.max(np.sum(fields ** 2, axis=1), axis=1))
    div_res = float(np.max(np.max(np.abs(div), axis=1) / fnorm))
    wall = np.isclose(grid.x3, 0.0) | np.isclose(grid.x3, p.h)
    if wall.any():
        fw = fields.reshape(n_modes, 3, *grid.shape)[..., wall]
        bnd_res = float(np.max(np.abs(fw)))
    else:
        # no wall nodes on a Gauss grid: evaluate the profiles at the walls
        bnd_res = _wall_residual(profs, kinds, p, waves)
    gram_err = float(np.max(np.abs(gram - np.eye(n_modes))))
    if div_res > tol or bnd_res > tol:
        raise ResolutionTooLow(
            f"divergence residual {div_res:.3g}, boundary residual {bnd_res:.3g}")
    return VelBasis(kinds=kinds, waves=waves, profiles=profs, eigenvalues=lams,
                    mix=mix, fields=fields, grads=grads, gram=gram, stiffness=stiff,
                    M3=M3, Kh=Kh, h=p.h, L1=p.L1, L2=p.L2,
                    residuals={"divergence": div_res, "boundary": bnd_res,
                               "gram": gram_err})


def _wall_residual(profs, kinds, p, waves):
    worst = 0.0
    for coef, kind, (k1, k2, _) in zip(profs, kinds, waves):
        vals = [abs(leg.legval(x, coef)) for x in (-1.0, 1.0)]
        if kind == POLOIDAL:
            d = leg.legder(coef)
            vals += [abs(leg.legval(x, d)) for x in (-1.0, 1.0)]
        worst = max(worst, max(vals))
    return float(worst)
