import math

import numpy as np
import pytest

from benard_tss.basis import (POLOIDAL, SHEAR_X, TOROIDAL, build_temperature_basis,
                              build_velocity_basis, horizontal_functions, quadrature_grid,
                              stokes_profiles, temperature_mode_count, velocity_eigenvalues,
                              velocity_mode_count)
from benard_tss.errors import ResolutionTooLow, StripUnderresolved

from conftest import base_parameters


@pytest.fixture(scope="module")
def p():
    return base_parameters()


# ---------------------------------------------------------------- grid

def test_grid_volume_unit_box():
    p = base_parameters(L1=1.0, L2=1.0)
    for vertical in ("gauss", "uniform"):
        q = p.replace(epsilon=0.5) if vertical == "uniform" else p
        g = quadrature_grid(q, 16, 16, 16, vertical=vertical)
        assert abs(g.weights.sum() - 1.0) < 1e-12
        assert np.all(g.weights > 0)
        assert g.integrate(np.ones(g.size)) == pytest.approx(1.0, abs=1e-12)


def test_grid_volume_general(p):
    g = quadrature_grid(p, 8, 6, 20)
    assert g.integrate(np.ones(g.size)) == pytest.approx(p.L1 * p.L2 * p.h, rel=1e-14)


def test_uniform_grid_underresolves_thin_strip():
    p = base_parameters(L1=1.0, L2=1.0).replace(epsilon=0.05)
    with pytest.raises(StripUnderresolved):
        quadrature_grid(p, 16, 16, 16, vertical="uniform")


def test_gauss_grid_puts_panel_in_strip(p):
    g = quadrature_grid(p, 8, 8, 16)
    assert np.count_nonzero(g.x3 >= p.h - p.epsilon) == 16
    # piecewise-linear background profile is integrated exactly
    _, _, X3 = g.mesh()
    s = p.h - p.epsilon
    exact = p.L1 * p.L2 * 0.5 * p.epsilon ** 2
    assert g.integrate(np.maximum(X3 - s, 0.0)) == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("args", [(3, 8, 16), (8, 7, 16), (8, 8, 8)])
def test_grid_rejects_bad_sizes(p, args):
    with pytest.raises(ValueError):
        quadrature_grid(p, *args)


# ---------------------------------------------------------- temperature

def test_horizontal_function_count():
    for Kh in range(4):
        assert len(horizontal_functions(Kh)) == (2 * Kh + 1) ** 2


def test_temperature_count_formula(p):
    tb = build_temperature_basis(p, 1, 2)
    assert tb.n == temperature_mode_count(1, 2) == 18
    assert tb.n == len({(tuple(m), int(q)) for m, q in zip(tb.modes, tb.parity)})


def test_temperature_lowest_eigenvalue(p):
    tb = build_temperature_basis(p, 2, 3)
    assert tuple(tb.modes[0]) == (0, 0, 1)
    assert tb.lambda2 == pytest.approx(math.pi ** 2, rel=1e-15)
    assert np.all(np.diff(tb.eigenvalues) >= -1e-12 * tb.eigenvalues[1:])


def test_temperature_orthonormal_and_rayleigh(p):
    tb = build_temperature_basis(p, 1, 3)
    g = quadrature_grid(p, 8, 8, 24)
    vals, grads = tb.evaluate(g)
    w = g.weights
    gram = (vals * w) @ vals.T
    assert np.max(np.abs(gram - np.eye(tb.n))) < 1e-10
    stiff = np.einsum("icg,jcg,g->ij", grads, grads, w)
    rq = np.diag(stiff) / np.diag(gram)
    np.testing.assert_allclose(rq, tb.eigenvalues, rtol=1e-6)


def test_temperature_modes_vanish_on_walls():
    p = base_parameters().replace(epsilon=0.5)
    tb = build_temperature_basis(p, 1, 3)
    g = quadrature_grid(p, 8, 8, 33, vertical="uniform")
    vals, _ = tb.evaluate(g)
    v = vals.reshape(tb.n, *g.shape)
    assert np.max(np.abs(v[..., 0])) < 1e-14
    assert np.max(np.abs(v[..., -1])) < 1e-13


# ------------------------------------------------------------- velocity

def test_shear_eigenvalues_are_exact(p):
    lam, _ = stokes_profiles(SHEAR_X, 0.0, 64, 1.0)
    np.testing.assert_allclose(lam[:3], [math.pi ** 2, 4 * math.pi ** 2, 9 * math.pi ** 2],
                               rtol=1e-10)


def test_shear_eigenvalue_refinement():
    errs = [abs(stokes_profiles(SHEAR_X, 0.0, M, 1.0)[0][5] - 36 * math.pi ** 2)
            for M in (8, 12, 16)]
    assert errs[0] > errs[1] > errs[2] or errs[2] < 1e-9


def test_poloidal_q0_is_clamped_buckling():
    # P'''' = lam (-P'') with P = P' = 0 at both walls: lowest lam = (2 pi / h)^2
    # (symmetric mode), next root solves tan(x) = x with x = sqrt(lam) h / 2
    for h in (1.0, 2.0):
        lam, _ = stokes_profiles(POLOIDAL, 0.0, 32, h)
        assert lam[0] == pytest.approx((2 * math.pi / h) ** 2, rel=1e-10)
        x = math.sqrt(lam[1]) * h / 2
        assert math.tan(x) == pytest.approx(x, rel=1e-8)


def test_velocity_basis_quality(disc):
    vb = disc.vel
    assert vb.residuals["divergence"] < 1e-8
    assert vb.residuals["boundary"] < 1e-8
    assert np.max(np.abs(vb.gram - np.eye(vb.n_modes))) < 1e-10
    S = vb.stiffness
    assert np.max(np.abs(S - S.T)) == 0.0
    assert np.linalg.eigvalsh(S)[0] > 0
    assert vb.lambda1 == pytest.approx(math.pi ** 2, rel=1e-10)


def test_velocity_fields_vanish_on_walls():
    p = base_parameters().replace(epsilon=0.5)
    g = quadrature_grid(p, 8, 8, 33, vertical="uniform")
    vb = build_velocity_basis(p, 1, 16, 30, g)
    f = vb.fields.reshape(vb.n_modes, 3, *g.shape)
    assert np.max(np.abs(f[..., 0])) < 1e-12
    assert np.max(np.abs(f[..., -1])) < 1e-12
    div = vb.grads[:, 0, 0] + vb.grads[:, 1, 1] + vb.grads[:, 2, 2]
    assert np.max(np.abs(div)) < 1e-8 * np.max(np.abs(vb.fields))


def test_velocity_basis_rejects_unreachable_tolerance(p):
    g = quadrature_grid(p, 8, 8, 32)
    with pytest.raises(ResolutionTooLow):
        build_velocity_basis(p, 1, 16, 20, g, tol=1e-30)


def test_velocity_basis_argument_checks(p):
    g = quadrature_grid(p, 8, 8, 32)
    with pytest.raises(ValueError):
        build_velocity_basis(p, 1, 8, 10, g)
    with pytest.raises(ValueError):
        build_velocity_basis(p, 0, 16, velocity_mode_count(0, 16) + 1, g)


def test_smallest_eigenvalue_non_increasing_under_enrichment(p):
    rel = 1e-10
    seq = [velocity_eigenvalues(p, 1, M, 40)[0] for M in (16, 24, 32, 48, 64)]
    assert all(b <= a * (1 + rel) for a, b in zip(seq, seq[1:]))
    seq = [velocity_eigenvalues(p, K, 16, 40)[0] for K in (0, 1, 2)]
    assert all(b <= a * (1 + rel) for a, b in zip(seq, seq[1:]))
    # all sorted eigenvalues shrink (weakly) as the vertical space grows
    a, b = velocity_eigenvalues(p, 1, 16, 40), velocity_eigenvalues(p, 1, 32, 40)
    assert np.all(b <= a * (1 + rel))
    t = [build_temperature_basis(p, K, M).lambda2 for K, M in ((0, 1), (1, 2), (2, 4))]
    assert t[0] >= t[1] >= t[2]


def test_kinds_by_wavenumber(disc):
    vb = disc.vel
    zero = (vb.waves[:, 0] == 0) & (vb.waves[:, 1] == 0)
    assert set(vb.kinds[zero]) <= {SHEAR_X, SHEAR_X + 1}
    assert set(vb.kinds[~zero]) <= {TOROIDAL, POLOIDAL}
