import math
import sys

import numpy as np
import pytest

from benard_tss.config import parse_config
from benard_tss.params import Parameters, propose_gamma_epsilon
from benard_tss.pipeline import build_discretization, smooth_state

DESK_INI = """
[physics]
nu = 1.0
kappa = 1.0
g = 10.0
alpha = 1.0
T0 = 1.0
T1 = 0.0
h = 1.0
L1 = 2.0
L2 = 2.0

[discretization]
Kh = 1
Mv = 3
M3 = 16
n_modes = 40
N1 = 8
N2 = 8
N3 = 32

[time]
horizon = 1.0
dt = 0.01
"""


def base_parameters(**changes) -> Parameters:
    p = Parameters(nu=1.0, kappa=1.0, g=10.0, alpha=1.0, T0=1.0, T1=0.0, h=1.0,
                   L1=2.0, L2=2.0, gamma=1.0, epsilon=0.5)
    gamma, eps = propose_gamma_epsilon(p, math.pi ** 2)
    return p.replace(gamma=gamma, epsilon=eps, **changes)


@pytest.fixture(scope="session")
def desk_config():
    return parse_config(DESK_INI)


@pytest.fixture(scope="session")
def disc(desk_config):
    return build_discretization(desk_config)


@pytest.fixture(scope="session")
def zero_gap_disc():
    """Same discretization with T0 == T1 (no imposed gradient)."""
    from benard_tss.basis import (build_temperature_basis, build_velocity_basis,
                                  quadrature_grid)
    from benard_tss.operators import assemble_operators
    from benard_tss.params import derived_constants, validate_parameters
    from benard_tss.pipeline import Discretization

    p0 = base_parameters(T0=0.5, T1=0.5)
    grid = quadrature_grid(p0, 8, 8, 32)
    vel = build_velocity_basis(p0, 1, 16, 40, grid)
    temp = build_temperature_basis(p0, 1, 3)
    p = validate_parameters(p0, min(vel.lambda1, temp.lambda2), strict_order=False)
    ops = assemble_operators(vel, temp, grid, p)
    return Discretization(p, grid, vel, temp, ops, derived_constants(p, vel.lambda1, temp.lambda2))


@pytest.fixture
def state(disc):
    """Factory for smooth random states with a prescribed ``|z|_H^2``."""
    def make(seed, h_norm_sq=None):
        R = disc.consts.R0 if h_norm_sq is None else h_norm_sq
        return smooth_state(disc.ops, seed, R)
    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
