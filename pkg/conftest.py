import sys
from pathlib import Path

import numpy as np
import pytest

_project_root = Path(__file__).resolve().parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from models.grid_calculus import ComplexField, make_domain
from models.higgs_local import default_gate, fixed_point_slice, make_fixed_point, synthesize_slice
from models.hitchin_solver import HitchinProblem, solve_hitchin
from models.wkb_holonomy import diagonal_model_family, off_diagonal_model_family

NILPOTENT_AMPLITUDE = (2j / 3.0) * 0.05


def seed_values(X, Y):
    return 0.05 * (1.0 + 0.5 * np.cos(2.0 * np.pi * X)) * Y


def liouville_domain(nx: int = 32, ny: int = 33):
    """周期 1 の円柱 y ∈ [0.5, 1.5]。"""
    return make_domain(nx, ny, 1.0, 0.5, 1.5)


def liouville_fixed_point(domain):
    """Φ₁ = 1 と境界値 log(2y) から解いた固定点。"""
    phi1 = ComplexField.constant(domain, 1.0)
    boundary = ComplexField.from_function(domain, lambda X, Y: np.log(2.0 * Y))
    u = solve_hitchin(HitchinProblem(phi1, boundary), tol=1e-11)
    return make_fixed_point(phi1, u)


@pytest.fixture(scope="session")
def domain():
    return liouville_domain()


@pytest.fixture(scope="session")
def fixed_point(domain):
    return liouville_fixed_point(domain)


@pytest.fixture(scope="session")
def seed_field(domain):
    return ComplexField.from_function(domain, seed_values)


@pytest.fixture(scope="session")
def slice_plus(fixed_point, seed_field):
    return synthesize_slice(fixed_point, seed_field, 1e-6, dprime_sign=1)


@pytest.fixture(scope="session")
def slice_minus(fixed_point, seed_field):
    return synthesize_slice(fixed_point, seed_field, 1e-6, dprime_sign=-1)


@pytest.fixture(scope="session")
def nilpotent_slice(fixed_point):
    """σ = −1、Φ₃ = −Φ₂²/Φ₁ のスライス (二次展開と閉性の題材)。"""
    seed = ComplexField.from_function(fixed_point.domain, lambda X, Y: NILPOTENT_AMPLITUDE * Y)
    gate = default_gate(fixed_point.domain, 1.0)
    return synthesize_slice(fixed_point, seed, gate, dprime_sign=-1, phi3_mode="nilpotent")


@pytest.fixture(scope="session")
def fixed_slice(fixed_point):
    return fixed_point_slice(fixed_point)


@pytest.fixture(scope="session")
def wkb_domain():
    return make_domain(32, 16, 1.0, 0.5, 1.5)


@pytest.fixture(scope="session")
def diagonal_family(wkb_domain):
    return diagonal_model_family(wkb_domain)


@pytest.fixture(scope="session")
def off_diagonal_family(wkb_domain):
    return off_diagonal_model_family(wkb_domain)


@pytest.fixture
def project_root():
    return _project_root
