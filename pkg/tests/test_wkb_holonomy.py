import math

import numpy as np
import pytest
import scipy.linalg

from models.conformal_limit import family_from_arrays
from models.grid_calculus import MatrixField
from models.wkb_holonomy import (HolonomyResult, LoopPath, central_charge, decompose_connection, find_wkb_loop,
                                 higgs_eigen_branch, horizontal_loop, is_wkb, path_ordered_exp, pullback_arrays,
                                 pullback_higgs, sinusoidal_loop, synthetic_family, wkb_sweep)
from utils.errors import (ConfigError, CurvatureGateError, DegeneracyError, LoopError, WKBLoopNotFoundError,
                          WKBRefusalError)


def random_trace_free(rng, nt):
    a = rng.normal(size=(nt,)) + 1j * rng.normal(size=(nt,))
    b = rng.normal(size=(nt,)) + 1j * rng.normal(size=(nt,))
    c = rng.normal(size=(nt,)) + 1j * rng.normal(size=(nt,))
    coeff = np.empty((nt, 2, 2), dtype=np.complex128)
    coeff[:, 0, 0] = a
    coeff[:, 0, 1] = b
    coeff[:, 1, 0] = c
    coeff[:, 1, 1] = -a
    return coeff


def reversed_coefficients(coeff):
    nt = coeff.shape[0]
    return -coeff[(nt - np.arange(nt)) % nt]


@pytest.mark.parametrize("orientation", [1, -1])
def test_diagonal_model_closed_form(diagonal_family, orientation):
    path = horizontal_loop(1.0, 64, orientation=orientation)
    report = wkb_sweep(diagonal_family, path, [0.2, 0.1, 0.05])
    assert report.central_charge == pytest.approx(1.0)
    assert report.abelian_holonomy == pytest.approx(-1.0, abs=1e-12)
    for row in report.rows:
        assert abs(row.q + 1.0) <= 1e-6 + math.exp(-2.0 / row.eps)


def test_off_diagonal_deviation_is_first_order(off_diagonal_family):
    loop = find_wkb_loop(off_diagonal_family.coefficients[1][0])
    report = wkb_sweep(off_diagonal_family, loop.path, [0.2, 0.1, 0.05, 0.025])
    assert report.abelian_holonomy == pytest.approx(math.exp(0.3), rel=1e-3)
    for ratio in report.deviation_ratios():
        assert 1.6 <= ratio <= 2.6


def test_growth_rate_approaches_central_charge(off_diagonal_family):
    loop = find_wkb_loop(off_diagonal_family.coefficients[1][0])
    report = wkb_sweep(off_diagonal_family, loop.path, [0.2, 0.1, 0.05, 0.025, 0.01])
    assert report.rows[-1].eps == 0.01
    assert abs(report.growth_rate - report.re_z) <= 0.05 * abs(report.re_z)
    gaps = [abs(row.growth - report.re_z) for row in report.rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert report.limit is not None


def test_threaded_sweep_matches_serial(off_diagonal_family):
    path = horizontal_loop(1.0, 64)
    serial = wkb_sweep(off_diagonal_family, path, [0.2, 0.1, 0.05])
    threaded = wkb_sweep(off_diagonal_family, path, [0.2, 0.1, 0.05], threads=3)
    assert [row.q for row in serial.rows] == [row.q for row in threaded.rows]


def test_path_ordered_exp_is_unimodular_and_reversible():
    rng = np.random.default_rng(20240517)
    for _ in range(100):
        coeff = random_trace_free(rng, 16)
        forward = path_ordered_exp(coeff, substeps=256)
        backward = path_ordered_exp(reversed_coefficients(coeff), substeps=256)
        assert abs(forward.det - 1.0) <= 1e-8
        product = backward.full_matrix() @ forward.full_matrix()
        np.testing.assert_allclose(product, np.eye(2), atol=1e-8)


def test_loop_reversal_matches_reversed_coefficients(off_diagonal_family):
    path = sinusoidal_loop(1.0, 0.1, 32)
    higgs = off_diagonal_family.coefficients[1][0]
    np.testing.assert_allclose(pullback_higgs(higgs, path.reversed()), reversed_coefficients(pullback_higgs(higgs, path)),
                               atol=1e-14)


def test_path_ordered_exp_renormalizes_large_growth():
    coeff = np.zeros((8, 2, 2), dtype=np.complex128)
    coeff[:, 0, 0] = 400.0
    coeff[:, 1, 1] = -400.0
    hol = path_ordered_exp(coeff, substeps=64)
    assert hol.rescaled
    assert hol.log_abs_trace == pytest.approx(400.0, rel=1e-12)


def test_path_ordered_exp_of_constant_coefficient():
    c = np.array([[0.3 + 0.1j, 1.2], [-0.7j, -0.3 - 0.1j]])
    hol = path_ordered_exp(np.broadcast_to(c, (16, 2, 2)), substeps=256)
    np.testing.assert_allclose(hol.full_matrix(), scipy.linalg.expm(c), rtol=1e-12, atol=1e-13)


def test_path_ordered_exp_of_commuting_coefficients():
    # C(t) = f(t)·M は可換なので Hol = exp((∫f)·M)。線形補間の積分は周期標本の平均に等しい
    nt = 24
    m = np.array([[0.4, 1.0 - 0.5j], [0.8j, -0.4]])
    f = 1.0 + 0.5 * np.sin(2.0 * np.pi * np.arange(nt) / nt) + 0.2j * np.cos(4.0 * np.pi * np.arange(nt) / nt)
    hol = path_ordered_exp(f[:, None, None] * m, substeps=96)
    np.testing.assert_allclose(hol.full_matrix(), scipy.linalg.expm(f.mean() * m), rtol=1e-12, atol=1e-13)


def test_path_ordered_exp_refinement_is_fourth_order():
    rng = np.random.default_rng(7)
    coeff = 0.1 * random_trace_free(rng, 16)
    hols = [path_ordered_exp(coeff, substeps=n) for n in (32, 64, 128)]
    assert [h.steps for h in hols] == [32, 64, 128]
    first = np.abs(hols[1].full_matrix() - hols[0].full_matrix()).max()
    second = np.abs(hols[2].full_matrix() - hols[1].full_matrix()).max()
    assert first <= 1e-4
    assert first / second > 10.0


def test_zero_trace_has_minus_infinite_log():
    hol = HolonomyResult(np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=np.complex128))
    assert hol.log_abs_trace == float("-inf")
    assert hol.trace == 0.0


def test_path_ordered_exp_validates_input():
    with pytest.raises(ConfigError):
        path_ordered_exp(np.zeros((4, 3, 3)))
    with pytest.raises(ConfigError):
        path_ordered_exp(np.zeros((8, 2, 2)), substeps=4)
    bad = np.zeros((4, 2, 2), dtype=np.complex128)
    bad[1, 0, 1] = np.nan
    with pytest.raises(ConfigError):
        path_ordered_exp(bad)


def test_central_charge_of_constant_higgs(wkb_domain):
    higgs = MatrixField.constant(wkb_domain, [[2.0, 0.0], [0.0, -2.0]], "dz", trace_free=True)
    branch = higgs_eigen_branch(pullback_higgs(higgs, horizontal_loop(1.0, 32)))
    assert is_wkb(branch)
    assert central_charge(branch) == pytest.approx(2.0)


def test_branch_monodromy_is_detected():
    t = np.arange(64) / 64
    higgs = np.zeros((64, 2, 2), dtype=np.complex128)
    higgs[:, 0, 1] = np.exp(2j * np.pi * t)
    higgs[:, 1, 0] = 1.0
    branch = higgs_eigen_branch(higgs)
    assert branch.monodromy
    assert not is_wkb(branch)


def test_degenerate_higgs_on_loop():
    with pytest.raises(DegeneracyError):
        higgs_eigen_branch(np.zeros((16, 2, 2), dtype=np.complex128))


def test_non_wkb_loop_is_refused(wkb_domain):
    family = synthetic_family(wkb_domain, np.diag([1j, -1j]), np.zeros((2, 2)))
    with pytest.raises(WKBRefusalError, match="curve is not WKB"):
        wkb_sweep(family, horizontal_loop(1.0, 64), [0.1, 0.05])


def test_loop_search_reports_best_margin(wkb_domain):
    higgs = MatrixField.constant(wkb_domain, np.diag([1j, -1j]), "dz", trace_free=True)
    with pytest.raises(WKBLoopNotFoundError) as info:
        find_wkb_loop(higgs)
    assert info.value.best_margin < 1e-3
    assert info.value.exit_code == 3


def test_loop_search_rejects_nilpotent_higgs(wkb_domain):
    higgs = MatrixField.constant(wkb_domain, [[0.0, 0.0], [1.0, 0.0]], "dz", trace_free=True)
    with pytest.raises(DegeneracyError):
        find_wkb_loop(higgs)


def test_seeded_loop_search_is_reproducible(off_diagonal_family):
    higgs = off_diagonal_family.coefficients[1][0]
    first = find_wkb_loop(higgs, seed=7)
    second = find_wkb_loop(higgs, seed=7)
    np.testing.assert_array_equal(first.path.z, second.path.z)
    assert first.margin >= 1e-3


def test_eps_values_must_decrease(off_diagonal_family):
    with pytest.raises(ConfigError) as info:
        wkb_sweep(off_diagonal_family, horizontal_loop(1.0, 64), [0.1, 0.2])
    assert info.value.kind == "eps_values"


def test_curvature_gate_blocks_non_flat_family(wkb_domain):
    X, Y = wkb_domain.mesh()
    higgs = np.zeros(wkb_domain.shape + (2, 2), dtype=np.complex128)
    higgs[..., 0, 0] = 1.0
    higgs[..., 1, 1] = -1.0
    connection = np.zeros_like(higgs)
    connection[..., 0, 0] = Y
    connection[..., 1, 1] = -Y
    family = family_from_arrays(wkb_domain, {1: (higgs, np.zeros_like(higgs)), 0: (connection, np.zeros_like(higgs))})
    with pytest.raises(CurvatureGateError):
        wkb_sweep(family, horizontal_loop(1.0, 64), [0.1, 0.05])


def test_connection_split_of_off_diagonal_model(off_diagonal_family):
    path = horizontal_loop(1.0, 32)
    domain = off_diagonal_family.domain
    higgs = pullback_arrays(domain, off_diagonal_family.coefficient_array(1, "dz"), None, path)
    connection = pullback_arrays(domain, off_diagonal_family.coefficient_array(0, "dz"), None, path)
    split = decompose_connection(higgs, connection, higgs_eigen_branch(higgs))
    np.testing.assert_allclose(split.a_plus, 0.3, atol=1e-12)
    np.testing.assert_allclose(split.a_minus, -0.3, atol=1e-12)
    np.testing.assert_allclose(split.a_off, -0.2, atol=1e-12)


def test_loops_must_close_and_stay_inside(wkb_domain, off_diagonal_family):
    t = np.arange(8) / 8
    z = np.append(t + 1.0j, 0.5 + 1.0j)
    with pytest.raises(LoopError):
        LoopPath(t, z, np.ones(8), period=1.0)
    with pytest.raises(LoopError) as info:
        pullback_higgs(off_diagonal_family.coefficients[1][0], horizontal_loop(2.0, 16))
    assert info.value.t == 0.0
    with pytest.raises(ConfigError):
        horizontal_loop(1.0, 16, orientation=0)
    with pytest.raises(ConfigError):
        horizontal_loop(1.0, 1)
