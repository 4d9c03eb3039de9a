import numpy as np
import pytest

from conftest import liouville_domain, liouville_fixed_point, seed_values
from models.conformal_limit import (LaurentConnectionFamily, build_family, curvature_by_power, curvature_residual,
                                    det_higgs, family_curvature_sweep, family_from_arrays, gauge_transform,
                                    max_curvature, secondary_expansion, secondary_sweep, substitute_square)
from models.grid_calculus import ComplexField, MatrixField, interior_mask
from models.higgs_local import fixed_point_slice, synthesize_slice
from utils.errors import ConfigError, FieldValidationError, NilpotencyGateError, PowerOverflowError


def test_family_has_three_powers(slice_minus):
    family = build_family(slice_minus)
    assert family.powers == [-1, 0, 1]
    np.testing.assert_array_equal(family.coefficient_array(1, "dz")[..., 1, 0], slice_minus.phi1.values)
    assert not np.any(family.coefficient_array(1, "dzbar"))
    assert not np.any(family.coefficient_array(2, "dz"))


def test_negative_dprime_sign_gives_flat_family(domain, slice_minus):
    family = build_family(slice_minus)
    bound = 10.0 * domain.h ** 2 + 10.0 * 1e-6
    assert max_curvature(family) <= bound
    for row in family_curvature_sweep(family, [1.0, 10.0]):
        assert row["residual_sup"] <= 10.0 * bound


def test_fixed_point_curvature_is_second_order():
    levels = []
    for nx, ny in ((32, 33), (64, 65)):
        base = liouville_fixed_point(liouville_domain(nx, ny))
        levels.append(max_curvature(build_family(fixed_point_slice(base))))
    assert 3.0 < levels[0] / levels[1] < 5.0


def test_slice_family_curvature_shrinks_under_refinement():
    levels = []
    for nx, ny in ((32, 33), (64, 65)):
        base = liouville_fixed_point(liouville_domain(nx, ny))
        seed = ComplexField.from_function(base.domain, seed_values)
        slice_ = synthesize_slice(base, seed, 1e-6, dprime_sign=-1)
        levels.append(max_curvature(build_family(slice_)))
    assert levels[1] < levels[0] / 3.0


def test_positive_dprime_sign_leaves_obstruction(slice_plus):
    family = build_family(slice_plus)
    f0 = curvature_by_power(family)[0]
    region = interior_mask(slice_plus.domain, 2)
    u = slice_plus.base.u_real()
    expected = 4.0 * np.conj(slice_plus.phi1.values) * slice_plus.phi2.values * np.exp(-2.0 * u)
    np.testing.assert_allclose(f0.array[..., 0, 1][region], expected[region], atol=1e-9)
    assert np.abs(expected[region]).max() > 1e-3


@pytest.mark.parametrize("hbar", [0.0, float("nan")])
def test_invalid_hbar(slice_minus, hbar):
    with pytest.raises(ConfigError) as info:
        build_family(slice_minus, hbar)
    assert info.value.kind == "hbar"


def test_hbar_scales_higgs_and_adjoint(slice_minus):
    plain = build_family(slice_minus)
    scaled = build_family(slice_minus, 2.0)
    np.testing.assert_allclose(scaled.coefficient_array(1, "dz"), plain.coefficient_array(1, "dz") / 2.0)
    np.testing.assert_allclose(scaled.coefficient_array(-1, "dzbar"), plain.coefficient_array(-1, "dzbar") * 2.0)


def test_evaluate_rejects_non_positive_radius(slice_minus):
    with pytest.raises(ConfigError):
        build_family(slice_minus).evaluate(0.0)


def test_gauge_round_trip(slice_plus):
    family = build_family(slice_plus)
    shifted = gauge_transform(family, 0.5)
    # b は冪 0 から +1 へ、Φ₁ は冪 +1 から 0 へ
    np.testing.assert_array_equal(shifted.coefficient_array(1, "dzbar")[..., 0, 1], slice_plus.b.values)
    np.testing.assert_array_equal(shifted.coefficient_array(0, "dz")[..., 1, 0], slice_plus.phi1.values)
    back = gauge_transform(shifted, -0.5)
    for k in set(family.powers) | set(back.powers):
        for form in ("dz", "dzbar"):
            np.testing.assert_array_equal(back.coefficient_array(k, form), family.coefficient_array(k, form))


def test_gauge_rejects_non_half_integer(slice_plus):
    with pytest.raises(ConfigError) as info:
        gauge_transform(build_family(slice_plus), 0.3)
    assert info.value.kind == "gauge_exponent"


def test_power_overflow(slice_plus):
    family = build_family(slice_plus)
    with pytest.raises(PowerOverflowError):
        gauge_transform(family, 1.0)
    with pytest.raises(PowerOverflowError):
        substitute_square(gauge_transform(family, 0.5))


def _conjugate(array, r, p):
    """g A g⁻¹ (g = diag(r^p, r^{−p}))。非対角成分だけが r^{±2p} 倍されます。"""
    out = np.array(array, dtype=np.complex128)
    out[..., 0, 1] *= r ** (2.0 * p)
    out[..., 1, 0] *= r ** (-2.0 * p)
    return out


@pytest.mark.parametrize("p", [0.5, -0.5])
@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_gauge_matches_constant_conjugation(slice_minus, p, r):
    family = build_family(slice_minus)
    az, azbar = family.evaluate(r)
    gaz, gazbar = gauge_transform(family, p).evaluate(r)
    np.testing.assert_allclose(gaz, _conjugate(az, r, p), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(gazbar, _conjugate(azbar, r, p), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("p", [0.5, -0.5])
@pytest.mark.parametrize("r", [0.5, 2.0])
def test_curvature_is_gauge_covariant(slice_plus, p, r):
    family = build_family(slice_plus)
    curvature = curvature_residual(family, r).array
    gauged = curvature_residual(gauge_transform(family, p), r).array
    scale = max(float(np.abs(curvature).max()), 1.0)
    np.testing.assert_allclose(gauged, _conjugate(curvature, r, p), rtol=0, atol=1e-11 * scale)


def test_gauge_range_check_follows_nonzero_entries(domain):
    # 冪 2 には (2,1) 成分だけがある: p = +1/2 では冪 1 へ下がり、(1,2) 側の 0 成分は動かない
    az = np.zeros(domain.shape + (2, 2), dtype=np.complex128)
    az[..., 1, 0] = 1.0
    family = family_from_arrays(domain, {2: (az, np.zeros_like(az))})
    assert gauge_transform(family, 0.5).powers == [1]
    with pytest.raises(PowerOverflowError) as info:
        gauge_transform(family, -0.5)
    assert info.value.details["power"] == 3


def test_substitute_square_doubles_powers(slice_minus):
    assert substitute_square(build_family(slice_minus)).powers == [-2, 0, 2]


def test_coefficients_must_be_trace_free(domain):
    identity = MatrixField.constant(domain, np.eye(2), form="dz")
    with pytest.raises(FieldValidationError) as info:
        LaurentConnectionFamily(domain, {0: (identity, None)})
    assert info.value.kind == "trace_free"
    with pytest.raises(PowerOverflowError):
        family_from_arrays(domain, {3: (np.zeros(domain.shape + (2, 2)), np.zeros(domain.shape + (2, 2)))})


def test_det_higgs(slice_plus):
    det = det_higgs(slice_plus.higgs_matrix()).values
    expected = -slice_plus.phi2.values ** 2 - slice_plus.phi3.values * slice_plus.phi1.values
    np.testing.assert_allclose(det, expected, rtol=0, atol=1e-14)
    with pytest.raises(FieldValidationError):
        det_higgs(slice_plus.dbar_matrix())


def test_secondary_expansion_on_nilpotent_slice(nilpotent_slice):
    data = secondary_expansion(build_family(nilpotent_slice), nilpotent_slice.base)
    assert data.det_min() > 1e-2
    assert data.tail_powers and max(data.tail_powers) <= -1
    rows = secondary_sweep(data, [10.0, 100.0, 1000.0])
    tails = [row["residual_sup"] for row in rows]
    assert max(tails) > 0.0
    assert (max(tails) - min(tails)) / max(tails) <= 0.2
    np.testing.assert_allclose(data.det_field.values, -data.phi_tilde.values * data.a_minus1.values)


def test_secondary_at_fixed_point_has_no_lower_entry(fixed_slice):
    data = secondary_expansion(build_family(fixed_slice), fixed_slice.base)
    assert np.abs(data.a_minus1.values).max() <= 1e-14
    assert data.phi_tilde.sup() > 0.0


def test_secondary_refuses_non_nilpotent_higgs(fixed_point, seed_field):
    holomorphic = ComplexField.constant(fixed_point.domain, 0.1)
    slice_ = synthesize_slice(fixed_point, seed_field, 1e-6, phi3_holomorphic=holomorphic)
    with pytest.raises(NilpotencyGateError, match="already non-nilpotent"):
        secondary_expansion(build_family(slice_), fixed_point)
