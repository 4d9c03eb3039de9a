import numpy as np
import pytest

from conftest import NILPOTENT_AMPLITUDE
from models.grid_calculus import ComplexField, interior_mask, make_domain
from models.higgs_local import (BBSliceData, FixedPointData, check_slice_gates, dprime_residual,
                                holomorphicity_residuals, kernel_section, make_fixed_point, matrix_frame_residual,
                                require_slice_gates, synthesize_slice)
from utils.errors import (DegeneracyError, DomainError, FieldValidationError, NilpotencyGateError, SliceGateError,
                          SliceSynthesisError)


@pytest.mark.parametrize("name", ["slice_plus", "slice_minus"])
def test_synthesized_slice_passes_gates(name, request):
    slice_ = request.getfixturevalue(name)
    report = check_slice_gates(slice_, 1e-6)
    assert report.passed, report.as_dict()
    assert report.hitchin <= 1e-6
    assert slice_.phi2.sup() > 1e-2


def test_fixed_point_slice_is_trivially_on_slice(fixed_slice):
    report = require_slice_gates(fixed_slice, 1e-6)
    assert max(report.r1, report.r2, report.r3, report.r4) == 0.0
    phi2, phi1 = kernel_section(fixed_slice)
    assert phi2.sup() == 0.0
    assert phi1 is fixed_slice.phi1


def test_doubling_seed_doubles_slice_data(fixed_point, seed_field):
    single = synthesize_slice(fixed_point, seed_field, 1e-6)
    double = synthesize_slice(fixed_point, seed_field.with_values(2.0 * seed_field.values), 1e-6)
    for name in ("phi2", "b"):
        a = getattr(single, name).values
        b = getattr(double, name).values
        assert np.abs(b - 2.0 * a).max() <= 1e-12 * np.abs(b).max()


def test_nilpotent_phi3_is_quadratic_in_seed(fixed_point):
    seed = ComplexField.from_function(fixed_point.domain, lambda X, Y: NILPOTENT_AMPLITUDE * Y)
    single = synthesize_slice(fixed_point, seed, 1e-3, -1, "nilpotent")
    double = synthesize_slice(fixed_point, seed.with_values(2.0 * seed.values), 1e-3, -1, "nilpotent")
    a, b = single.phi3.values, double.phi3.values
    assert np.abs(b - 4.0 * a).max() <= 1e-12 * np.abs(b).max()
    defect = single.phi2.values ** 2 + single.phi3.values * single.phi1.values
    assert np.abs(defect).max() <= 1e-14


def test_matrix_frame_residual_matches_scalar_residuals(slice_plus):
    frame = matrix_frame_residual(slice_plus)
    report = check_slice_gates(slice_plus, 1e-6)
    region = interior_mask(slice_plus.domain)
    assert frame.entry(1, 0).sup(region) == pytest.approx(report.r1, rel=1e-9, abs=1e-15)
    assert frame.entry(0, 0).sup(region) == pytest.approx(report.r2, rel=1e-9, abs=1e-15)


def test_wrong_dprime_sign_leaves_predicted_residual(slice_plus):
    flipped = BBSliceData(slice_plus.base, slice_plus.phi2, slice_plus.phi3, slice_plus.b, -1)
    r4 = dprime_residual(flipped).values
    u = slice_plus.base.u_real()
    predicted = 4.0 * np.conj(slice_plus.phi1.values) * slice_plus.phi2.values * np.exp(-2.0 * u)
    region = interior_mask(slice_plus.domain)
    np.testing.assert_allclose(r4[region], predicted[region], atol=1e-9)


def test_make_fixed_point_rejects_non_solution(fixed_point):
    wrong_u = fixed_point.u.with_values(fixed_point.u.values + 0.1)
    with pytest.raises(SliceGateError) as info:
        make_fixed_point(fixed_point.phi1, wrong_u)
    assert info.value.details["gate_name"] == "hitchin"


def test_unreachable_delta_gate_raises_with_history(fixed_point, seed_field):
    with pytest.raises(SliceSynthesisError) as info:
        synthesize_slice(fixed_point, seed_field, 1e-30)
    assert info.value.residual_history
    assert info.value.exit_code == 4


def test_synthesis_requires_periodic_domain():
    domain = make_domain(8, 8, 0.0, 0.5, 1.5, x_max=1.0)
    phi1 = ComplexField.constant(domain, 1.0)
    base = FixedPointData(phi1, ComplexField.from_function(domain, lambda X, Y: np.log(2.0 * Y)), 1e-6)
    with pytest.raises(DomainError):
        synthesize_slice(base, ComplexField.constant(domain, 0.1))


def test_synthesis_rejects_zero_of_phi1(domain):
    values = np.ones(domain.shape, dtype=np.complex128)
    values[domain.ny // 2, domain.nx // 2] = 0.0
    phi1 = ComplexField(domain, values)
    base = FixedPointData(phi1, ComplexField.from_function(domain, lambda X, Y: np.log(2.0 * Y)), 1e-6)
    with pytest.raises(DegeneracyError):
        synthesize_slice(base, ComplexField.constant(domain, 0.1))


def test_invalid_sign_and_mode(fixed_point, seed_field):
    with pytest.raises(FieldValidationError):
        synthesize_slice(fixed_point, seed_field, dprime_sign=0)
    with pytest.raises(FieldValidationError):
        synthesize_slice(fixed_point, seed_field, phi3_mode="exact")


def test_kernel_section_requires_nilpotent_higgs(fixed_point, seed_field):
    holomorphic = ComplexField.constant(fixed_point.domain, 0.1)
    slice_ = synthesize_slice(fixed_point, seed_field, 1e-6, phi3_holomorphic=holomorphic)
    with pytest.raises(NilpotencyGateError, match="kernel line undefined"):
        kernel_section(slice_)


def literal_slice(phi2, phi3, b, dprime_sign=1):
    """u = 0, Φ₁ = 1 の非周期領域上で z の式からスライスデータを組み立てます (Hitchin 方程式は課さない)。"""
    domain = make_domain(33, 33, 0.0, 0.5, 1.5, x_min=-0.5, x_max=0.5)
    z = domain.z
    base = FixedPointData(ComplexField.constant(domain, 1.0), ComplexField.zeros(domain), 1.0)
    fields = [ComplexField(domain, np.array(np.broadcast_to(f(z), domain.shape), dtype=np.complex128))
              for f in (phi2, phi3, b)]
    return BBSliceData(base, *fields, dprime_sign=dprime_sign)


def test_holomorphicity_residuals_literal():
    slice_ = literal_slice(lambda z: -np.conj(z), lambda z: -np.conj(z) * np.conj(z), lambda z: 1.0)
    r1, r2, r3 = holomorphicity_residuals(slice_)
    assert r1.sup() == 0.0
    assert r2.sup() <= 1e-12
    assert r3.sup() <= 1e-12


def test_dprime_residual_literal():
    c = 0.7 - 0.2j
    slice_ = literal_slice(lambda z: c / 2.0, lambda z: 0.0, lambda z: c * z)
    assert dprime_residual(slice_).sup() <= 1e-12


def test_kernel_section_literal():
    slice_ = literal_slice(lambda z: z, lambda z: -(z * z), lambda z: 0.0)
    phi2, phi1 = kernel_section(slice_)
    np.testing.assert_array_equal(phi2.values, slice_.domain.z)
    assert np.all(phi1.values == 1.0)


@pytest.mark.parametrize("mode", ["dbar", "nilpotent"])
def test_zero_seed_gives_exact_fixed_point(fixed_point, mode):
    slice_ = synthesize_slice(fixed_point, ComplexField.zeros(fixed_point.domain), 1e-6, phi3_mode=mode)
    for name in ("phi2", "phi3", "b"):
        assert np.all(getattr(slice_, name).values == 0.0), name


@pytest.mark.parametrize("mode", ["dbar", "nilpotent"])
def test_complex_scaling_of_seed(fixed_point, seed_field, mode):
    c = 0.6 + 0.8j
    single = synthesize_slice(fixed_point, seed_field, 1e-6, phi3_mode=mode)
    scaled = synthesize_slice(fixed_point, seed_field.with_values(c * seed_field.values), 1e-6, phi3_mode=mode)
    for name, factor in (("phi2", c), ("b", c), ("phi3", c * c)):
        a = getattr(single, name).values
        b = getattr(scaled, name).values
        assert np.abs(b - factor * a).max() <= 1e-12 * np.abs(b).max(), name


def test_dbar_mode_shifts_only_the_correction(slice_plus):
    # Φ₃ = −Φ₂²/Φ₁ + ψ で、平均 0 に揃えるのは ψ だけ
    nilpotent = -(slice_plus.phi2.values * slice_plus.phi2.values) / slice_plus.phi1.values
    correction = slice_plus.phi3.values - nilpotent
    assert abs(correction.mean()) <= 1e-12 * (np.abs(correction).max() + np.abs(nilpotent).max())
    assert slice_plus.provenance["phi3_mode"] == "dbar"


def test_synthesis_gate_includes_phi1_holomorphicity(fixed_point, seed_field):
    # ∂_z̄Φ₁ = 0.005i は r₂, r₃, r₄ には現れないので r₁ で止まる必要がある
    phi1 = ComplexField.from_function(fixed_point.domain, lambda X, Y: 1.0 + 0.01 * Y)
    base = FixedPointData(phi1, fixed_point.u, 1.0)
    with pytest.raises(SliceSynthesisError) as info:
        synthesize_slice(base, seed_field, 1e-3, phi3_mode="nilpotent")
    assert info.value.residual_history[-1] == pytest.approx(0.005, rel=1e-9)
