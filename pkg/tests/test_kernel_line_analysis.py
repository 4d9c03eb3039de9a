import numpy as np
import pytest

from models.grid_calculus import ComplexField, interior_mask, make_domain
from models.higgs_local import BBSliceData, FixedPointData
from models.kernel_line_analysis import identity_chain, perturb_b, phi2_mask, preserved_kernel_probe, wedge_with_dH
from utils.errors import DegeneracyError, SliceGateError


@pytest.mark.parametrize("name", ["slice_plus", "nilpotent_slice"])
def test_preserved_kernel_is_positive_away_from_fixed_point(name, request):
    slice_ = request.getfixturevalue(name)
    assert preserved_kernel_probe(slice_) > 0.0
    assert preserved_kernel_probe(slice_, normalized=False) > 0.0


def test_contradiction_identity_holds_and_detects_perturbation(slice_plus):
    report = identity_chain(slice_plus)
    assert not report.degenerate
    assert report.joint_count > 0
    assert report.contradiction_relative <= 1e-4

    perturbed = identity_chain(perturb_b(slice_plus, 1.1), require_gates=False)
    assert perturbed.contradiction_relative >= 10.0 * report.contradiction_relative
    assert perturbed.contradiction_relative >= 1e-2


def test_perturb_b_keeps_original(slice_plus):
    perturbed = perturb_b(slice_plus, 1.1)
    np.testing.assert_allclose(perturbed.b.values, 1.1 * slice_plus.b.values)
    assert perturbed.provenance["b_factor"] == 1.1
    assert "b_factor" not in slice_plus.provenance


def test_fixed_point_is_degenerate(fixed_slice):
    report = identity_chain(fixed_slice)
    assert report.degenerate
    assert report.contradiction_sup == 0.0
    assert report.summary()["degenerate"] is True
    assert wedge_with_dH(fixed_slice).sup() == 0.0
    with pytest.raises(DegeneracyError):
        preserved_kernel_probe(fixed_slice)


def test_identity_chain_requires_dprime_gate(slice_plus):
    flipped = BBSliceData(slice_plus.base, slice_plus.phi2, slice_plus.phi3, slice_plus.b, -1)
    with pytest.raises(SliceGateError) as info:
        identity_chain(flipped, gate=1e-6)
    assert info.value.details["gate_name"] == "r4"


def test_phi2_mask_threshold(slice_plus):
    mask, top = phi2_mask(slice_plus, 1e-3)
    assert top > 0.0
    assert not mask.all()
    everything, _ = phi2_mask(slice_plus, 10.0)
    assert everything.all()


def _explicit_slice(domain, phi2_fn, u_fn, b_value=0.0):
    """Φ₁ = 1, Φ₃ = −Φ₂² の冪零スライス (Hitchin 方程式は課さない)。"""
    phi2 = ComplexField.from_function(domain, phi2_fn)
    base = FixedPointData(ComplexField.constant(domain, 1.0), ComplexField.from_function(domain, u_fn), 1.0)
    phi3 = phi2.with_values(-(phi2.values * phi2.values))
    return BBSliceData(base, phi2, phi3, ComplexField.constant(domain, b_value))


def test_wedge_of_linear_section_is_constant():
    # u = 0, Φ₂ = z: wedge = z·∂_z1 − 1·∂_z z = −1
    domain = make_domain(33, 33, 0.0, 0.5, 1.5, x_min=-0.5, x_max=0.5)
    slice_ = _explicit_slice(domain, lambda X, Y: X + 1j * Y, lambda X, Y: 0.0 * X)
    wedge = wedge_with_dH(slice_).values
    np.testing.assert_allclose(wedge, -1.0, rtol=0, atol=1e-12)


def _wedge_defect(n):
    domain = make_domain(n, n + 1, 1.0, 0.5, 1.5)
    slice_ = _explicit_slice(domain,
                             lambda X, Y: 2.0 + 0.3 * np.sin(2.0 * np.pi * X) + 0.2j * Y,
                             lambda X, Y: 0.3 * np.sin(2.0 * np.pi * X) * Y, 0.1)
    report = identity_chain(slice_, require_gates=False)
    region = interior_mask(domain) & ~report.f.mask if report.f.mask is not None else interior_mask(domain)
    expected = slice_.phi2.values ** 2 * report.eq1_res.values
    defect = np.abs(report.wedge.values - expected)[region].max()
    return defect / np.abs(report.wedge.values)[region].max()


def test_wedge_matches_weighted_first_equation():
    # wedge = Φ₂²·(∂_z f − 2f∂_z u) は差分の商の法則の誤差 O(h²) を除いて成り立つ
    coarse = _wedge_defect(32)
    fine = _wedge_defect(64)
    assert coarse <= 2e-2
    assert 3.0 < coarse / fine < 5.0
