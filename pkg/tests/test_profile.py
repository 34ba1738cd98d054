import math

import numpy as np
import pytest

from backend.errors import GraphConditionError, PreconditionError, ProfileDomainError
from backend.profile import (CriticalKind, RegionKind, catenoid, check_asymptotics,
                             classify_regions, cone, contact_angle_equilibria,
                             critical_points, cosine, cylinder, gaussian_bump, graph_constant,
                             is_conelike, load_tabulated, parse_profile, pinch_exponent,
                             pinch_points, polynomial, power, reciprocal_mollified, tabulated)


def test_eval_catalog_values():
    assert catenoid(1.0).eval(0.0) == pytest.approx((1.0, 0.0, 1.0))
    assert cone(2.0, 0.0).eval(1.0) == pytest.approx((2.0, 2.0, 0.0))
    assert cosine(2.0, 1.0, 1.0).eval(math.pi) == pytest.approx((1.0, 0.0, 1.0), abs=1e-15)


def test_cone_apex_is_one_sided():
    profile = cone(1.0, 0.0)
    assert profile.eval(0.0, side=1.0) == (0.0, 1.0, 0.0)
    assert profile.eval(0.0, side=-1.0) == (0.0, -1.0, 0.0)


@pytest.mark.parametrize("profile, z", [
    (catenoid(1.0), 0.7),
    (cosine(2.0, 1.0, 1.0), 1.3),
    (power(1.0, 3.0, 0.0), 0.8),
    (reciprocal_mollified(0.0), 1.5),
    (reciprocal_mollified(0.0), -1.5),
    (gaussian_bump(), 0.4),
    (polynomial([16.0, 0.0, -8.0, 0.0, 1.0]), 0.5),
])
def test_derivatives_match_finite_differences(profile, z):
    _, dz, dzz = profile.eval(z)
    errors = []
    for h in (1e-2, 5e-3):
        fd = (profile.value(z + h) - profile.value(z - h)) / (2 * h)
        fdd = (profile.value(z + h) - 2 * profile.value(z) + profile.value(z - h)) / h ** 2
        errors.append((abs(fd - dz), abs(fdd - dzz)))
    # second order: halving h cuts the error by about four
    assert errors[1][0] <= errors[0][0] / 3.0 + 1e-12
    assert errors[1][1] <= errors[0][1] / 3.0 + 1e-8


def test_reciprocal_profile_solves_its_defining_relation():
    profile = reciprocal_mollified(1.0)
    for z in (-3.0, 0.0, 1.0, 4.0, 50.0):
        w, dz, _ = profile.eval(z)
        assert w > 0
        assert w * (w + z - 1.0) == pytest.approx(1.0)
        assert dz == pytest.approx(-w * w / (1 + w * w))


def test_graph_constant_closed_forms():
    assert graph_constant(cylinder(1.0)) == 1.0
    assert graph_constant(cone(1.0)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert graph_constant(catenoid(1.0), (-1.0, 1.0)) == pytest.approx(1 / math.cosh(1.0), abs=1e-9)


def test_graph_constant_is_a_min_over_subwindows():
    profile = cosine(2.0, 1.0, 1.0)
    whole = graph_constant(profile, (-1.0, 5.0))
    parts = min(graph_constant(profile, (-1.0, 1.0)), graph_constant(profile, (1.0, 5.0)))
    assert whole == pytest.approx(parts, abs=1e-9)


def test_graph_constant_rejects_vertical_profile():
    steep = polynomial([0.0, 1e15])
    with pytest.raises(GraphConditionError):
        graph_constant(steep, (0.0, 1.0))


def test_critical_points():
    crit = critical_points(catenoid(1.0))
    assert len(crit) == 1
    assert crit[0].z == pytest.approx(0.0, abs=1e-9)
    assert crit[0].kind == CriticalKind.STRICT_MIN

    crit = critical_points(cosine(2.0, 1.0, 1.0), (-1.0, 7.0))
    assert [c.kind for c in crit] == [CriticalKind.STRICT_MAX, CriticalKind.STRICT_MIN,
                                      CriticalKind.STRICT_MAX]
    assert [c.z for c in crit] == pytest.approx([0.0, math.pi, 2 * math.pi], abs=1e-9)

    assert critical_points(cone(1.0), (0.1, 2.0)) == []


def test_classify_catenoid_is_one_neck():
    decomposition = classify_regions(catenoid(1.0))
    assert [r.kind for r in decomposition.regions] == [RegionKind.SHRINKING_NECK]
    assert decomposition.regions[0].z1 == -2.0
    assert decomposition.regions[0].z2 == 2.0


def test_classify_cosine_alternates():
    decomposition = classify_regions(cosine(2.0, 1.0, 1.0), (-1.0, 7.0))
    kinds = [r.kind for r in decomposition.regions]
    assert kinds == [RegionKind.BELLY, RegionKind.SHRINKING_NECK, RegionKind.BELLY]
    neck = decomposition.region_at(math.pi)
    assert neck.kind == RegionKind.SHRINKING_NECK
    assert neck.z1 == pytest.approx(math.pi / 2, abs=1e-9)
    assert neck.z2 == pytest.approx(3 * math.pi / 2, abs=1e-9)


def test_classify_cylinder_is_flat():
    decomposition = classify_regions(cylinder(1.0))
    assert [r.kind for r in decomposition.regions] == [RegionKind.FLAT_DEGENERATE]


def test_regions_tile_window_and_are_stable_under_refinement():
    profile = cosine(2.0, 1.0, 1.0)
    coarse = classify_regions(profile, (-1.0, 7.0))
    fine = classify_regions(profile, (-1.0, 7.0), samples=8192)
    assert coarse.regions[0].z1 == -1.0 and coarse.regions[-1].z2 == 7.0
    for left, right in zip(coarse.regions, coarse.regions[1:]):
        assert left.z2 == right.z1
    assert [r.kind for r in coarse.regions] == [r.kind for r in fine.regions]


def test_pinch_points():
    assert pinch_points(catenoid(1.0)) == []
    assert pinch_points(cone(1.0, 0.0)) == pytest.approx([0.0], abs=1e-9)
    bipinch = polynomial([16.0, 0.0, -8.0, 0.0, 1.0])
    points = pinch_points(bipinch)
    assert points == pytest.approx([-2.0, 2.0], abs=1e-4)
    h = 6.0 / 4095
    for z in points:
        assert bipinch.value(z) <= 1e-8
        assert bipinch.value(z - h) > 1e-8 and bipinch.value(z + h) > 1e-8


def test_check_asymptotics():
    flags = check_asymptotics(catenoid(1.0))
    assert flags.lower.eq_condition and flags.lower.no_shrink
    assert flags.upper.eq_condition and flags.upper.no_shrink

    flags = check_asymptotics(gaussian_bump())
    assert not flags.upper.eq_condition and flags.upper.no_shrink

    flags = check_asymptotics(cosine(2.0, 1.0, 1.0))
    assert flags.upper.eq_condition and not flags.upper.no_shrink


def test_contact_angle_equilibria():
    profile = cosine(2.0, 1.0, 1.0)
    right_angle = contact_angle_equilibria(profile, (-1.0, 7.0), math.pi / 2)
    assert right_angle == pytest.approx([c.z for c in critical_points(profile, (-1.0, 7.0))])

    assert contact_angle_equilibria(cone(1.0), (0.1, 2.0), math.pi / 2) == []

    tilted = contact_angle_equilibria(catenoid(1.0), (-2.0, 2.0), 3 * math.pi / 4)
    assert tilted == pytest.approx([math.atanh(math.sqrt(2) / 2)], abs=1e-8)

    with pytest.raises(PreconditionError):
        contact_angle_equilibria(catenoid(1.0), None, math.pi)


def test_tabulated_profile(tmp_path):
    z = np.linspace(-2.0, 2.0, 41)
    profile = tabulated(z, np.cosh(z))
    assert profile.value(z[7]) == pytest.approx(np.cosh(z[7]), abs=1e-14)
    assert profile.value(0.05) == pytest.approx(np.cosh(0.05), abs=1e-5)
    assert profile.asymptotic_flags.upper.status == "window-only"
    with pytest.raises(ProfileDomainError):
        profile.eval(2.5)

    path = tmp_path / "profile.txt"
    np.savetxt(path, np.column_stack([z, np.cosh(z)]))
    loaded = load_tabulated(str(path))
    assert loaded.window == (-2.0, 2.0)
    assert critical_points(loaded)[0].z == pytest.approx(0.0, abs=1e-6)


def test_tabulated_rejects_unordered_samples():
    with pytest.raises(ProfileDomainError):
        tabulated([0.0, 2.0, 1.0, 3.0], [1.0, 1.0, 1.0, 1.0])


def test_parse_profile():
    assert parse_profile("catenoid(a=2)").eval(0.0)[0] == 2.0
    assert parse_profile("cone(1, 0.5)").params == {"m": 1.0, "z_star": 0.5}
    assert parse_profile("reciprocal(z_knee=1)").kind == "reciprocal-mollified"
    assert parse_profile("cylinder", window=(0.0, 3.0)).window == (0.0, 3.0)
    assert parse_profile("polynomial(16, 0, -8, 0, 1)").value(2.0) == pytest.approx(0.0)
    assert parse_profile("polynomial(c0=1, c10=1)").value(2.0) == pytest.approx(1025.0)
    assert parse_profile("polynomial(c2=1, c0=1)").params == {"coeffs": [1.0, 0.0, 1.0]}
    with pytest.raises(ProfileDomainError):
        parse_profile("sphere(1)")
    with pytest.raises(ProfileDomainError):
        parse_profile("catenoid(b=1)")
    with pytest.raises(ProfileDomainError):
        parse_profile("polynomial(a=1)")
    with pytest.raises(ProfileDomainError):
        parse_profile("tabulated")


def test_pinch_exponent_and_cone_shape():
    assert pinch_exponent(cone(1.0)) == 0.0
    assert pinch_exponent(power(1.0, 2.0)) == pytest.approx(0.5)
    assert pinch_exponent(reciprocal_mollified()) == 1.0
    assert pinch_exponent(catenoid()) is None
    assert is_conelike(cone(1.0))
    assert is_conelike(power(1.0, 2.0))
    assert not is_conelike(catenoid(1.0))
    assert not is_conelike(polynomial([16.0, 0.0, -8.0, 0.0, 1.0]))
