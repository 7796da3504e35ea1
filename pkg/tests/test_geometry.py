import numpy as np
import pytest

from gapfield.errors import DomainError, InputError
from gapfield.geometry import (
    GapGeometry,
    GeometrySpec,
    OuterClosure,
    RadialProfile,
    Region,
    build_closure,
    validate,
)


def make_geom(eps=0.01, f=(1.0,), g=(0.0,), R=0.25, kappa=1.0, n=3):
    return GapGeometry(
        n=n,
        epsilon=eps,
        f=RadialProfile(f),
        g=RadialProfile(g),
        patch_radius=R,
        kappa=kappa,
    )


class TestProfiles:
    def test_value_and_slope(self):
        p = RadialProfile((2.0, -0.5))
        r = 0.3
        assert p.value(r) == pytest.approx(2 * r**2 - 0.5 * r**4, rel=1e-14)
        assert p.slope(r) == pytest.approx(4 * r - 2.0 * r**3, rel=1e-14)

    def test_gradient_matches_slope_direction(self):
        p = RadialProfile((1.5, 0.25))
        x = np.array([0.1, -0.2])
        r = np.linalg.norm(x)
        g = p.grad(x)
        assert np.allclose(g, p.slope(r) * x / r, rtol=1e-12)

    def test_base_laplacian_quadratic(self):
        # r^2 in R^m has Laplacian 2m
        p = RadialProfile((1.0,))
        assert p.base_laplacian(0.17, m=2) == pytest.approx(4.0)
        assert p.base_laplacian(0.0, m=3) == pytest.approx(6.0)


class TestScales:
    def test_gap_width_at_origin(self):
        geom = make_geom(eps=0.01)
        assert geom.gap_width(np.zeros(2)) == pytest.approx(0.01, abs=0)

    def test_gap_width_off_origin(self):
        geom = make_geom(eps=0.01)
        z = np.array([0.1, 0.0])
        assert geom.gap_width(z) == pytest.approx(0.02, rel=1e-14)

    def test_gap_width_two_profiles(self):
        geom = make_geom(eps=1e-4, f=(2.0,), g=(-1.0,))
        # 1e-4 + 3 * 0.05^2
        assert geom.gap_width(0.05) == pytest.approx(7.6e-3, rel=1e-12)

    def test_contact_scale(self):
        geom = make_geom(eps=0.01)
        assert geom.contact_scale(0.0) == pytest.approx(0.01, abs=0)
        assert geom.contact_scale(0.1) == pytest.approx(0.02, rel=1e-14)

    def test_out_of_patch_rejected(self):
        geom = make_geom()
        with pytest.raises(DomainError):
            geom.gap_width(0.6)
        with pytest.raises(DomainError):
            geom.contact_scale(np.array([0.5, 0.5]))

    def test_width_scale_comparability(self):
        # kappa eta <= width <= (1 + 1/kappa) eta on a dense sample
        geom = make_geom(eps=1e-3, f=(0.5,), g=(0.0,), kappa=0.5)
        r = np.linspace(0.0, 2 * geom.patch_radius, 2000)
        for ri in r[:: 97]:
            w = geom.gap_width(ri)
            eta = geom.contact_scale(ri)
            assert geom.kappa * eta <= w * (1 + 1e-12)
            assert w <= (1.0 + 1.0 / geom.kappa) * eta * (1 + 1e-12)
        # the ratio for this profile stays in [0.5, 1]
        ratios = np.array([geom.gap_width(ri) / geom.contact_scale(ri) for ri in r])
        assert ratios.min() >= 0.5 - 1e-12
        assert ratios.max() <= 1.0 + 1e-12

    def test_local_scale_doubling(self):
        # nearby points have comparable contact scales: 1/8 <= eta(z)/eta(y) <= 8
        geom = make_geom(eps=1e-4)
        rng = np.random.default_rng(42)
        for _ in range(500):
            z = rng.uniform(-geom.patch_radius, geom.patch_radius, size=2)
            if np.linalg.norm(z) >= geom.patch_radius:
                continue
            eta_z = geom.contact_scale(z)
            step = rng.normal(size=2)
            step *= rng.uniform(0, 0.25 * np.sqrt(eta_z)) / np.linalg.norm(step)
            eta_y = geom.contact_scale(z + step)
            assert eta_z <= 8.0 * eta_y * (1 + 1e-12)
            assert eta_y <= 8.0 * eta_z * (1 + 1e-12)


class TestValidation:
    def test_quadratic_passes(self):
        assert validate(make_geom()).ok

    def test_flat_profiles_fail(self):
        report = validate(make_geom(f=(0.0,), g=(0.0,)))
        assert not report.ok
        assert any(c.name == "strict-convexity" for c in report.failures())

    def test_ordering_violation_fails(self):
        report = validate(make_geom(f=(1.0,), g=(2.0,), kappa=0.5))
        assert not report.ok
        names = {c.name for c in report.failures()}
        assert "ordering" in names or "strict-convexity" in names

    def test_pinch_violation_reports_worst_point(self):
        # f - g = 0.2 r^2 dips below kappa r^2 with kappa = 0.5
        report = validate(make_geom(f=(0.2,), kappa=0.5))
        fails = [c for c in report.failures() if c.name == "pinch-lower"]
        assert fails and fails[0].worst_radius is not None
        assert fails[0].margin < 0

    def test_zero_gap_fails(self):
        report = validate(make_geom(eps=0.0))
        assert not report.ok
        assert any(c.name == "gap-positive" for c in report.failures())

    def test_report_serializes(self):
        d = validate(make_geom()).to_dict()
        assert d["ok"] is True
        assert {c["name"] for c in d["checks"]} >= {"ordering", "pinch-lower"}


class TestClosure:
    def test_tangent_matched_closure(self):
        geom = make_geom()
        closure = build_closure(geom)
        edge = 2 * geom.patch_radius
        # graphs meet the arcs in value at the junction
        assert closure.outer_height(edge) == pytest.approx(
            float(geom.g.value(edge)), abs=1e-12
        )
        assert closure.inclusion_height(edge) == pytest.approx(
            geom.epsilon + float(geom.f.value(edge)), abs=1e-12
        )
        # blend leaves the trusted patch untouched
        r = np.linspace(0, geom.patch_radius, 50)
        assert np.allclose(closure.outer_height(r), geom.g.value(r), atol=1e-15)
        assert np.allclose(
            closure.inclusion_height(r), geom.epsilon + geom.f.value(r), atol=1e-15
        )
        # positive gap along the whole graph region
        rr = np.linspace(0, edge, 500)
        assert np.all(closure.column_gap(rr) > 0)

    def test_closure_slope_continuity(self):
        geom = make_geom()
        closure = build_closure(geom)
        # finite-difference slope matches the analytic one across the blend
        for r0 in (0.2, 0.3, 0.4, 0.45):
            h = 1e-6
            fd = (closure.outer_height(r0 + h) - closure.outer_height(r0 - h)) / (2 * h)
            assert fd == pytest.approx(float(closure.outer_height_slope(r0)), rel=1e-5)
            fd = (
                closure.inclusion_height(r0 + h) - closure.inclusion_height(r0 - h)
            ) / (2 * h)
            assert fd == pytest.approx(
                float(closure.inclusion_height_slope(r0)), rel=1e-5
            )

    def test_oversized_inclusion_rejected(self):
        geom = GapGeometry(
            n=3,
            epsilon=0.01,
            f=RadialProfile((1.0,)),
            g=RadialProfile((0.0,)),
            patch_radius=0.25,
            outer=OuterClosure(radius=1.0, inclusion_radius=0.95),
        )
        with pytest.raises(InputError):
            build_closure(geom)

    def test_flat_inclusion_needs_explicit_radius(self):
        # decreasing profile slope at the patch edge defeats tangent matching
        geom = make_geom(f=(1.0, -4.0))
        with pytest.raises(InputError):
            build_closure(geom)


class TestRegions:
    def test_radius_must_be_positive(self):
        with pytest.raises(InputError):
            Region.gap_patch(0.0)
        with pytest.raises(InputError):
            Region.base_disk(-1.0)

    def test_spec_factory(self):
        spec = GeometrySpec(n=3, f_coeffs=(1.0,), g_coeffs=(0.0,))
        g1 = spec.at_epsilon(1e-2)
        g2 = spec.at_epsilon(1e-3)
        assert g1.epsilon == 1e-2 and g2.epsilon == 1e-3
        assert g1.f == g2.f
        assert "n3" in spec.label
