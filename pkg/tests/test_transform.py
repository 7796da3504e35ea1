import numpy as np
import pytest

from gapfield.errors import DomainError
from gapfield.geometry import GapGeometry, RadialProfile
from gapfield.transform import (
    GapChart,
    coefficient_bounds_check,
    coefficients,
    flatten,
    unflatten,
)


def make_geom(eps=0.01, f=(1.0,), g=(0.0,), n=3, R=0.25):
    return GapGeometry(
        n=n,
        epsilon=eps,
        f=RadialProfile(f),
        g=RadialProfile(g),
        patch_radius=R,
    )


def chart_at(geom, z=None):
    z = np.zeros(geom.n - 1) if z is None else np.asarray(z, dtype=float)
    return GapChart(geom, z)


class TestChartMap:
    def test_bottom_maps_to_minus_half_height(self):
        geom = make_geom()
        chart = chart_at(geom)
        x = np.array([0.05, 0.02, float(geom.g.value(np.hypot(0.05, 0.02)))])
        y = flatten(chart, x)
        assert y[-1] == pytest.approx(-chart.width, rel=1e-13)
        assert np.allclose(y[:-1], x[:-1])

    def test_top_maps_to_plus_half_height(self):
        geom = make_geom()
        chart = chart_at(geom)
        r = 0.1
        x = np.array([r, 0.0, geom.epsilon + float(geom.f.value(r))])
        y = flatten(chart, x)
        assert y[-1] == pytest.approx(chart.width, rel=1e-13)

    def test_midline_maps_to_zero(self):
        geom = make_geom()
        chart = chart_at(geom)
        r = 0.07
        mid = float(geom.g.value(r)) + 0.5 * geom.gap_width(r)
        y = flatten(chart, np.array([r, 0.0, mid]))
        assert y[-1] == pytest.approx(0.0, abs=1e-15)

    def test_unflatten_trivials(self):
        geom = make_geom()
        chart = chart_at(geom, [0.05, 0.0])
        x = unflatten(chart, np.array([0.06, 0.01, 0.0]))
        r = np.hypot(0.06, 0.01)
        assert x[-1] == pytest.approx(
            float(geom.g.value(r)) + 0.5 * geom.gap_width([0.06, 0.01]), rel=1e-13
        )
        top = unflatten(chart, np.array([0.06, 0.01, chart.width]))
        assert top[-1] == pytest.approx(
            geom.epsilon + float(geom.f.value(r)), rel=1e-13
        )

    def test_round_trip(self):
        geom = make_geom(eps=1e-3, f=(2.0, 0.3), g=(-0.5,))
        rng = np.random.default_rng(3)
        for _ in range(200):
            z = rng.uniform(-0.2, 0.2, size=2)
            chart = GapChart(geom, z)
            xp = rng.uniform(-0.3, 0.3, size=2)
            r = np.linalg.norm(xp)
            if r > 2 * geom.patch_radius:
                continue
            t = rng.uniform(0.0, 1.0)
            xn = float(geom.g.value(r)) + t * geom.gap_width(xp)
            x = np.concatenate([xp, [xn]])
            back = unflatten(chart, flatten(chart, x))
            assert np.allclose(back, x, rtol=1e-12, atol=1e-15)

    def test_domain_errors(self):
        geom = make_geom()
        chart = chart_at(geom)
        with pytest.raises(DomainError):
            flatten(chart, np.array([0.0, 0.0, geom.epsilon * 2.0]))  # above the slab
        with pytest.raises(DomainError):
            unflatten(chart, np.array([0.0, 0.0, 2.0 * chart.width]))


class TestCoefficients:
    def test_origin_values(self):
        # at the base point with vanishing slopes: lateral diag 1/2, corner 2
        geom = make_geom()
        chart = chart_at(geom)
        cm = coefficients(chart, np.zeros(3))
        assert np.allclose(np.diag(cm.matrix)[:-1], 0.5, atol=1e-14)
        assert cm.matrix[-1, -1] == pytest.approx(2.0, rel=1e-14)
        assert np.allclose(cm.matrix[-1, :-1], 0.0, atol=1e-15)
        assert np.allclose(cm.matrix, cm.matrix.T, atol=0)

    def test_mixed_entry_example(self):
        # f = |x'|^2, g = 0, z' = 0, y = ((0.1, 0), 0), eps = 0.01:
        # e1 = -2 * 0.1 * (y_n + width(0)) / width(y') evaluated directly
        geom = make_geom(eps=0.01)
        chart = chart_at(geom)
        y = np.array([0.1, 0.0, 0.0])
        cm = coefficients(chart, y)
        width0 = 0.01
        widthy = 0.01 + 0.1**2
        e1_expected = -2.0 * 0.1 * (0.0 + width0) / widthy
        a_n1_expected = widthy / (2.0 * width0) * e1_expected
        assert cm.mix[0] == pytest.approx(e1_expected, rel=1e-14)
        assert cm.matrix[-1, 0] == pytest.approx(a_n1_expected, rel=1e-14)
        assert cm.matrix[0, -1] == cm.matrix[-1, 0]

    def test_positive_definite(self):
        geom = make_geom(eps=1e-3, f=(1.5, 0.2), g=(-0.3,))
        rng = np.random.default_rng(11)
        for _ in range(50):
            z = rng.uniform(-0.1, 0.1, size=2)
            chart = GapChart(geom, z)
            yp = z + rng.uniform(-0.05, 0.05, size=2)
            yn = rng.uniform(-chart.width, chart.width)
            cm = coefficients(chart, np.concatenate([yp, [yn]]))
            assert np.linalg.eigvalsh(cm.matrix).min() > 0

    def test_transverse_entry_matches_definition(self):
        geom = make_geom()
        chart = chart_at(geom, [0.05, 0.0])
        y = np.array([0.06, 0.01, 0.3 * chart.width])
        cm = coefficients(chart, y)
        assert cm.mix[-1] == pytest.approx(
            2.0 * chart.width / geom.gap_width(y[:-1]), rel=1e-14
        )


class TestBoundsCheck:
    def test_quadratic_geometry_bounds(self):
        geom = make_geom(eps=1e-3)
        rep = coefficient_bounds_check(geom, np.zeros(2), seed=5)
        assert rep.lam >= 1.0 / 8.0
        assert rep.Lam <= 8.0
        assert rep.mix_ratio < np.inf

    def test_deterministic_given_seed(self):
        geom = make_geom(eps=1e-3)
        a = coefficient_bounds_check(geom, np.zeros(2), seed=9)
        b = coefficient_bounds_check(geom, np.zeros(2), seed=9)
        assert a == b

    def test_stability_across_gap_distances(self):
        # ellipticity and mixing statistics stable as the gap closes
        reps = []
        for eps in (1e-2, 1e-3, 1e-4):
            geom = make_geom(eps=eps)
            reps.append(coefficient_bounds_check(geom, np.zeros(2), seed=1))
        lam = [r.lam for r in reps]
        Lam = [r.Lam for r in reps]
        mix = [r.mix_ratio for r in reps]
        assert max(lam) / min(lam) <= 2.0
        assert max(Lam) / min(Lam) <= 2.0
        assert max(mix) / min(mix) <= 1.5
        hol = [r.holder_mix for r in reps]
        assert max(hol) / min(hol) <= 2.0

    def test_base_point_must_be_interior(self):
        geom = make_geom()
        with pytest.raises(DomainError):
            coefficient_bounds_check(geom, np.array([0.3, 0.0]), seed=0)

    def test_off_center_base_point(self):
        geom = make_geom(eps=1e-3)
        rep = coefficient_bounds_check(geom, np.array([0.1, 0.05]), seed=2)
        assert 0 < rep.lam <= rep.Lam < np.inf
        d = rep.to_dict()
        assert d["samples"] == rep.samples
