import math

import numpy as np
import pytest

from gapfield.errors import (
    DomainError,
    InputError,
    ResourceError,
    UnsupportedInputError,
)
from gapfield.geometry import GeometrySpec, Region
from gapfield.solver import (
    BoundaryData,
    DiscreteField,
    ResolutionPolicy,
    build_annulus_grid,
    build_grid,
    energy,
    gradient,
    max_gradient,
    max_transverse_derivative,
    oscillation,
    read_field,
    regauge,
    solve_dirichlet,
    solve_neumann,
    write_field,
)

SPEC3 = GeometrySpec(n=3)
SPEC2 = GeometrySpec(n=2)


def annulus_exact_neumann(grid, r1=0.5):
    # separated solution A (r + r1^2/r) cos(theta), insulated at r1,
    # flux cos(theta) at the unit circle
    A = 1.0 / (1.0 - r1**2)
    rho = np.hypot(grid.rr, grid.zz)
    th = np.arctan2(grid.zz, grid.rr)
    return A * (rho + r1**2 / rho) * np.cos(th)


def gauge_like(grid, values):
    _, vol = grid.stiffness()
    w = vol.reshape(grid.shape)
    return values - np.dot(w.ravel(), values.ravel()) / w.sum()


class TestAnnulusOracle:
    def test_neumann_matches_separated_solution(self):
        grid = build_annulus_grid(0.5, 1.0)
        fld = solve_neumann(None, BoundaryData(kind="neumann", shape="cosine"), grid)
        exact = gauge_like(grid, annulus_exact_neumann(grid))
        err = np.abs(fld.values - exact).max() / np.abs(exact).max()
        assert err <= 1e-3

    def test_neumann_max_gradient(self):
        grid = build_annulus_grid(0.5, 1.0)
        fld = solve_neumann(None, BoundaryData(kind="neumann", shape="cosine"), grid)
        gm = max_gradient(fld)
        # gradient peaks on the insulated circle: 2A with A = 1/(1 - r1^2)
        assert gm.value == pytest.approx(8.0 / 3.0, rel=1e-3)

    def test_neumann_energy_closed_form(self):
        grid = build_annulus_grid(0.5, 1.0)
        fld = solve_neumann(None, BoundaryData(kind="neumann", shape="cosine"), grid)
        en = energy(fld)
        A = 1.0 / (1.0 - 0.25)
        half_domain_pairing = 0.5 * math.pi * A * (1.0 + 0.25)
        assert en.value == pytest.approx(half_domain_pairing, rel=1e-3)
        assert en.boundary_pairing == pytest.approx(en.value, rel=1e-6)

    def test_dirichlet_matches_separated_solution(self):
        grid = build_annulus_grid(0.5, 1.0)
        fld = solve_dirichlet(None, BoundaryData(kind="dirichlet", shape="cosine"), grid)
        B = 1.0 / (1.0 + 0.25)
        rho = np.hypot(grid.rr, grid.zz)
        th = np.arctan2(grid.zz, grid.rr)
        exact = B * (rho + 0.25 / rho) * np.cos(th)
        err = np.abs(fld.values - exact).max() / np.abs(exact).max()
        assert err <= 1e-3

    def test_convergence_order_under_halving(self):
        errs = []
        for nt, nr in ((60, 12), (120, 24), (240, 48)):
            grid = build_annulus_grid(0.5, 1.0, n_theta=nt, n_r=nr)
            fld = solve_neumann(
                None, BoundaryData(kind="neumann", shape="cosine"), grid
            )
            exact = gauge_like(grid, annulus_exact_neumann(grid))
            errs.append(np.abs(fld.values - exact).max() / np.abs(exact).max())
        for coarse, fine in zip(errs, errs[1:]):
            order = math.log2(coarse / fine)
            assert 1.7 <= order <= 2.3

    def test_tiny_inclusion_approaches_harmonic_extension(self):
        # with the insulated circle shrunk away, the solve approaches the
        # harmonic extension of the Dirichlet datum
        grid = build_annulus_grid(0.02, 1.0, n_theta=200, n_r=120)
        fld = solve_dirichlet(None, BoundaryData(kind="dirichlet", shape="cosine"), grid)
        rho = np.hypot(grid.rr, grid.zz)
        th = np.arctan2(grid.zz, grid.rr)
        harmonic = rho * np.cos(th)
        far = rho > 0.2
        err = np.abs(fld.values - harmonic)[far].max()
        assert err <= 2e-3


class TestFieldDiagnostics:
    def test_affine_field_gradient_exact(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = DiscreteField(grid.zz.copy(), grid)
        gr, gz = fld.gradient_components()
        assert np.abs(gr).max() <= 1e-10
        assert np.abs(gz - 1.0).max() <= 1e-10
        assert max_transverse_derivative(fld) == pytest.approx(1.0, abs=1e-10)

    def test_constant_field(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = DiscreteField(np.full(grid.shape, 3.7), grid)
        assert max_gradient(fld).value <= 1e-9
        assert oscillation(fld, Region.gap_patch(grid.rtilde)) == 0.0
        assert energy(fld).value <= 1e-9

    def test_height_oscillation_over_gap_patch(self):
        # osc of x_n over a gap patch equals the local width at its edge
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = DiscreteField(grid.zz.copy(), grid)
        radius = grid.rtilde
        inside = grid.station_r[grid.is_graph] <= radius * (1 + 1e-12)
        edge = grid.station_r[grid.is_graph][inside].max()
        assert oscillation(fld, Region.gap_patch(radius)) == pytest.approx(
            geom.gap_width(edge), rel=1e-12
        )

    def test_gradient_at_point_and_domain_error(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = DiscreteField(grid.zz.copy(), grid)
        vec = gradient(fld, (0.0, geom.epsilon / 2))
        assert np.allclose(vec, [0.0, 1.0], atol=1e-10)
        with pytest.raises(DomainError):
            gradient(fld, (50.0, 50.0))

    def test_argmax_tie_breaks_lexicographically(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = DiscreteField(grid.zz.copy(), grid)  # gradient magnitude 1 everywhere
        gm = max_gradient(fld)
        assert gm.index == (0, 0)


class TestGridPolicy:
    def test_transverse_spacing_in_gap(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom, ResolutionPolicy(n_gap=16))
        dz = np.diff(grid.zz[0, :])
        assert np.abs(dz).max() <= 1e-2 / 16 + 1e-15

    def test_lateral_spacing_near_contact(self):
        geom = SPEC3.at_epsilon(1e-4)
        grid = build_grid(geom)
        first = grid.station_r[grid.is_graph][1]
        assert first <= 0.25 * math.sqrt(1e-4) + 1e-15

    def test_gap_cross_section_node_floor(self):
        geom = SPEC3.at_epsilon(1e-3)
        grid = build_grid(geom, ResolutionPolicy(n_gap=16))
        assert grid.shape[1] >= 17

    def test_resource_cap(self):
        geom = SPEC3.at_epsilon(1e-3)
        with pytest.raises(ResourceError) as exc:
            build_grid(geom, ResolutionPolicy(max_unknowns=100))
        assert exc.value.required_nodes > 100

    def test_invalid_geometry_rejected(self):
        geom = GeometrySpec(n=3, f_coeffs=(0.0,)).at_epsilon(1e-3)
        with pytest.raises(InputError):
            build_grid(geom)

    def test_coarsened_policy(self):
        pol = ResolutionPolicy()
        c = pol.coarsened()
        assert c.n_gap == pol.n_gap // 2
        assert c.max_lateral_spacing == 2 * pol.max_lateral_spacing


class TestNeumannSolve:
    def test_zero_datum_gives_zero_field(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = solve_neumann(
            geom, BoundaryData(kind="neumann", shape="bump", amplitude=0.0), grid
        )
        assert np.abs(fld.values).max() == 0.0
        assert max_gradient(fld).value <= 1e-8

    def test_blowup_located_near_contact(self):
        geom = SPEC3.at_epsilon(1e-3)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        gm = max_gradient(fld)
        assert abs(gm.location[0]) <= 4.0 * math.sqrt(geom.epsilon)
        assert gm.location[1] <= geom.gap_width(gm.location[0]) + 1e-12

    def test_green_identity(self):
        geom = SPEC3.at_epsilon(1e-3)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        en = energy(fld)
        assert abs(en.value - en.boundary_pairing) / en.value <= 1e-6

    def test_gauge_mean_zero(self):
        geom = SPEC3.at_epsilon(1e-3)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        _, vol = grid.stiffness()
        mask = grid.gauge_mask()
        w = vol.reshape(grid.shape)[mask]
        mean = abs(np.dot(w, fld.values[mask]) / w.sum())
        assert mean <= 1e-10 * max(1.0, np.abs(fld.values).max())

    def test_gauge_absorbs_constants_bitwise(self):
        geom = SPEC3.at_epsilon(1e-3)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        shifted = regauge(fld.with_values(fld.values + 1.0))
        a = max_gradient(fld)
        b = max_gradient(shifted)
        assert a.value == b.value and a.index == b.index
        ra = oscillation(fld, Region.gap_patch(grid.rtilde))
        rb = oscillation(shifted, Region.gap_patch(grid.rtilde))
        assert ra == rb

    def test_compatibility_projection(self):
        geom = SPEC3.at_epsilon(1e-3)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        assert fld.system.compatibility_residual <= 1e-12

    def test_solver_stats_recorded(self):
        geom = SPEC2.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        st = fld.system.stats
        assert st.iterations > 0
        assert st.rel_residual <= 1e-9
        assert st.converged

    def test_kind_mismatch_rejected(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        with pytest.raises(InputError):
            solve_neumann(geom, BoundaryData(kind="dirichlet", shape="bump"), grid)
        with pytest.raises(InputError):
            solve_neumann(
                geom,
                BoundaryData(kind="neumann", shape="constant", amplitude=1.0),
                grid,
            )

    def test_cosine_needs_annulus(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        with pytest.raises(UnsupportedInputError):
            solve_neumann(geom, BoundaryData(kind="neumann", shape="cosine"), grid)


class TestDirichletSolve:
    def test_constant_datum_reproduced(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = solve_dirichlet(
            geom, BoundaryData(kind="dirichlet", shape="constant", amplitude=2.5), grid
        )
        assert np.abs(fld.values - 2.5).max() <= 1e-9
        assert max_gradient(fld).value <= 1e-7

    def test_bounded_gradient_in_gap(self):
        geom = SPEC3.at_epsilon(1e-4)
        grid = build_grid(geom)
        fld = solve_dirichlet(geom, BoundaryData(kind="dirichlet", shape="bump"), grid)
        gm = max_gradient(fld)
        assert gm.value < 20.0  # no blow-up scale (1/sqrt(eps) would be 100)


class TestFieldDump:
    def test_round_trip(self, tmp_path):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        fld = solve_neumann(geom, BoundaryData(kind="neumann", shape="bump"), grid)
        path = tmp_path / "field.gapf"
        write_field(fld, path)
        n, rr, zz, values = read_field(path)
        assert n == 3
        assert np.array_equal(rr, grid.rr)
        assert np.array_equal(zz, grid.zz)
        assert np.array_equal(values, fld.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.gapf"
        path.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(InputError):
            read_field(path)


class TestRegionMasks:
    def test_annulus_has_no_named_regions(self):
        grid = build_annulus_grid(0.5, 1.0)
        with pytest.raises(UnsupportedInputError):
            grid.region_mask(Region.gap_patch(0.1))

    def test_gap_patch_radius_capped(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        with pytest.raises(DomainError):
            grid.region_mask(Region.gap_patch(10.0))

    def test_off_center_unsupported(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        with pytest.raises(UnsupportedInputError):
            grid.region_mask(Region.gap_patch(0.1, center=0.05))

    def test_complement_partitions_nodes(self):
        geom = SPEC3.at_epsilon(1e-2)
        grid = build_grid(geom)
        a = grid.region_mask(Region.gap_patch(0.1))
        b = grid.region_mask(Region.outer_complement(0.1))
        assert np.array_equal(a, ~b)
