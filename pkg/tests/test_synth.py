import numpy as np
import pytest

from kscalc import (
    FixtureSpec,
    ValidationError,
    alignment_defect,
    chart_audit,
    density_via_mdiff,
    make_aligned_family,
    make_fixture,
)


class TestMakeFixture:
    def test_resolution_floor(self):
        with pytest.raises(ValidationError):
            make_fixture(FixtureSpec(family="euclidean-grid", resolution=8))

    def test_linear_1d_reference(self):
        fx = make_fixture(FixtureSpec(family="euclidean-grid", resolution=64, dim=1))
        ref = fx.reference("linear")
        assert ref.density == pytest.approx(2.0 / np.sqrt(3.0))

    def test_torus_identity_reference(self):
        fx = make_fixture(
            FixtureSpec(family="flat-torus-grid", resolution=16, dim=2)
        )
        assert fx.reference("identity").density == pytest.approx(np.sqrt(0.5))

    def test_constant_reference_zero(self):
        fx = make_fixture(FixtureSpec(family="euclidean-grid", resolution=32, dim=1))
        assert fx.reference("constant").density == 0.0

    @pytest.mark.parametrize(
        "family,res,dim",
        [
            ("euclidean-grid", 32, 1),
            ("euclidean-grid", 20, 2),
            ("flat-torus-grid", 16, 2),
            ("two-chart-curve", 128, 1),
        ],
    )
    def test_atlas_passes_audits(self, family, res, dim):
        fx = make_fixture(FixtureSpec(family=family, resolution=res, dim=dim))
        fx.atlas.validate_cover(fx.space.n)
        for c in fx.atlas.charts:
            rep = chart_audit(fx.space, c)
            if not rep.degenerate:
                assert rep.window_ok(c.epsilon)

    def test_perturbed_fixture_passes_declared_slack(self):
        fx = make_fixture(
            FixtureSpec(family="euclidean-grid", resolution=24, dim=2, epsilon=0.05)
        )
        for c in fx.atlas.charts:
            rep = chart_audit(fx.space, c)
            assert rep.window_ok(c.epsilon)

    def test_reference_densities_match_fits(self):
        for spec in (
            FixtureSpec(family="euclidean-grid", resolution=48, dim=1),
            FixtureSpec(family="euclidean-grid", resolution=20, dim=2),
            FixtureSpec(family="flat-torus-grid", resolution=24, dim=2),
            FixtureSpec(family="two-chart-curve", resolution=128),
        ):
            fx = make_fixture(spec)
            for ref in fx.maps:
                out = density_via_mdiff(ref.map, fx.atlas, 2.0)
                got = out.densities[fx.interior]
                got = got[~np.isnan(got)]
                rel = np.abs(got - ref.density) / max(ref.density, 1e-9)
                assert (rel <= 0.05).mean() >= 0.95


class TestAlignedFamily:
    def test_pairwise_defects_within_budget(self):
        spec = FixtureSpec(family="euclidean-grid", resolution=24, dim=2)
        eps = [0.1, 0.05]
        atlases = make_aligned_family(spec, eps)
        fx = make_fixture(spec)
        d = alignment_defect(
            fx.space, atlases[0].charts[0], atlases[1].charts[0]
        )
        assert d <= 0.15 + 1e-9

    def test_curve_family_defects(self):
        spec = FixtureSpec(family="two-chart-curve", resolution=128)
        atlases = make_aligned_family(spec, [0.08, 0.04])
        fx = make_fixture(spec)
        for ci, cj in zip(atlases[0].charts, atlases[1].charts):
            assert alignment_defect(fx.space, ci, cj) <= 0.12 + 1e-9

    def test_single_entry_family(self):
        spec = FixtureSpec(family="euclidean-grid", resolution=24, dim=1)
        atlases = make_aligned_family(spec, [0.1])
        assert len(atlases) == 1

    def test_identical_atlases_zero_defect(self):
        spec = FixtureSpec(family="euclidean-grid", resolution=24, dim=1)
        (atlas,) = make_aligned_family(spec, [0.1])
        fx = make_fixture(spec)
        assert (
            alignment_defect(fx.space, atlas.charts[0], atlas.charts[0]) == 0.0
        )

    def test_eps_list_validation(self):
        spec = FixtureSpec(family="euclidean-grid", resolution=24, dim=1)
        with pytest.raises(ValidationError):
            make_aligned_family(spec, [0.05, 0.1])
        with pytest.raises(ValidationError):
            make_aligned_family(spec, [])
