import json
import subprocess
import sys

import numpy as np
import pytest

from kscalc import (
    DirichletProblem,
    EuclideanTarget,
    FixtureSpec,
    MetricMap,
    TreePoint,
    build_space,
    make_fixture,
)
from kscalc.serialize import (
    load_atlas,
    load_map,
    load_problem,
    load_space,
    map_to_json,
    problem_to_json,
    save_fixture,
    space_to_json,
    atlas_to_json,
    write_json,
)
from kscalc.targets import target_to_json


def run_cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "kscalc.cli", *map(str, args)],
        capture_output=True,
        text=True,
    )
    return proc.returncode, proc.stdout, proc.stderr


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    xs = np.linspace(0.0, 1.0, 11)
    sp = build_space({"kind": "euclidean", "points": xs[:, None].tolist()})
    write_json(tmp / "space.json", space_to_json(sp))
    write_json(tmp / "target.json", {"kind": "euclidean", "dim": 1})
    u = MetricMap(sp, EuclideanTarget(1), (2.0 * xs)[:, None])
    write_json(tmp / "map.json", map_to_json(u, "space.json", "target.json"))
    prob = DirichletProblem(
        sp, EuclideanTarget(1), list(range(1, 10)), {0: [0.0], 10: [1.0]}, 0.15
    )
    write_json(tmp / "problem.json", problem_to_json(prob, "space.json", "target.json"))
    write_json(tmp / "hyperbolic.json", {"kind": "hyperbolic"})
    write_json(tmp / "sphere.json", {"kind": "sphere"})
    fx = make_fixture(FixtureSpec(family="euclidean-grid", resolution=64, dim=1))
    save_fixture(fx, tmp / "fixture")
    return tmp


class TestSerializationRoundTrips:
    def test_space(self, workdir):
        sp = load_space(workdir / "space.json")
        assert sp.n == 11 and sp.kind == "euclidean"

    def test_map_resolves_references(self, workdir):
        u = load_map(workdir / "map.json")
        assert u.values_array.shape == (11, 1)

    def test_problem(self, workdir):
        prob, options = load_problem(workdir / "problem.json")
        assert list(prob.boundary_layer) == [0, 10]

    def test_atlas(self, workdir, tripod):
        fx = make_fixture(FixtureSpec(family="euclidean-grid", resolution=20, dim=2))
        write_json(workdir / "atlas.json", atlas_to_json(fx.atlas))
        atlas = load_atlas(workdir / "atlas.json")
        assert len(atlas.charts) == len(fx.atlas.charts)
        assert np.allclose(atlas.charts[0].phi, fx.atlas.charts[0].phi)

    def test_tree_map_round_trip(self, workdir, tripod):
        xs = np.linspace(0.0, 1.0, 16)
        sp = build_space({"kind": "euclidean", "points": xs[:, None].tolist()})
        write_json(workdir / "tree_space.json", space_to_json(sp))
        write_json(workdir / "tree_target.json", target_to_json(tripod))
        rng = np.random.default_rng(0)
        u = MetricMap(sp, tripod, [tripod.random_point(rng) for _ in range(16)])
        write_json(
            workdir / "tree_map.json",
            map_to_json(u, "tree_space.json", "tree_target.json"),
        )
        v = load_map(workdir / "tree_map.json")
        assert all(tripod.dist(a, b) == 0.0 for a, b in zip(u.values, v.values))

    def test_fixture_manifest(self, workdir):
        manifest = json.loads((workdir / "fixture" / "manifest.json").read_text())
        names = {m["name"] for m in manifest["maps"]}
        assert {"linear", "identity", "constant"} <= names
        u = load_map(workdir / "fixture" / "map_linear.json")
        assert u.space.n == 64


class TestExitCodes:
    def test_space_check_ok(self, workdir):
        code, out, _ = run_cli("space-check", "--space", workdir / "space.json")
        assert code == 0
        assert "doubling" in out

    def test_missing_file_is_io_error(self):
        code, _, err = run_cli("space-check", "--space", "/does/not/exist.json")
        assert code == 1

    def test_triangle_violation_reports_triple(self, workdir):
        write_json(
            workdir / "bad.json",
            {"kind": "matrix", "matrix": [[0, 1, 3], [1, 0, 1], [3, 1, 0]]},
        )
        code, _, err = run_cli("space-check", "--space", workdir / "bad.json")
        assert code == 2
        assert "(0, 1, 2)" in err

    def test_energy_writes_all_outputs(self, workdir):
        code, _, _ = run_cli(
            "energy",
            "--space", workdir / "space.json",
            "--map", workdir / "map.json",
            "--target", workdir / "target.json",
            "--scales", "0.45,0.35",
            "--out", workdir / "energy_run",
        )
        assert code == 0
        sweep = (workdir / "energy_run.sweep.csv").read_text().splitlines()
        assert sweep[0] == "scale,total,reliable"
        dens = (workdir / "energy_run.density.csv").read_text().splitlines()
        assert dens[0] == "index,density"
        summary = json.loads((workdir / "energy_run.json").read_text())
        assert summary["selected_scale"] == 0.35

    def test_energy_flags_subresolution_scale(self, workdir):
        code, _, err = run_cli(
            "energy",
            "--space", workdir / "space.json",
            "--map", workdir / "map.json",
            "--target", workdir / "target.json",
            "--scales", "0.45,0.01",
            "--out", workdir / "energy_flagged",
        )
        assert code == 0
        rows = (workdir / "energy_flagged.sweep.csv").read_text().splitlines()
        assert rows[2].endswith(",0")  # unreliable row flagged
        assert "reliable" in err or "warning" in err

    def test_energy_fixture_reference(self, workdir):
        manifest = json.loads((workdir / "fixture" / "manifest.json").read_text())
        entry = next(m for m in manifest["maps"] if m["name"] == "linear")
        h = 1.0 / 63
        code, _, _ = run_cli(
            "energy",
            "--map", workdir / "fixture" / entry["file"],
            "--scales", f"{12.5 * h},{10.5 * h},{8.5 * h}",
            "--out", workdir / "fx_energy",
        )
        assert code == 0
        summary = json.loads((workdir / "fx_energy.json").read_text())
        # whole-domain mean includes boundary-clipped balls; stay loose
        assert summary["extrapolated_density_mean"] == pytest.approx(
            entry["reference_density"], rel=0.1
        )

    def test_mdiff_linear_residuals(self, workdir):
        code, _, _ = run_cli(
            "mdiff",
            "--space", workdir / "fixture" / "space.json",
            "--atlas", workdir / "fixture" / "atlas.json",
            "--map", workdir / "fixture" / "map_linear.json",
            "--out", workdir / "mdiff.json",
        )
        assert code == 0
        report = json.loads((workdir / "mdiff.json").read_text())
        assert report["errors"] == {}
        assert max(f["residual"] for f in report["fits"]) < 1e-9
        first = report["fits"][0]
        # fit entries carry the seminorm, neighbor count, and radius
        assert {"seminorm", "n_neighbors", "radius", "density"} <= set(first)

    def test_mdiff_partial_failure_keeps_exit_zero(self, workdir):
        fx = make_fixture(FixtureSpec(family="euclidean-grid", resolution=20, dim=2))
        save_fixture(fx, workdir / "fx2d")
        # polyhedral family at a radius that starves the corner point but
        # leaves the interior cross-stencil fittable
        code, _, _ = run_cli(
            "mdiff",
            "--space", workdir / "fx2d" / "space.json",
            "--atlas", workdir / "fx2d" / "atlas.json",
            "--map", workdir / "fx2d" / "map_identity.json",
            "--points", "0,210",
            "--family", "polyhedral",
            "--radius", "0.06",
            "--out", workdir / "mdiff2.json",
        )
        assert code == 0
        report = json.loads((workdir / "mdiff2.json").read_text())
        assert "0" in report["errors"]  # corner lacks neighbors
        assert any(f["index"] == 210 for f in report["fits"])

    def test_dirichlet_converged(self, workdir):
        code, _, _ = run_cli(
            "dirichlet",
            "--problem", workdir / "problem.json",
            "--out", workdir / "solve_run",
        )
        assert code == 0
        rep = json.loads((workdir / "solve_run.report.json").read_text())
        assert rep["converged"] is True
        sol = json.loads((workdir / "solve_run.solution.json").read_text())
        assert sol["values"][10] == [1.0]
        traj = (workdir / "solve_run.trajectory.csv").read_text().splitlines()
        assert traj[0] == "sweep,energy"
        energies = [float(r.split(",")[1]) for r in traj[1:]]
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))

    def test_energy_with_omega_mask(self, workdir):
        write_json(workdir / "omega.json", list(range(3, 9)))
        code, _, _ = run_cli(
            "energy",
            "--space", workdir / "space.json",
            "--map", workdir / "map.json",
            "--target", workdir / "target.json",
            "--scales", "0.3",
            "--omega", workdir / "omega.json",
            "--out", workdir / "energy_omega",
        )
        assert code == 0
        rows = (workdir / "energy_omega.density.csv").read_text().splitlines()[1:]
        dens = [float(r.split(",")[1]) for r in rows]
        assert dens[0] == 0.0 and dens[10] == 0.0  # outside omega
        assert any(d > 0 for d in dens)

    def test_dirichlet_nonconverged_exit_3(self, workdir):
        code, _, _ = run_cli(
            "dirichlet",
            "--problem", workdir / "problem.json",
            "--max-sweeps", "1",
            "--tol", "1e-12",
            "--out", workdir / "solve_short",
        )
        assert code == 3
        assert (workdir / "solve_short.report.json").exists()

    def test_dirichlet_infeasible_exit_2(self, workdir):
        obj = json.loads((workdir / "problem.json").read_text())
        obj["scale"] = 0.01  # empty interior balls
        write_json(workdir / "problem_bad.json", obj)
        code, _, _ = run_cli("dirichlet", "--problem", workdir / "problem_bad.json")
        assert code == 2

    def test_verify_cat0(self, workdir):
        code, out, _ = run_cli(
            "verify", "--which", "cat0",
            "--target", workdir / "hyperbolic.json", "--samples", "500",
        )
        assert code == 0
        code2, out2, _ = run_cli(
            "verify", "--which", "cat0",
            "--target", workdir / "sphere.json", "--samples", "300",
        )
        assert code2 == 2

    def test_verify_seminorm_identities(self, workdir):
        code, out, _ = run_cli("verify", "--which", "seminorm-identities")
        assert code == 0
        payload = json.loads(out)
        assert payload["worst"] <= 1e-3


class TestDeterminism:
    def test_outputs_byte_identical_across_thread_counts(self, workdir):
        for threads in (1, 4):
            run_cli(
                "mdiff",
                "--space", workdir / "fixture" / "space.json",
                "--atlas", workdir / "fixture" / "atlas.json",
                "--map", workdir / "fixture" / "map_linear.json",
                "--threads", threads,
                "--seed", 0,
                "--out", workdir / f"det_{threads}.json",
            )
        a = (workdir / "det_1.json").read_bytes()
        b = (workdir / "det_4.json").read_bytes()
        assert a == b

    def test_repeat_run_identical(self, workdir):
        for tag in ("r1", "r2"):
            run_cli(
                "energy",
                "--space", workdir / "space.json",
                "--map", workdir / "map.json",
                "--target", workdir / "target.json",
                "--scales", "0.45,0.35",
                "--seed", 0,
                "--out", workdir / f"rep_{tag}",
            )
        assert (workdir / "rep_r1.json").read_bytes() == (
            workdir / "rep_r2.json"
        ).read_bytes()
        assert (workdir / "rep_r1.density.csv").read_bytes() == (
            workdir / "rep_r2.density.csv"
        ).read_bytes()
