import json

import numpy as np
import pytest

from topoblend import field as F
from topoblend.errors import DomainError
from topoblend.frames import CoordinateFrame
from topoblend.initialize import InitPlan
from topoblend.optimize import OptimizerSettings
from topoblend.pipeline import BlendError, BlendProblem, blend_many, blend_pair, scale_to_unit, topology_check

BOX = ((0.0, 0.0, 0.0), (1.0, 0.25, 0.25))
ER1 = F.box_region((0, 0, 0), (0.5, 0.25, 0.25))
ER2 = F.box_region((0.5, 0, 0), (1, 0.25, 0.25))
BR = F.box_region((0.3, 0, 0), (0.7, 0.25, 0.25))
P_ROD = F.PorousSpec("rod", F.tpms("P", (4, 4, 4)), -1.0)
IWP_ROD = F.PorousSpec("rod", F.tpms("IWP", (4, 4, 4), (0.125, 0, 0)), -1.0)
PLAN = InitPlan(frame=CoordinateFrame.cartesian("x"), coefficients=50, degree=3)
SMALL = OptimizerSettings(max_iters=10, resolution=(30, 10, 10))


def probes(region, n, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(BOX[0], BOX[1], (20 * n, 3))
    return pts[region.contains_points(pts)][:n]


class TestScaleToUnit:
    def test_round_trip(self):
        fwd, inv = scale_to_unit(((1, 2, 3), (2, 4, 7)))
        np.testing.assert_allclose(fwd(1, 2, 3), (0, 0, 0))
        np.testing.assert_allclose(fwd(2, 4, 7), (1, 1, 1))
        np.testing.assert_allclose(inv(*fwd(1.5, 3.1, 4.2)), (1.5, 3.1, 4.2))

    def test_degenerate(self):
        with pytest.raises(DomainError):
            scale_to_unit(((0, 0, 0), (1, 1, 0)))


class TestBlendPair:
    def test_preserves_inputs(self):
        left, right = F.normalize_spec(P_ROD), F.normalize_spec(IWP_ROD)
        phi, report, omega = blend_pair(left, right, ER1, ER2, BR, PLAN, SMALL, BOX)
        assert report.converged and report.fixed_coefficients + report.free_coefficients == 50
        for region, ref in ((ER1 - BR, left), (ER2 - BR, right)):
            pts = probes(region, 300)
            assert np.max(np.abs(phi.at(pts) - ref.at(pts))) <= 1e-12

    def test_default_box_is_hull(self):
        left, right = F.normalize_spec(P_ROD), F.normalize_spec(IWP_ROD)
        _, _, omega = blend_pair(left, right, ER1, ER2, BR, PLAN, SMALL)
        np.testing.assert_allclose(omega.box_map.hi, BOX[1])


class TestBlendProblem:
    def test_counts_checked(self):
        with pytest.raises(DomainError):
            BlendProblem([P_ROD], [ER1], [])
        with pytest.raises(DomainError):
            BlendProblem([P_ROD, IWP_ROD], [ER1], [BR])
        with pytest.raises(DomainError):
            BlendProblem([P_ROD, IWP_ROD], [ER1, ER2], [BR, BR])
        with pytest.raises(DomainError):
            BlendProblem([P_ROD, IWP_ROD], [ER1, ER2], [BR], plans=[PLAN, PLAN])

    def test_total_box(self):
        problem = BlendProblem([P_ROD, IWP_ROD], [ER1, ER2], [BR])
        assert problem.total_box() == BOX

    def test_plan_per_stage(self):
        problem = BlendProblem([P_ROD, IWP_ROD, P_ROD], [ER1, ER2, ER1], [BR, BR], plans=[PLAN, InitPlan()])
        assert problem.plan(0) is PLAN and problem.plan(1).mode == "3d"


class TestBlendMany:
    def test_two_structures(self, tmp_path):
        settings = OptimizerSettings(max_iters=10, resolution=(30, 10, 10), trace_dir=str(tmp_path))
        problem = BlendProblem([P_ROD, IWP_ROD], [ER1, ER2], [BR], [PLAN], settings)
        phi, report = blend_many(problem)
        assert report.converged
        assert (tmp_path / "stage_0" / "loss_trace.csv").exists()
        data = json.loads(report.to_json())
        assert data["betti"]["b0"] == report.betti[0]
        assert data["stages"][0]["iterations"] == report.iterations
        assert data["mismatch"] == report.mismatch

    def test_stacked_layers(self):
        box = ((0, 0, 0), (0.25, 0.25, 0.75))
        layers = [F.box_region((0, 0, 0.25 * i), (0.25, 0.25, 0.25 * (i + 1))) for i in range(3)]
        bands = [F.box_region((0, 0, 0.25 * i - 0.08), (0.25, 0.25, 0.25 * i + 0.08)) for i in (1, 2)]
        specs = [
            F.PorousSpec("rod", F.tpms("P", (8, 8, 8)), -0.7),
            F.PorousSpec("rod", F.tpms("G", (8, 8, 8)), -0.9),
            F.PorousSpec("rod", F.tpms("D", (4, 4, 4)), 0.3),
        ]
        plan = InitPlan(frame=CoordinateFrame.cartesian("z"), coefficients=50, degree=3)
        settings = OptimizerSettings(max_iters=10, resolution=(16, 16, 48))
        phi, report = blend_many(BlendProblem(specs, layers, bands, [plan], settings))
        assert len(report.stages) == 2
        # the first layer is untouched by both stages
        pts = np.random.default_rng(0).uniform((0, 0, 0), (0.25, 0.25, 0.16), (300, 3))
        ref = F.normalize_spec(specs[0])
        assert np.max(np.abs(phi.at(pts) - ref.at(pts))) <= 1e-12

    def test_disjoint_band_is_stage_error(self):
        far = F.box_region((0.0, 0, 0), (0.2, 0.25, 0.25))
        er2 = F.box_region((0.8, 0, 0), (1, 0.25, 0.25))
        with pytest.raises(BlendError) as info:
            blend_many(BlendProblem([P_ROD, IWP_ROD], [ER1, er2], [far], [PLAN], SMALL))
        assert info.value.stage == 0
        assert isinstance(info.value.cause, DomainError)

    def test_topology_check(self):
        solid = F.constant(-1.0, BOX)
        betti, oracle = topology_check(solid, BOX, (6, 6, 6))
        assert betti == (1, 0, 0) and oracle == (1, 0)
