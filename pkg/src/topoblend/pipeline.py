"""Pairwise and sequential blending of porous structures."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import topology
from .errors import DomainError
from .field import PorousSpec, Region, ScalarField, blended_field, normalize_spec
from .frames import AffineBoxMap, WeightFunction
from .initialize import InitPlan, fixed_index_set, initialize
from .optimize import OptimizerSettings, betti_with_euler, optimize

log = logging.getLogger(__name__)


class BlendError(RuntimeError):
    """A blending stage failed; ``stage`` is its zero-based index."""

    def __init__(self, stage: int, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def scale_to_unit(box):
    """Forward and inverse affine maps between ``box`` and the unit cube."""
    m = AffineBoxMap(*box)

    def forward(x, y, z):
        return m.forward(x, y, z)

    def inverse(u, v, w):
        return m.inverse(u, v, w)

    return forward, inverse


@dataclass(frozen=True)
class StageReport:
    stage: int
    iterations: int
    loss_trace: tuple
    converged: bool
    betti: tuple
    fixed_coefficients: int
    free_coefficients: int
    init_time: float
    optimize_time: float

    @property
    def wall_time(self) -> float:
        return self.init_time + self.optimize_time


@dataclass(frozen=True)
class BlendReport:
    """Per-stage records plus the final Betti numbers at threshold 0.

    ``betti`` is ``(b0, b1, b2)`` from persistence, with ``b1`` from the Euler
    characteristic; ``oracle`` is ``(b0, b2)`` from voxel labelling.
    """

    stages: tuple
    betti: tuple
    oracle: tuple
    resolution: tuple
    wall_time: float

    @property
    def mismatch(self) -> bool:
        return (self.betti[0], self.betti[2]) != tuple(self.oracle)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.stages)

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "mismatch": self.mismatch,
            "betti": {"b0": self.betti[0], "b1": self.betti[1], "b2": self.betti[2]},
            "oracle": {"b0": self.oracle[0], "b2": self.oracle[1]},
            "resolution": list(self.resolution),
            "wall_time": self.wall_time,
            "stages": [
                {**asdict(s), "loss_trace": list(s.loss_trace), "betti": list(s.betti), "wall_time": s.wall_time}
                for s in self.stages
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def topology_check(phi: ScalarField, box, resolution) -> tuple[tuple, tuple]:
    """``(b0, b1, b2)`` by persistence and ``(b0, b2)`` by the oracle at threshold 0."""
    grid = topology.sample_field(phi, box, resolution)
    diagram = topology.compute_persistence(grid, dims=(0, 2))
    return betti_with_euler(diagram, 0.0), topology.oracle_betti(grid, 0.0)


def blend_pair(
    left: ScalarField,
    right: ScalarField,
    er1: Region,
    er2: Region,
    br: Region,
    plan: InitPlan,
    settings: OptimizerSettings = OptimizerSettings(),
    box=None,
    stage: int = 0,
) -> tuple[ScalarField, StageReport, WeightFunction]:
    """Blend two normalized fields across ``br``.

    ``box`` is the parametric frame of the weight (default: hull of ``er1``
    and ``er2``).  Returns ``(1 - omega) * left + omega * right`` with the
    optimized weight and the stage report.
    """
    if box is None:
        box = (er1 | er2).box
    t0 = time.perf_counter()
    omega = initialize(er1, er2, br, plan, box)
    fixed = fixed_index_set(omega, br, box, plan.sample_resolution)
    t1 = time.perf_counter()
    omega, rep = optimize(omega, left, right, br, box, fixed, settings)
    t2 = time.perf_counter()
    report = StageReport(
        stage=stage,
        iterations=rep.iterations,
        loss_trace=rep.loss_trace,
        converged=rep.converged,
        betti=rep.betti,
        fixed_coefficients=int(fixed.sum()),
        free_coefficients=int(fixed.size - fixed.sum()),
        init_time=t1 - t0,
        optimize_time=t2 - t1,
    )
    log.info("stage %d: %s after %d iterations", stage, rep.status, rep.iterations)
    return blended_field(omega, left, right), report, omega


@dataclass
class BlendProblem:
    """Ordered structures with their existing regions and the blending regions between them.

    ``blend_regions[i]`` joins the accumulated region of structures ``0..i``
    to structure ``i + 1``.  ``plans`` holds one init plan per stage or a
    single plan reused for every stage.
    """

    specs: list
    regions: list
    blend_regions: list
    plans: list = field(default_factory=lambda: [InitPlan()])
    settings: OptimizerSettings = OptimizerSettings()
    report_resolution: tuple | None = None
    box: tuple | None = None

    def __post_init__(self):
        if len(self.specs) < 2:
            raise DomainError("need at least two structures to blend")
        if len(self.regions) != len(self.specs):
            raise DomainError(f"{len(self.specs)} structures but {len(self.regions)} existing regions")
        if len(self.blend_regions) != len(self.specs) - 1:
            raise DomainError(
                f"{len(self.specs)} structures need {len(self.specs) - 1} blending regions, got {len(self.blend_regions)}"
            )
        if len(self.plans) not in (1, len(self.blend_regions)):
            raise DomainError("give one init plan or one per blending region")

    def plan(self, stage: int) -> InitPlan:
        return self.plans[0] if len(self.plans) == 1 else self.plans[stage]

    def total_box(self):
        if self.box is not None:
            return self.box
        total = self.regions[0]
        for r in self.regions[1:]:
            total = total | r
        return total.box

    def fields(self) -> list[ScalarField]:
        return [normalize_spec(s) if isinstance(s, PorousSpec) else s for s in self.specs]


def _check_overlap(stage, br: Region, cer: Region, er: Region, box, resolution=(33, 33, 33)):
    axes = [np.linspace(a, b, n) for a, b, n in zip(box[0], box[1], resolution)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    in_br = br.contains(X, Y, Z)
    if not (in_br & cer.contains(X, Y, Z)).any() or not (in_br & er.contains(X, Y, Z)).any():
        raise DomainError(f"blending region {stage} must meet both the accumulated region and the next region")


def blend_many(problem: BlendProblem) -> tuple[ScalarField, BlendReport]:
    """Fold :func:`blend_pair` over the structures from first to last.

    The running field enters each stage with threshold 0 and the accumulated
    region grows by union.  All stages share one parametric frame, the box of
    the total existing region.
    """
    start = time.perf_counter()
    box = problem.total_box()
    fields = problem.fields()
    phi = fields[0]
    cer = problem.regions[0]
    stages = []
    for i, br in enumerate(problem.blend_regions):
        er = problem.regions[i + 1]
        try:
            _check_overlap(i, br, cer, er, box)
            settings = problem.settings
            if settings.trace_dir is not None:
                settings = replace(settings, trace_dir=str(Path(settings.trace_dir) / f"stage_{i}"))
            phi, report, _ = blend_pair(phi, fields[i + 1], cer, er, br, problem.plan(i), settings, box, i)
        except (DomainError, ValueError) as exc:
            raise BlendError(i, exc) from exc
        stages.append(report)
        cer = cer | er
    resolution = tuple(problem.report_resolution or problem.settings.resolution)
    betti, oracle = topology_check(phi, box, resolution)
    report = BlendReport(tuple(stages), betti, oracle, resolution, time.perf_counter() - start)
    if report.mismatch:
        log.warning("persistence Betti %s disagrees with oracle %s", betti, oracle)
    return phi, report
