"""Topological repair of a blending weight.

Pairs of the sub-level persistence diagram at threshold 0 fall into four
regions of the (birth, death) plane:

* I   - born above 0, never part of the structure;
* II  - born at or below 0 and dying above ``-b``: a small excess piece;
* III - born at or below 0 and dying below ``-b``: a short-lived gap;
* IV  - dead at or below 0, already merged inside the structure.

Only II and III pairs are isolated components (dim 0) or cavities (dim 2)
at the zero level.  The loss pushes III deaths down to 0 and II births up
to 0, counting only pairs whose two critical vertices sit in the blending
region, and the weight's free coefficients follow it by AdaGrad.
"""

from __future__ import annotations

import csv
import enum
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import topology
from .field import Region, ScalarField
from .frames import WeightFunction
from .topology import FilteredGrid, PersistenceDiagram, PersistencePair

log = logging.getLogger(__name__)

LOSS_DIMS = (0, 2)


class RegionClass(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    ESSENTIAL = "essential"
    IRRELEVANT = "irrelevant"


def classify(birth: float, death: float) -> RegionClass:
    if death == np.inf:
        return RegionClass.ESSENTIAL
    if birth > 0:
        return RegionClass.I
    if death <= 0:
        return RegionClass.IV
    return RegionClass.II if death >= -birth else RegionClass.III


def classify_pair(pair: PersistencePair) -> RegionClass:
    """Region of one pair; ties ``d == -b`` go to II."""
    return classify(pair.birth, pair.death)


_CODES = (RegionClass.I, RegionClass.II, RegionClass.III, RegionClass.IV, RegionClass.ESSENTIAL)


def _classify_arrays(birth: np.ndarray, death: np.ndarray) -> np.ndarray:
    """Vectorized :func:`classify` as indices into ``_CODES``."""
    out = np.full(birth.shape, 3, dtype=np.int8)
    live = (birth <= 0) & (death > 0)
    out[live & (death >= -birth)] = 1
    out[live & (death < -birth)] = 2
    out[birth > 0] = 0
    out[np.isinf(death)] = 4
    return out


def _vertex_in_br(grid: FilteredGrid, br: Region, vertices: np.ndarray) -> np.ndarray:
    if len(vertices) == 0:
        return np.zeros(0, dtype=bool)
    return br.contains_points(grid.points(vertices))


def filter_by_br(pair: PersistencePair, grid: FilteredGrid, br: Region) -> PersistencePair:
    """The pair itself if both critical vertices lie in ``br``, else the zero pair."""
    zero = PersistencePair(pair.dim, 0.0, 0.0, pair.birth_cell, pair.death_cell)
    if pair.essential or pair.birth_vertex is None or pair.death_vertex is None:
        return zero
    inside = _vertex_in_br(grid, br, np.array([pair.birth_vertex, pair.death_vertex]))
    return pair if inside.all() else zero


@dataclass(frozen=True)
class Contribution:
    """One selected pair's share of the loss."""

    dim: int
    index: int
    label: RegionClass
    value: float
    vertex: tuple[int, int, int]

    @property
    def sign(self) -> int:
        return 1 if self.label is RegionClass.III else -1


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    contributions: tuple[Contribution, ...] = ()
    counts: dict = field(default_factory=dict)

    def count(self, dim: int, label: RegionClass) -> int:
        return self.counts.get((dim, label), 0)

    def selected_key(self) -> tuple:
        """Identity of the selected pairs, used to detect pairing changes."""
        return tuple(sorted((c.dim, c.label.value, c.vertex) for c in self.contributions))


def loss(diagram: PersistenceDiagram, grid: FilteredGrid, br: Region) -> LossBreakdown:
    """Sum of III deaths minus sum of II births over BR-filtered pairs in dims 0 and 2.

    ``diagram`` must carry critical vertices (see :func:`topology.inverse_map`).
    """
    contributions = []
    counts = {}
    for dim in LOSS_DIMS:
        part = diagram.part(dim)
        if not len(part):
            continue
        labels = _classify_arrays(part.birth, part.death)
        candidate = np.flatnonzero((labels == 1) | (labels == 2))
        if not candidate.size:
            continue
        if part.birth_vertex is None:
            raise ValueError("diagram has no critical vertices; run inverse_map first")
        bv = part.birth_vertex[candidate]
        dv = part.death_vertex[candidate]
        inside = _vertex_in_br(grid, br, bv) & _vertex_in_br(grid, br, dv)
        for n, ok in zip(candidate, inside):
            if not ok:
                continue
            label = _CODES[labels[n]]
            if label is RegionClass.III:
                value, vertex = float(part.death[n]), part.death_vertex[n]
            else:
                value, vertex = -float(part.birth[n]), part.birth_vertex[n]
            contributions.append(Contribution(dim, int(n), label, value, tuple(int(t) for t in vertex)))
            counts[(dim, label)] = counts.get((dim, label), 0) + 1
    total = float(sum(c.value for c in contributions))
    return LossBreakdown(total, tuple(contributions), counts)


def loss_gradient(
    breakdown: LossBreakdown,
    grid: FilteredGrid,
    omega: WeightFunction,
    left: ScalarField,
    right: ScalarField,
    fixed: np.ndarray | None = None,
    difference: np.ndarray | None = None,
) -> dict:
    """Sparse gradient ``{(i, j, k): dL/dC_ijk}`` of the loss in ``breakdown``.

    Each selected critical value ``phi(xi)`` moves with a coefficient as
    ``R_ijk(xi) * (right - left)(xi)`` while its critical vertex stays put.
    ``difference`` may hold ``right - left`` already sampled on the grid.
    Coefficients flagged in ``fixed`` are left out.
    """
    grad: dict = {}
    if not breakdown.contributions:
        return grad
    vertices = np.array([c.vertex for c in breakdown.contributions])
    pts = grid.points(vertices)
    if difference is not None:
        diff = difference[tuple(vertices.T)]
    else:
        diff = right.at(pts) - left.at(pts)
    for c, p, delta in zip(breakdown.contributions, pts, diff):
        for idx, r in omega.basis_at(*p).items():
            if fixed is not None and fixed[idx]:
                continue
            grad[idx] = grad.get(idx, 0.0) + c.sign * r * float(delta)
    return {k: v for k, v in grad.items() if v != 0.0}


# ---------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class OptimizerSettings:
    eta: float = 0.05
    eps: float = 1e-8
    max_iters: int = 50
    resolution: tuple = (50, 50, 50)
    trace_dir: str | None = None


@dataclass(frozen=True)
class OptimizeReport:
    iterations: int
    loss_trace: tuple[float, ...]
    converged: bool
    betti: tuple[int, int, int]
    wall_time: float
    resolution: tuple

    @property
    def status(self) -> str:
        return "converged" if self.converged else "unconverged"


@dataclass
class OptimizerState:
    """Mutable AdaGrad state for one run."""

    coefficients: np.ndarray
    accumulated: np.ndarray
    eta: float
    eps: float
    iteration: int = 0
    trace: list = field(default_factory=list)

    def step(self, grad: dict) -> None:
        g = np.zeros_like(self.coefficients)
        for idx, v in grad.items():
            g[idx] = v
        self.accumulated += g * g
        touched = g != 0.0
        self.coefficients[touched] -= self.eta * g[touched] / np.sqrt(self.accumulated[touched] + self.eps)
        self.iteration += 1


class _LatticeBlend:
    """Blended field sampled on a fixed lattice with the inputs cached."""

    def __init__(self, left: ScalarField, right: ScalarField, box, resolution):
        self.box = box
        self.resolution = tuple(int(n) for n in resolution)
        self.axes = [np.linspace(a, b, n) for a, b, n in zip(box[0], box[1], self.resolution)]
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        self.left = np.asarray(left(X, Y, Z), dtype=float)
        self.right = np.asarray(right(X, Y, Z), dtype=float)
        self.difference = self.right - self.left

    def grid(self, omega: WeightFunction) -> FilteredGrid:
        w = omega.on_lattice(self.axes)
        values = (1.0 - w) * self.left + w * self.right
        bad = ~np.isfinite(values)
        if bad.any():
            idx = tuple(int(t) for t in np.argwhere(bad)[0])
            raise ValueError(f"blended field is not finite at lattice index {idx}")
        return FilteredGrid(values, self.box)


def evaluate(grid: FilteredGrid, br: Region) -> tuple[PersistenceDiagram, LossBreakdown]:
    diagram = topology.inverse_map(grid, topology.compute_persistence(grid, dims=LOSS_DIMS))
    return diagram, loss(diagram, grid, br)


def betti_with_euler(diagram: PersistenceDiagram, t: float = 0.0) -> tuple[int, int, int]:
    """``(b0, b1, b2)`` at ``t``; ``b1`` from the Euler characteristic when dim 1 was skipped."""
    b0, b1, b2 = topology.betti_at(diagram, t)
    if 1 not in diagram.parts and diagram.complex is not None:
        b1 = b0 + b2 - diagram.complex.euler_characteristic(t)
    return b0, b1, b2


def _write_trace(trace_dir: Path, rows: list, diagrams: list) -> None:
    trace_dir.mkdir(parents=True, exist_ok=True)
    with open(trace_dir / "loss_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "n0_II", "n0_III", "n2_II", "n2_III", "b0", "b2"])
        writer.writerows(rows)
    for it, diagram in diagrams:
        topology.write_diagram_csv(diagram, trace_dir / f"diagram_{it:03d}.csv")


def optimize(
    omega: WeightFunction,
    left: ScalarField,
    right: ScalarField,
    br: Region,
    box,
    fixed: np.ndarray,
    settings: OptimizerSettings = OptimizerSettings(),
) -> tuple[WeightFunction, OptimizeReport]:
    """AdaGrad on the free coefficients until the loss is 0 or ``max_iters`` updates.

    The loss is checked before every update, so an already clean weight
    returns unchanged after zero updates.  Fixed coefficients are never
    written.
    """
    start = time.perf_counter()
    sampler = _LatticeBlend(left, right, box, settings.resolution)
    state = OptimizerState(
        coefficients=np.array(omega.volume.coefficients, dtype=float),
        accumulated=np.zeros(omega.volume.shape),
        eta=settings.eta,
        eps=settings.eps,
    )
    rows, diagrams = [], []
    while True:
        grid = sampler.grid(omega)
        diagram, lb = evaluate(grid, br)
        state.trace.append(lb.total)
        b0, _, b2 = topology.betti_at(diagram, 0.0)
        rows.append(
            [
                state.iteration,
                lb.total,
                lb.count(0, RegionClass.II),
                lb.count(0, RegionClass.III),
                lb.count(2, RegionClass.II),
                lb.count(2, RegionClass.III),
                b0,
                b2,
            ]
        )
        if settings.trace_dir is not None:
            diagrams.append((state.iteration, diagram))
        log.info("iteration %d: loss %.6g, betti (%d, %d)", state.iteration, lb.total, b0, b2)
        if lb.total == 0.0 or state.iteration >= settings.max_iters:
            break
        grad = loss_gradient(lb, grid, omega, left, right, fixed, sampler.difference)
        if not grad:
            log.warning("loss %.3g has no free coefficient to move; stopping", lb.total)
            break
        state.step(grad)
        omega = omega.with_volume(omega.volume.with_coefficients(state.coefficients.copy()))
    if settings.trace_dir is not None:
        _write_trace(Path(settings.trace_dir), rows, diagrams)
    report = OptimizeReport(
        iterations=state.iteration,
        loss_trace=tuple(state.trace),
        converged=state.trace[-1] == 0.0,
        betti=betti_with_euler(diagram, 0.0),
        wall_time=time.perf_counter() - start,
        resolution=sampler.resolution,
    )
    return omega, report
