"""Initial blending weights.

Two initializers produce a :class:`~topoblend.frames.WeightFunction` that is
exactly 0 on ``ER1 \\ BR`` and 1 on ``ER2 \\ BR``:

* :func:`init_1d` - a univariate spline in a Cartesian, cylindrical or
  spherical coordinate, pinned to 0 left of ``BR``, to 1 right of it, with a
  linear ramp in between;
* :func:`init_3d` - a trivariate spline fitted by Local-LSPIA to distance
  data generated on a cell grid.

Region tests are sampled.  Whether a basis support "meets" a sampled set is
decided conservatively: each sample also claims the bases whose support lies
within one lattice step of it, so thin slivers between samples are not
missed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import spline
from .errors import DomainError
from .field import Region
from .frames import AffineBoxMap, CoordinateFrame, WeightFunction

log = logging.getLogger(__name__)


def _triple(value) -> tuple[int, int, int]:
    if np.isscalar(value):
        return (int(value),) * 3
    value = tuple(int(t) for t in value)
    if len(value) != 3:
        raise DomainError(f"expected a number or a 3-tuple, got {value}")
    return value


@dataclass(frozen=True)
class InitPlan:
    """How to build the initial weight.

    ``frame`` selects the one-dimensional initializer; ``None`` means the
    three-dimensional one.  ``coefficients``/``degree`` are per axis for 3-D
    and scalars for 1-D.  ``fit_resolution`` is the cell grid of the distance
    data; ``sample_resolution`` the lattice used for support/region tests
    (``None`` picks one from the knot spacing).
    """

    frame: CoordinateFrame | None = None
    coefficients: int | tuple = 50
    degree: int | tuple = 3
    fit_resolution: int | tuple = 64
    sample_resolution: int | tuple | None = None
    lspia_max_iters: int = 500
    lspia_tol: float = 1e-8
    max_refinements: int = 4

    def __post_init__(self):
        if self.frame is None:
            coeffs, degs = _triple(self.coefficients), _triple(self.degree)
        else:
            coeffs, degs = (int(np.ravel(self.coefficients)[0]),), (int(np.ravel(self.degree)[0]),)
        for n, p in zip(coeffs, degs):
            if p < 0 or n < p + 1:
                raise DomainError(f"coefficient count {n} must be >= degree + 1 = {p + 1}")

    @property
    def mode(self) -> str:
        return "3d" if self.frame is None else "1d"


def _lattice(box, resolution):
    lo, hi = box
    return [np.linspace(a, b, n) for a, b, n in zip(lo, hi, resolution)]


def _auto_sample_resolution(weight: WeightFunction, plan_res) -> tuple[int, int, int]:
    if plan_res is not None:
        return _triple(plan_res)
    vol = weight.volume
    if weight.frame is None:
        return tuple(max(33, 2 * (kv.num_basis - kv.degree) + 1) for kv in vol.axes)
    spans = vol.knots_u.num_basis - vol.knots_u.degree
    if weight.frame.kind == "cartesian":
        res = [9, 9, 9]
        res[weight.frame.axis] = max(129, 8 * spans + 1)
        return tuple(res)
    return (97, 97, 97)


class _SupportIndex:
    """Which coefficients' (inflated) supports contain flagged lattice samples."""

    def __init__(self, weight: WeightFunction, box, resolution):
        self.weight = weight
        self.axes = _lattice(box, resolution)
        self.resolution = tuple(resolution)
        vol = weight.volume
        if weight.frame is None:
            params = weight.box_map.forward(*self.axes)
            steps = [1.0 / (n - 1) for n in resolution]
            self.ranges = []
            for kv, t, d in zip(vol.axes, params, steps):
                t = np.clip(t, 0.0, 1.0)
                lo, _ = spline.support_index_range(kv, np.clip(t - d, 0.0, 1.0))
                _, hi = spline.support_index_range(kv, np.clip(t + d, 0.0, 1.0))
                self.ranges.append((lo, hi))
        else:
            X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
            u, _, _ = weight.params(X, Y, Z)
            spacing = np.array([(b - a) / (n - 1) for a, b, n in zip(box[0], box[1], resolution)])
            if weight.frame.kind == "cartesian":
                dt = spacing[weight.frame.axis]
            else:
                dt = float(np.linalg.norm(spacing))
            du = dt / (weight.t_range[1] - weight.t_range[0])
            kv = vol.knots_u
            self.lo_u, _ = spline.support_index_range(kv, np.clip(u - du, 0.0, 1.0))
            _, self.hi_u = spline.support_index_range(kv, np.clip(u + du, 0.0, 1.0))

    def hits(self, flagged: np.ndarray) -> np.ndarray:
        """Boolean coefficient mask: support within one step of a flagged sample."""
        shape = self.weight.volume.shape
        out = np.zeros(shape, dtype=bool)
        if self.weight.frame is not None:
            lo, hi = self.lo_u[flagged], self.hi_u[flagged]
            if lo.size:
                pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
                diff = np.zeros(shape[0] + 1, dtype=np.int64)
                np.add.at(diff, pairs[:, 0], 1)
                np.add.at(diff, pairs[:, 1] + 1, -1)
                out[:, 0, 0] = np.cumsum(diff)[:-1] > 0
            return out
        # compress each axis into runs of samples sharing the same index range
        groups, reduced = [], flagged
        for axis, (lo, hi) in enumerate(self.ranges):
            key = lo * (shape[axis] + 1) + hi
            starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            groups.append((lo[starts], hi[starts]))
            reduced = np.logical_or.reduceat(reduced, starts, axis=axis)
        idx = np.argwhere(reduced)
        if not idx.size:
            return out
        diff = np.zeros(tuple(n + 1 for n in shape), dtype=np.int64)
        bounds = [(groups[a][0][idx[:, a]], groups[a][1][idx[:, a]] + 1) for a in range(3)]
        for corner in range(8):
            sel = [(corner >> a) & 1 for a in range(3)]
            sign = (-1) ** sum(sel)
            np.add.at(diff, tuple(bounds[a][sel[a]] for a in range(3)), sign)
        counts = diff.cumsum(0).cumsum(1).cumsum(2)[: shape[0], : shape[1], : shape[2]]
        return counts > 0

    def mask_of(self, region: Region) -> np.ndarray:
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        return region.contains(X, Y, Z)


def fixed_index_set(omega: WeightFunction, br: Region, box, sample_resolution=None) -> np.ndarray:
    """Mask of coefficients whose basis is nonzero somewhere outside ``br``.

    ``box`` is the total existing region's bounding box.  For univariate
    weights the closed support is also compared against the sampled
    coordinate range of ``br`` so no boundary sliver escapes.
    """
    res = _auto_sample_resolution(omega, sample_resolution)
    index = _SupportIndex(omega, box, res)
    inside = index.mask_of(br)
    fixed = index.hits(~inside)
    if omega.frame is not None and inside.any():
        X, Y, Z = np.meshgrid(*index.axes, indexing="ij")
        u, _, _ = omega.params(X[inside], Y[inside], Z[inside])
        a, b = float(u.min()), float(u.max())
        kv = omega.volume.knots_u
        p = kv.degree
        lo = kv.knots[: kv.num_basis]
        hi = kv.knots[p + 1 : p + 1 + kv.num_basis]
        fixed[:, 0, 0] |= (lo < a) | (hi > b)
    return fixed


def index_set(mask: np.ndarray) -> set:
    """Mask to a set of ``(i, j, k)`` tuples."""
    return {tuple(int(t) for t in idx) for idx in np.argwhere(mask)}


# ---------------------------------------------------------------------------
# one-dimensional initialization


def _coordinate_range(frame, region: Region, axes):
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    inside = region.contains(X, Y, Z)
    t = frame.coordinate(X, Y, Z)
    if not inside.any():
        return None, t
    return (float(t[inside].min()), float(t[inside].max())), t


def init_1d(frame: CoordinateFrame, er1: Region, er2: Region, br: Region, plan: InitPlan, box) -> WeightFunction:
    """Univariate weight along ``frame``: 0 before ``br``, ramp inside, 1 after.

    Coefficients whose support meets the coordinate range below ``br`` are 0,
    those meeting the range above it are 1, and the rest take the value of a
    straight line from 0 to 1 across ``br`` at their Greville abscissa, which
    is linear in the coefficient index.
    """
    box_map = AffineBoxMap(*box)
    n = int(np.ravel(plan.coefficients)[0])
    p = int(np.ravel(plan.degree)[0])
    kv = spline.clamped_uniform(n, p)
    res = _auto_sample_resolution(WeightFunction(spline.univariate(kv, np.zeros(n)), box_map, frame), plan.sample_resolution)
    axes = _lattice(box, res)
    ranges = {}
    for name, region in (("er1", er1 - br), ("br", br), ("er2", er2 - br)):
        ranges[name], t = _coordinate_range(frame, region, axes)
    if ranges["br"] is None:
        raise DomainError("blending region is empty on the sampling lattice")
    t0, t1 = float(t.min()), float(t.max())
    if not t1 > t0:
        raise DomainError("frame coordinate is constant over the box")
    b0, b1 = ranges["br"]
    if ranges["er1"] is not None and ranges["er1"][1] > b0:
        raise DomainError("ER1 \\ BR is not entirely before BR along the frame coordinate")
    if ranges["er2"] is not None and ranges["er2"][0] < b1:
        raise DomainError("ER2 \\ BR is not entirely after BR along the frame coordinate")
    if ranges["er1"] is not None and ranges["er2"] is not None and ranges["er1"][1] >= ranges["er2"][0]:
        raise DomainError("ER1 \\ BR and ER2 \\ BR overlap along the frame coordinate")

    a = (b0 - t0) / (t1 - t0)
    b = (b1 - t0) / (t1 - t0)
    lo = kv.knots[:n]
    hi = kv.knots[p + 1 : p + 1 + n]
    left = lo < a
    right = hi > b
    if np.any(left & right):
        raise DomainError("blending region is narrower than one basis support; use more coefficients")
    greville = np.array([kv.knots[i + 1 : i + p + 1].mean() if p else kv.knots[i] for i in range(n)])
    coeffs = np.clip((greville - a) / (b - a), 0.0, 1.0)
    coeffs[left] = 0.0
    coeffs[right] = 1.0
    volume = spline.univariate(kv, coeffs)
    log.debug("init_1d: %d zero, %d one, %d ramp coefficients", left.sum(), right.sum(), n - left.sum() - right.sum())
    return WeightFunction(volume, box_map, frame, (t0, t1))


# ---------------------------------------------------------------------------
# three-dimensional initialization


@dataclass
class FitData:
    """Distance-ratio fitting data in physical coordinates."""

    inner: np.ndarray
    inner_values: np.ndarray
    boundary0: np.ndarray
    boundary1: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.boundary0, self.boundary1, self.inner])

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([np.zeros(len(self.boundary0)), np.ones(len(self.boundary1)), self.inner_values])


def generate_fit_data(er1: Region, er2: Region, br: Region, box, resolution=64) -> FitData:
    """Classify the cells of a uniform grid and assign distance-ratio values.

    A cell is sampled at its 8 corners and its center.  It touches a region
    if any sample is a member and touches the boundary of ``br`` if the
    samples disagree about ``br``.  Cells touching ``er1`` and the boundary
    give 0-boundary points, cells touching ``er2`` and the boundary give
    1-boundary points, and cells wholly inside ``br`` give interior points
    valued ``d0 / (d0 + d1)`` from nearest-neighbor distances to the two
    boundary sets.
    """
    res = _triple(resolution)
    lo, hi = (np.asarray(t, dtype=float) for t in box)
    corners = [np.linspace(lo[a], hi[a], res[a] + 1) for a in range(3)]
    centers = [0.5 * (c[1:] + c[:-1]) for c in corners]
    CX, CY, CZ = np.meshgrid(*corners, indexing="ij")
    MX, MY, MZ = np.meshgrid(*centers, indexing="ij")

    def cell_any_all(region):
        at_corner = region.contains(CX, CY, CZ)
        at_center = region.contains(MX, MY, MZ)
        any_ = at_center.copy()
        all_ = at_center.copy()
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    c = at_corner[dx : dx + res[0], dy : dy + res[1], dz : dz + res[2]]
                    any_ |= c
                    all_ &= c
        return any_, all_

    br_any, br_all = cell_any_all(br)
    er1_any, _ = cell_any_all(er1)
    er2_any, _ = cell_any_all(er2)
    on_boundary = br_any & ~br_all
    s0 = er1_any & on_boundary
    s1 = er2_any & on_boundary & ~s0
    inner = br_all
    pts = np.stack([MX, MY, MZ], axis=-1)
    b0 = np.unique(pts[s0], axis=0)
    b1 = np.unique(pts[s1], axis=0)
    if len(b0) == 0 or len(b1) == 0:
        raise DomainError("blending region boundary does not touch both existing regions")
    inner_pts = pts[inner]
    d0, _ = cKDTree(b0).query(inner_pts)
    d1, _ = cKDTree(b1).query(inner_pts)
    total = d0 + d1
    values = np.divide(d0, total, out=np.full_like(d0, 0.5), where=total > 0)
    return FitData(inner_pts, values, b0, b1)


def _refine_conflicts(volume, box_map, index_factory, masks, max_rounds):
    """Insert knots until no basis support meets both pinned regions."""
    for _ in range(max_rounds):
        weight = WeightFunction(volume, box_map)
        index = index_factory(weight)
        meets1 = index.hits(masks[0])
        meets2 = index.hits(masks[1])
        conflict = meets1 & meets2
        if not conflict.any():
            return volume, meets1, meets2
        log.info("refining %d conflicting supports", int(conflict.sum()))
        for axis, kv in enumerate(volume.axes):
            if kv.degree == 0:
                continue
            idx = np.unique(np.argwhere(conflict)[:, axis])
            mids = set()
            for i in idx:
                for s in range(i, i + kv.degree + 1):
                    a, b = kv.knots[s], kv.knots[s + 1]
                    if b > a:
                        mids.add(0.5 * (a + b))
            for m in sorted(mids):
                volume = spline.knot_insert(volume, axis, m)
    raise DomainError("knot refinement did not separate ER1 \\ BR from ER2 \\ BR; widen the blending region")


def init_3d(er1: Region, er2: Region, br: Region, plan: InitPlan, box) -> WeightFunction:
    """Trivariate weight fitted to distance-ratio data on a cell grid.

    Coefficients meeting ``ER1 \\ BR`` start at 0 and those meeting
    ``ER2 \\ BR`` at 1 (knots are inserted until no support meets both).
    Coefficients supported inside ``BR`` start at 0 or 1 if they only meet
    ``ER1`` or ``ER2`` respectively and at 0.5 if they meet both.  Every
    coefficient whose basis reaches outside ``BR`` is then held fixed while
    Local-LSPIA fits the rest.
    """
    box_map = AffineBoxMap(*box)
    volume = spline.uniform_volume(_triple(plan.coefficients), _triple(plan.degree), fill=0.5)
    res = _auto_sample_resolution(WeightFunction(volume, box_map), plan.sample_resolution)

    def index_factory(weight):
        return _SupportIndex(weight, box, res)

    index = index_factory(WeightFunction(volume, box_map))
    in_br = index.mask_of(br)
    in1 = index.mask_of(er1)
    in2 = index.mask_of(er2)
    volume, meets1_out, meets2_out = _refine_conflicts(
        volume, box_map, index_factory, (in1 & ~in_br, in2 & ~in_br), plan.max_refinements
    )
    weight = WeightFunction(volume, box_map)
    index = index_factory(weight)
    meets1 = index.hits(in1)
    meets2 = index.hits(in2)
    coeffs = np.full(volume.shape, 0.5)
    coeffs[meets1 & ~meets2] = 0.0
    coeffs[meets2 & ~meets1] = 1.0
    coeffs[meets1_out] = 0.0
    coeffs[meets2_out] = 1.0
    fixed = index.hits(~in_br)
    volume = volume.with_coefficients(coeffs)

    data = generate_fit_data(er1, er2, br, box, plan.fit_resolution)
    params = np.stack(box_map.forward(*data.points.T), axis=1)
    fitted, diag = spline.local_lspia_fit(
        np.clip(params, 0.0, 1.0), data.values, volume, fixed, plan.lspia_max_iters, plan.lspia_tol
    )
    log.info(
        "init_3d: %d data points, %d free coefficients, %d LSPIA sweeps, residual %.3g -> %.3g",
        len(params),
        int((~fixed).sum()),
        diag.iterations,
        diag.residuals[0] if diag.residuals else 0.0,
        diag.residuals[-1] if diag.residuals else 0.0,
    )
    return WeightFunction(fitted, box_map)


def initialize(er1: Region, er2: Region, br: Region, plan: InitPlan, box) -> WeightFunction:
    if plan.frame is not None:
        return init_1d(plan.frame, er1, er2, br, plan, box)
    return init_3d(er1, er2, br, plan, box)
