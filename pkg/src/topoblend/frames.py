"""Maps from physical space to the parametric unit box of a weight spline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spline
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class AffineBoxMap:
    """Axis-aligned affine map taking the box ``[lo, hi]`` onto the unit cube."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(hi <= lo):
            raise DomainError(f"degenerate box {lo.tolist()} .. {hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def scale(self) -> np.ndarray:
        return 1.0 / (self.hi - self.lo)

    def forward(self, x, y, z):
        return tuple((np.asarray(t, dtype=float) - self.lo[a]) / (self.hi[a] - self.lo[a]) for a, t in enumerate((x, y, z)))

    def inverse(self, u, v, w):
        return tuple(self.lo[a] + np.asarray(t, dtype=float) * (self.hi[a] - self.lo[a]) for a, t in enumerate((u, v, w)))


_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class CoordinateFrame:
    """Scalar coordinate along which a one-dimensional blend varies.

    ``kind`` is ``"cartesian"`` (``t`` = coordinate along ``axis``),
    ``"cylindrical"`` (``t`` = distance to the line through ``center``
    parallel to ``axis``) or ``"spherical"`` (``t`` = distance to ``center``).
    """

    kind: str
    axis: int = 0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("cartesian", "cylindrical", "spherical"):
            raise DomainError(f"unknown frame kind {self.kind!r}")
        axis = _AXES.get(self.axis, self.axis)
        if axis not in (0, 1, 2):
            raise DomainError(f"axis must be x, y or z, got {self.axis!r}")
        object.__setattr__(self, "axis", axis)
        center = tuple(float(c) for c in self.center)
        if len(center) != 3 or not all(np.isfinite(center)):
            raise DomainError("frame center must be a finite 3-vector")
        object.__setattr__(self, "center", center)

    @classmethod
    def cartesian(cls, axis="x"):
        return cls("cartesian", axis=axis)

    @classmethod
    def cylindrical(cls, axis="z", center=(0.0, 0.0, 0.0)):
        return cls("cylindrical", axis=axis, center=center)

    @classmethod
    def spherical(cls, center=(0.0, 0.0, 0.0)):
        return cls("spherical", center=center)

    def coordinate(self, x, y, z) -> np.ndarray:
        p = [np.asarray(t, dtype=float) - c for t, c in zip((x, y, z), self.center)]
        if self.kind == "cartesian":
            return p[self.axis] + self.center[self.axis]
        if self.kind == "cylindrical":
            others = [p[a] for a in range(3) if a != self.axis]
            return np.sqrt(others[0] ** 2 + others[1] ** 2)
        return np.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "axis": "xyz"[self.axis], "center": list(self.center)}


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """A spline volume composed with a physical-to-parametric map.

    With a ``frame`` the volume is univariate in ``u = (t - t0) / (t1 - t0)``
    where ``t`` is the frame coordinate; otherwise ``(u, v, w)`` come from
    ``box_map``.  Parameters are clipped to the unit box so the function can
    be evaluated slightly outside the region it was built for.
    """

    volume: spline.SplineVolume
    box_map: AffineBoxMap
    frame: CoordinateFrame | None = None
    t_range: tuple[float, float] = (0.0, 1.0)

    def params(self, x, y, z):
        if self.frame is None:
            u, v, w = self.box_map.forward(x, y, z)
        else:
            t0, t1 = self.t_range
            u = (self.frame.coordinate(x, y, z) - t0) / (t1 - t0)
            u, v, w = np.broadcast_arrays(u, 0.0, 0.0)
        return tuple(np.clip(t, 0.0, 1.0) for t in np.broadcast_arrays(u, v, w))

    def __call__(self, x, y, z):
        u, v, w = self.params(x, y, z)
        return spline.volume_eval(self.volume, u, v, w)

    def with_volume(self, volume: spline.SplineVolume) -> WeightFunction:
        return WeightFunction(volume, self.box_map, self.frame, self.t_range)

    def on_lattice(self, axes) -> np.ndarray:
        """Values on the tensor lattice ``axes = (xs, ys, zs)``."""
        xs, ys, zs = axes
        if self.frame is None:
            u, v, w = (np.clip(t, 0.0, 1.0) for t in self.box_map.forward(xs, ys, zs))
            return self.volume.evaluate_grid(u, v, w)
        X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
        return self(X, Y, Z)

    def basis_at(self, x, y, z) -> dict:
        """``{(i, j, k): R_ijk}`` at one physical point."""
        u, v, w = self.params(x, y, z)
        return spline.volume_gradient_wrt_coeff(self.volume, float(u), float(v), float(w))
