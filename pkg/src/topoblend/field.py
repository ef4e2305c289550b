"""Implicit scalar fields, porous-structure conventions and regions.

Every solid in this package is the sub-level set ``{f <= 0}`` of some field.
Fields are vectorized callables ``f(x, y, z)`` that broadcast their
arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError
from .frames import WeightFunction

UNIT_BOX = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def _as_box(box):
    lo, hi = box
    return tuple(float(t) for t in lo), tuple(float(t) for t in hi)


class ScalarField:
    """A real function of ``(x, y, z)`` with a bounding box of interest."""

    def __init__(self, func: Callable, box=UNIT_BOX, name: str = "field"):
        self.func = func
        self.box = _as_box(box)
        self.name = name

    def __call__(self, x, y, z):
        x, y, z = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (x, y, z)))
        return np.broadcast_to(np.asarray(self.func(x, y, z), dtype=float), x.shape)

    def at(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return self(points[:, 0], points[:, 1], points[:, 2])

    def __repr__(self):
        return f"ScalarField({self.name})"


def constant(value: float, box=UNIT_BOX) -> ScalarField:
    return ScalarField(lambda x, y, z: np.full(np.shape(x), float(value)), box, name=f"const({value})")


# ---------------------------------------------------------------------------
# triply periodic minimal surfaces


def _tpms_p(X, Y, Z):
    return np.cos(X) + np.cos(Y) + np.cos(Z)


def _tpms_g(X, Y, Z):
    return np.sin(X) * np.cos(Y) + np.sin(Y) * np.cos(Z) + np.sin(Z) * np.cos(X)


def _tpms_d(X, Y, Z):
    return np.cos(X) * np.cos(Y) * np.cos(Z) - np.sin(X) * np.sin(Y) * np.sin(Z)


def _tpms_iwp(X, Y, Z):
    cx, cy, cz = np.cos(X), np.cos(Y), np.cos(Z)
    return 2.0 * (cx * cy + cy * cz + cz * cx) - (np.cos(2 * X) + np.cos(2 * Y) + np.cos(2 * Z))


TPMS_KINDS = {"P": _tpms_p, "G": _tpms_g, "D": _tpms_d, "IWP": _tpms_iwp}


def tpms(kind: str, periods=(1, 1, 1), offset=(0.0, 0.0, 0.0), box=UNIT_BOX) -> ScalarField:
    """Level-set approximant of a TPMS with ``periods[a]`` cells per unit length.

    ``X = 2 pi n_x (x - offset_x)`` and so on; one cell spans ``1/n`` per axis.
    """
    kind = kind.upper()
    if kind not in TPMS_KINDS:
        raise DomainError(f"unknown TPMS kind {kind!r}; expected one of {sorted(TPMS_KINDS)}")
    periods = tuple(float(n) for n in periods)
    if len(periods) != 3 or min(periods) < 1:
        raise DomainError(f"periods must be three numbers >= 1, got {periods}")
    f = TPMS_KINDS[kind]
    k = 2.0 * np.pi * np.asarray(periods)
    o = np.asarray(offset, dtype=float)

    def func(x, y, z):
        return f(k[0] * (x - o[0]), k[1] * (y - o[1]), k[2] * (z - o[2]))

    return ScalarField(func, box, name=f"tpms-{kind}{tuple(int(n) if n.is_integer() else n for n in periods)}")


def sphere_sdf(center=(0.5, 0.5, 0.5), radius=0.25, box=UNIT_BOX) -> ScalarField:
    c = np.asarray(center, dtype=float)

    def func(x, y, z):
        return np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) - radius

    return ScalarField(func, box, name="sphere")


# ---------------------------------------------------------------------------
# porous structures


POROUS_KINDS = ("pore", "rod", "sheet")


@dataclass(frozen=True, eq=False)
class PorousSpec:
    """A porous structure: ``kind`` applied to ``base`` with its thresholds.

    ``threshold`` is a number or field ``c`` for pore/rod types and a pair
    ``(c1, c2)`` for the sheet type.
    """

    kind: str
    base: ScalarField
    threshold: object = 0.0

    def __post_init__(self):
        if self.kind not in POROUS_KINDS:
            raise DomainError(f"porous kind must be one of {POROUS_KINDS}, got {self.kind!r}")
        if self.kind == "sheet":
            if not (isinstance(self.threshold, (tuple, list)) and len(self.threshold) == 2):
                raise DomainError("sheet structures need a (c1, c2) threshold pair")

    def validate(self, samples: int = 16) -> None:
        """Check ``c1 <= c2`` on a sample lattice of the base box (sheet only)."""
        if self.kind != "sheet":
            return
        (x0, y0, z0), (x1, y1, z1) = self.base.box
        X, Y, Z = np.meshgrid(
            np.linspace(x0, x1, samples), np.linspace(y0, y1, samples), np.linspace(z0, z1, samples), indexing="ij"
        )
        c1, c2 = (_threshold_field(c)(X, Y, Z) for c in self.threshold)
        if np.any(c1 > c2):
            raise DomainError("sheet thresholds violate c1 <= c2 somewhere in the box")

    def contains(self, x, y, z) -> np.ndarray:
        """Raw set membership, straight from the set definitions."""
        phi = self.base(x, y, z)
        if self.kind == "pore":
            return phi >= _threshold_field(self.threshold)(x, y, z)
        if self.kind == "rod":
            return phi <= _threshold_field(self.threshold)(x, y, z)
        c1, c2 = (_threshold_field(c)(x, y, z) for c in self.threshold)
        return (c1 <= phi) & (phi <= c2)


def _threshold_field(c) -> ScalarField:
    if isinstance(c, ScalarField):
        return c
    return constant(float(c))


def normalize_spec(spec: PorousSpec) -> ScalarField:
    """Signed field whose sub-level set ``{<= 0}`` is exactly the structure."""
    phi = spec.base
    if spec.kind == "pore":
        c = _threshold_field(spec.threshold)
        func = lambda x, y, z: c(x, y, z) - phi(x, y, z)  # noqa: E731
    elif spec.kind == "rod":
        c = _threshold_field(spec.threshold)
        func = lambda x, y, z: phi(x, y, z) - c(x, y, z)  # noqa: E731
    else:
        c1, c2 = (_threshold_field(c) for c in spec.threshold)

        def func(x, y, z):
            v = phi(x, y, z)
            return np.maximum(c1(x, y, z) - v, v - c2(x, y, z))

    return ScalarField(func, phi.box, name=f"{spec.kind}({phi.name})")


def blended_field(omega: WeightFunction | Callable, left: ScalarField, right: ScalarField) -> ScalarField:
    """``(1 - omega) * left + omega * right``."""

    def func(x, y, z):
        w = omega(x, y, z)
        return (1.0 - w) * left(x, y, z) + w * right(x, y, z)

    return ScalarField(func, left.box, name=f"blend({left.name}, {right.name})")


def clip_to_model(phi: ScalarField, phi_model: ScalarField) -> ScalarField:
    """Restrict a porous field to the model ``{phi_model <= 0}`` by pointwise max."""
    return ScalarField(
        lambda x, y, z: np.maximum(phi(x, y, z), phi_model(x, y, z)), phi.box, name=f"clip({phi.name})"
    )


# ---------------------------------------------------------------------------
# regions


class Region:
    """Point set ``{indicator <= 0}`` with a bounding box.

    Combined regions keep exact boolean membership through ``member`` rather
    than relying on min/max of indicators at the shared boundary.
    """

    def __init__(self, indicator: Callable, box, member: Callable | None = None, name: str = "region"):
        self.indicator = indicator if isinstance(indicator, ScalarField) else ScalarField(indicator, box)
        self.box = _as_box(box)
        self._member = member
        self.name = name

    def contains(self, x, y, z) -> np.ndarray:
        if self._member is not None:
            x, y, z = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (x, y, z)))
            return np.asarray(self._member(x, y, z), dtype=bool)
        return self.indicator(x, y, z) <= 0.0

    def contains_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return self.contains(points[:, 0], points[:, 1], points[:, 2])

    def __or__(self, other):
        return union(self, other)

    def __and__(self, other):
        return intersection(self, other)

    def __sub__(self, other):
        return difference(self, other)

    def __repr__(self):
        return f"Region({self.name})"


def box_region(lo, hi, name="box") -> Region:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def indicator(x, y, z):
        d = [np.maximum(lo[a] - t, t - hi[a]) for a, t in enumerate((x, y, z))]
        return np.maximum(np.maximum(d[0], d[1]), d[2])

    return Region(indicator, (lo, hi), name=name)


def half_space(normal, offset, box=UNIT_BOX, name="half-space") -> Region:
    """``{p : normal . p <= offset}``."""
    n = np.asarray(normal, dtype=float)
    return Region(lambda x, y, z: n[0] * x + n[1] * y + n[2] * z - offset, box, name=name)


def cylinder_shell(axis="z", center=(0.0, 0.0, 0.0), r_min=0.0, r_max=1.0, box=UNIT_BOX, name="cylinder") -> Region:
    """``{r_min <= r <= r_max}`` with ``r`` the distance to the axis line."""
    from .frames import CoordinateFrame

    frame = CoordinateFrame.cylindrical(axis, center)

    def indicator(x, y, z):
        r = frame.coordinate(x, y, z)
        return np.maximum(r_min - r, r - r_max)

    return Region(indicator, box, name=name)


def sphere_shell(center=(0.0, 0.0, 0.0), r_min=0.0, r_max=1.0, box=UNIT_BOX, name="sphere") -> Region:
    from .frames import CoordinateFrame

    frame = CoordinateFrame.spherical(center)

    def indicator(x, y, z):
        r = frame.coordinate(x, y, z)
        return np.maximum(r_min - r, r - r_max)

    return Region(indicator, box, name=name)


def implicit_region(func: Callable, box=UNIT_BOX, name="implicit") -> Region:
    return Region(func, box, name=name)


def _hull(a, b):
    lo = np.minimum(a.box[0], b.box[0])
    hi = np.maximum(a.box[1], b.box[1])
    return lo, hi


def union(a: Region, b: Region) -> Region:
    return Region(
        lambda x, y, z: np.minimum(a.indicator(x, y, z), b.indicator(x, y, z)),
        _hull(a, b),
        member=lambda x, y, z: a.contains(x, y, z) | b.contains(x, y, z),
        name=f"({a.name} | {b.name})",
    )


def intersection(a: Region, b: Region) -> Region:
    return Region(
        lambda x, y, z: np.maximum(a.indicator(x, y, z), b.indicator(x, y, z)),
        (np.maximum(a.box[0], b.box[0]), np.minimum(a.box[1], b.box[1])),
        member=lambda x, y, z: a.contains(x, y, z) & b.contains(x, y, z),
        name=f"({a.name} & {b.name})",
    )


def difference(a: Region, b: Region) -> Region:
    return Region(
        lambda x, y, z: np.maximum(a.indicator(x, y, z), -b.indicator(x, y, z)),
        a.box,
        member=lambda x, y, z: a.contains(x, y, z) & ~b.contains(x, y, z),
        name=f"({a.name} - {b.name})",
    )


def empty_region(box=UNIT_BOX) -> Region:
    return Region(lambda x, y, z: np.ones(np.shape(x)), box, name="empty")


# ---------------------------------------------------------------------------
# image-defined regions


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) grayscale image as a 2-D uint8 array."""
    from PIL import Image

    with Image.open(path) as img:
        if img.format != "PPM" or img.mode not in ("L", "I", "1"):
            raise DomainError(f"{path}: not a grayscale PGM image")
        return np.asarray(img.convert("L"), dtype=np.uint8)


def _pixel_lookup(image: np.ndarray, x, y):
    h, w = image.shape
    col = np.clip(np.floor(np.asarray(x) * w).astype(int), 0, w - 1)
    row = np.clip(np.floor((1.0 - np.asarray(y)) * h).astype(int), 0, h - 1)
    return image[row, col]


def image_region(image, threshold: int = 128, z_range=(0.0, 1.0)) -> tuple[Region, Region]:
    """Split the extruded unit square into ``(dark, light)`` regions of an image.

    Pixel ``(row, col)`` of an ``h x w`` image covers
    ``[col/w, (col+1)/w] x [1-(row+1)/h, 1-row/h]`` (row 0 at the top), and
    membership uses the nearest pixel.  ``image`` is an array or a PGM path.
    """
    if not isinstance(image, np.ndarray):
        image = read_pgm(image)
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise DomainError("image must be a nonempty 2-D array")
    z0, z1 = float(z_range[0]), float(z_range[1])
    box = ((0.0, 0.0, z0), (1.0, 1.0, z1))
    dark = image < threshold

    def extent(x, y, z):
        return np.maximum.reduce([-x, x - 1.0, -y, y - 1.0, z0 - z, z - z1])

    def make(want_dark, name):
        def indicator(x, y, z):
            is_dark = _pixel_lookup(dark, x, y)
            inside = is_dark if want_dark else ~is_dark
            return np.maximum(extent(x, y, z), np.where(inside, -1.0, 1.0))

        return Region(indicator, box, name=name)

    return make(True, "image-dark"), make(False, "image-light")


def region_interface_points(a: Region, b: Region, box, resolution) -> np.ndarray:
    """Midpoints of lattice edges joining a sample in ``a`` to one in ``b``."""
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(box[0], box[1], resolution)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    in_a = a.contains(X, Y, Z)
    in_b = b.contains(X, Y, Z) & ~in_a
    pts = np.stack([X, Y, Z], axis=-1)
    found = []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        cross = (in_a[lo] & in_b[hi]) | (in_b[lo] & in_a[hi])
        found.append(0.5 * (pts[lo][cross] + pts[hi][cross]))
    return np.concatenate(found, axis=0)


def dilate_region_boundary(a: Region, b: Region, radius: float, box=None, resolution=(64, 64, 64)) -> Region:
    """Blending region of all points within ``radius`` of the a/b interface.

    The interface is sampled on a lattice over ``box`` (default: hull of both
    regions); distances come from a KD-tree over the interface samples.
    """
    box = _as_box(box) if box is not None else _as_box(_hull(a, b))
    interface = region_interface_points(a, b, box, resolution)
    if len(interface) == 0:
        raise DomainError("regions share no interface inside the bounding box")
    tree = cKDTree(interface)

    def indicator(x, y, z):
        x, y, z = np.broadcast_arrays(x, y, z)
        d, _ = tree.query(np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1))
        return (d - radius).reshape(x.shape)

    return Region(indicator, box, name=f"band({a.name}/{b.name}, {radius})")
