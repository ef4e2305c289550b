"""Sub-level persistence of sampled fields on cubical complexes.

A :class:`FilteredGrid` holds samples of a field on a lattice.  The complex is
the V-construction: lattice points are vertices, and every cube spanned by
lattice points gets the maximum of its vertex values.  Cells are addressed by
their position in the *doubled* lattice (shape ``2n - 1`` per axis), where a
coordinate is odd exactly along the axes the cell extends in.

The filtration orders cells by ``(value, dimension, doubled index)``.  Ties
among the vertices of a cell are broken towards the lowest vertex index, and
that vertex is the cell's critical vertex.

Two independent routes compute persistence:

* :func:`reduce_boundary` - the textbook column reduction with clearing,
  valid in every dimension;
* union-find with the elder rule, for dimension 0 on the edge graph and for
  the top dimension on the dual graph of top cells (voids of the sub-level
  set are components of its complement).

:func:`compute_persistence` uses union-find for dimensions 0 and 2 and the
reduction for dimension 1.  :func:`oracle_betti` counts components and
cavities of thresholded voxels by connected-component labeling and shares no
code with either route.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import ndimage

from .errors import DomainError

INF = float("inf")


@dataclass(frozen=True, eq=False)
class FilteredGrid:
    """Field samples at the lattice ``linspace(lo, hi, n)`` per axis."""

    values: np.ndarray
    box: tuple = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3:
            raise DomainError(f"grid values must be 3-D, got shape {values.shape}")
        if min(values.shape) < 2:
            raise DomainError(f"resolution must be >= 2 per axis, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        lo, hi = self.box
        object.__setattr__(self, "box", (tuple(float(t) for t in lo), tuple(float(t) for t in hi)))

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo, hi = self.box
        return tuple(np.linspace(a, b, n) for a, b, n in zip(lo, hi, self.resolution))

    def points(self, indices) -> np.ndarray:
        """Physical coordinates of lattice indices ``(n, 3)``."""
        indices = np.asarray(indices, dtype=int).reshape(-1, 3)
        axes = self.axes
        return np.stack([axes[a][indices[:, a]] for a in range(3)], axis=1)

    def digest(self) -> str:
        return hashlib.sha1(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]


def sample_field(phi, box, resolution) -> FilteredGrid:
    """Sample ``phi(x, y, z)`` on the inclusive lattice over ``box``."""
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != 3 or min(resolution) < 2:
        raise DomainError(f"resolution must be three integers >= 2, got {resolution}")
    lo, hi = box
    axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, resolution)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    values = np.asarray(phi(X, Y, Z), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i, j, k = np.argwhere(bad)[0]
        raise DomainError(f"non-finite sample {values[i, j, k]} at {(axes[0][i], axes[1][j], axes[2][k])}")
    return FilteredGrid(values, box)


# ---------------------------------------------------------------------------
# the cubical complex


@dataclass(frozen=True, eq=False)
class CubicalComplex:
    """All cells of the V-construction over a vertex array.

    ``value``, ``crit`` and ``dim`` are arrays over the doubled lattice:
    filtration value, flat index of the critical vertex and cell dimension.
    """

    shape: tuple
    value: np.ndarray
    crit: np.ndarray
    dim: np.ndarray

    @classmethod
    def from_vertices(cls, vertices: np.ndarray) -> CubicalComplex:
        vertices = np.asarray(vertices, dtype=float)
        nd = vertices.ndim
        dshape = tuple(2 * n - 1 for n in vertices.shape)
        value = np.empty(dshape)
        crit = np.empty(dshape, dtype=np.int64)
        even = tuple(slice(0, None, 2) for _ in range(nd))
        value[even] = vertices
        crit[even] = np.arange(vertices.size).reshape(vertices.shape)
        for axis in range(nd):
            odd = list(slice(None) for _ in range(nd))
            left = list(odd)
            right = list(odd)
            odd[axis] = slice(1, None, 2)
            left[axis] = slice(0, -1, 2)
            right[axis] = slice(2, None, 2)
            odd, left, right = tuple(odd), tuple(left), tuple(right)
            vl, vr = value[left], value[right]
            cl, cr = crit[left], crit[right]
            take_right = (vr > vl) | ((vr == vl) & (cr < cl))
            value[odd] = np.where(take_right, vr, vl)
            crit[odd] = np.where(take_right, cr, cl)
        grids = np.meshgrid(*(np.arange(n) for n in dshape), indexing="ij")
        dim = sum((g % 2) for g in grids).astype(np.int8)
        return cls(tuple(vertices.shape), value, crit, dim)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def filtration_order(self) -> np.ndarray:
        """Flat doubled indices sorted by ``(value, dim, index)``."""
        v = self.value.ravel()
        d = self.dim.ravel()
        return np.lexsort((np.arange(v.size), d, v))

    def euler_characteristic(self, t: float) -> int:
        present = self.value <= t
        return int(sum((-1) ** k * np.count_nonzero(present & (self.dim == k)) for k in range(self.ndim + 1)))

    def boundary(self, cell: int) -> list[int]:
        """Flat doubled indices of the codimension-1 faces of ``cell``."""
        dshape = self.value.shape
        coords = np.unravel_index(cell, dshape)
        faces = []
        for axis, c in enumerate(coords):
            if c % 2:
                for step in (-1, 1):
                    nc = list(coords)
                    nc[axis] = c + step
                    faces.append(int(np.ravel_multi_index(nc, dshape)))
        return faces


# ---------------------------------------------------------------------------
# diagrams


@dataclass(frozen=True)
class PersistencePair:
    dim: int
    birth: float
    death: float
    birth_cell: int
    death_cell: int = -1
    birth_vertex: tuple | None = None
    death_vertex: tuple | None = None

    @property
    def essential(self) -> bool:
        return self.death == INF


@dataclass
class DiagramPart:
    """Pairs of one dimension as parallel arrays (``death_cell = -1`` if infinite)."""

    birth: np.ndarray
    death: np.ndarray
    birth_cell: np.ndarray
    death_cell: np.ndarray
    birth_vertex: np.ndarray | None = None
    death_vertex: np.ndarray | None = None

    def __len__(self):
        return len(self.birth)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


@dataclass
class PersistenceDiagram:
    parts: dict
    resolution: tuple = ()
    field_hash: str = ""
    complex: CubicalComplex | None = field(default=None, repr=False)

    def part(self, dim: int) -> DiagramPart:
        return self.parts.get(dim, DiagramPart.empty())

    def pairs(self, dim: int | None = None) -> list[PersistencePair]:
        dims = sorted(self.parts) if dim is None else [dim]
        out = []
        for k in dims:
            p = self.part(k)
            for n in range(len(p)):
                bv = tuple(int(t) for t in p.birth_vertex[n]) if p.birth_vertex is not None else None
                dv = None
                if p.death_vertex is not None and p.death_cell[n] >= 0:
                    dv = tuple(int(t) for t in p.death_vertex[n])
                out.append(
                    PersistencePair(k, float(p.birth[n]), float(p.death[n]), int(p.birth_cell[n]), int(p.death_cell[n]), bv, dv)
                )
        return out

    def intervals(self, dim: int) -> list[tuple[float, float]]:
        p = self.part(dim)
        return sorted(zip(p.birth.tolist(), p.death.tolist()))


def _make_part(cplx: CubicalComplex, births, deaths) -> DiagramPart:
    """Pairs from birth/death cell ids; zero-persistence pairs are dropped."""
    births = np.asarray(births, dtype=np.int64)
    deaths = np.asarray(deaths, dtype=np.int64)
    v = cplx.value.ravel()
    b = v[births] if births.size else np.zeros(0)
    d = np.where(deaths >= 0, v[np.maximum(deaths, 0)], INF) if deaths.size else np.zeros(0)
    keep = b < d
    order = np.lexsort((births[keep], d[keep], b[keep]))
    return DiagramPart(b[keep][order], d[keep][order], births[keep][order], deaths[keep][order])


# ---------------------------------------------------------------------------
# route 1: boundary-matrix reduction


def reduce_boundary(vertices, dims=None) -> dict:
    """Persistence pairs of the V-construction by column reduction with clearing.

    Works on vertex arrays of any dimension.  Returns ``{dim: DiagramPart}``
    restricted to ``dims`` (default: all).  Pure Python; meant for small
    complexes and as a reference for the fast route.
    """
    cplx = vertices if isinstance(vertices, CubicalComplex) else CubicalComplex.from_vertices(vertices)
    order = cplx.filtration_order()
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    dim_flat = cplx.dim.ravel()
    top = cplx.ndim
    wanted = sorted(set(range(top + 1)) if dims is None else set(dims))
    hi = min(max(wanted) + 1, top)
    lo = max(min(wanted), 1)

    pivots = {}  # pivot row rank -> reduced column
    cleared = set()
    negative = set()
    pairs = {k: ([], []) for k in range(top + 1)}
    for k in range(hi, lo - 1, -1):
        for cell in order[dim_flat[order] == k]:
            cell = int(cell)
            if int(rank[cell]) in cleared:
                continue
            column = {int(rank[f]) for f in cplx.boundary(cell)}
            while column:
                other = pivots.get(max(column))
                if other is None:
                    break
                column ^= other
            if column:
                low = max(column)
                pivots[low] = column
                cleared.add(low)
                negative.add(cell)
                pairs[k - 1][0].append(int(order[low]))
                pairs[k - 1][1].append(cell)

    parts = {}
    for k in wanted:
        births, deaths = list(pairs[k][0]), list(pairs[k][1])
        born = set(births)
        for cell in order[dim_flat[order] == k]:
            cell = int(cell)
            if cell not in negative and cell not in born:
                births.append(cell)
                deaths.append(-1)
        parts[k] = _make_part(cplx, births, deaths)
    return parts


# ---------------------------------------------------------------------------
# route 2: union-find with the elder rule


@nb.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@nb.njit(cache=True)
def _elder_merge(n_nodes, node_rank, edge_a, edge_b, edge_order):
    """Process edges in order; return (dying node, edge) for every merge."""
    parent = np.arange(n_nodes)
    oldest = np.arange(n_nodes)
    size = np.ones(n_nodes, dtype=np.int64)
    dying = np.empty(len(edge_order), dtype=np.int64)
    killer = np.empty(len(edge_order), dtype=np.int64)
    count = 0
    for e in edge_order:
        ra = _find(parent, edge_a[e])
        rb = _find(parent, edge_b[e])
        if ra == rb:
            continue
        oa = oldest[ra]
        ob = oldest[rb]
        if node_rank[oa] < node_rank[ob]:
            dying[count] = ob
            keep = oa
        else:
            dying[count] = oa
            keep = ob
        killer[count] = e
        count += 1
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        oldest[ra] = keep
    return dying[:count], killer[:count]


def _cells_with_parity(dshape, odd_axes):
    """Flat doubled ids of all cells odd exactly along ``odd_axes`` (C order)."""
    slices = tuple(slice(1, None, 2) if a in odd_axes else slice(0, None, 2) for a in range(len(dshape)))
    ids = np.arange(int(np.prod(dshape))).reshape(dshape)
    return ids[slices]


def _persistence_dim0(cplx: CubicalComplex) -> DiagramPart:
    dshape = cplx.value.shape
    nd = len(dshape)
    vshape = cplx.shape
    n_vert = int(np.prod(vshape))
    vert_ids = _cells_with_parity(dshape, ()).ravel()
    vval = cplx.value.ravel()[vert_ids]
    vorder = np.argsort(vval, kind="stable")
    vrank = np.empty(n_vert, dtype=np.int64)
    vrank[vorder] = np.arange(n_vert)
    ea, eb, ecell = [], [], []
    vgrid = np.arange(n_vert).reshape(vshape)
    for axis in range(nd):
        if vshape[axis] < 2:
            continue
        lo = tuple(slice(0, -1) if a == axis else slice(None) for a in range(nd))
        hi = tuple(slice(1, None) if a == axis else slice(None) for a in range(nd))
        ea.append(vgrid[lo].ravel())
        eb.append(vgrid[hi].ravel())
        ecell.append(_cells_with_parity(dshape, (axis,)).ravel())
    if ea:
        ea, eb, ecell = np.concatenate(ea), np.concatenate(eb), np.concatenate(ecell)
    else:
        ea = eb = ecell = np.zeros(0, dtype=np.int64)
    evals = cplx.value.ravel()[ecell]
    eorder = np.lexsort((ecell, evals))
    dying, killer = _elder_merge(n_vert, vrank, ea, eb, eorder)
    births = list(vert_ids[dying]) + [int(vert_ids[vorder[0]])]
    deaths = list(ecell[killer]) + [-1]
    return _make_part(cplx, births, deaths)


def _persistence_top(cplx: CubicalComplex) -> DiagramPart:
    """Top-dimensional pairs as merges of complement components.

    Top cells and one exterior node are the vertices of the dual graph and
    codimension-1 cells its edges; sweeping the reversed filtration, two
    complement components meet at a face, and the younger one is a void born
    at the face and filled at its oldest top cell.
    """
    dshape = cplx.value.shape
    nd = len(dshape)
    if any(n < 2 for n in cplx.shape):
        return DiagramPart.empty()
    vflat = cplx.value.ravel()
    top_ids = _cells_with_parity(dshape, tuple(range(nd)))
    n_top = top_ids.size
    exterior = n_top
    top_flat = top_ids.ravel()
    # rank in reversed filtration: larger (value, index) is older; the exterior is oldest
    tval = vflat[top_flat]
    rev = np.lexsort((-top_flat, -tval))
    node_rank = np.empty(n_top + 1, dtype=np.int64)
    node_rank[rev] = np.arange(1, n_top + 1)
    node_rank[exterior] = 0
    top_index = np.arange(n_top).reshape(top_ids.shape)
    padded = np.pad(top_index, 1, constant_values=exterior)
    fa, fb, fcell = [], [], []
    for axis in range(nd):
        odd = tuple(a for a in range(nd) if a != axis)
        faces = _cells_with_parity(dshape, odd)
        # faces perpendicular to `axis` sit between top cells i-1 and i along it
        lo = tuple(slice(0, -1) if a == axis else slice(1, -1) for a in range(nd))
        hi = tuple(slice(1, None) if a == axis else slice(1, -1) for a in range(nd))
        fa.append(padded[lo].ravel())
        fb.append(padded[hi].ravel())
        fcell.append(faces.ravel())
    fa, fb, fcell = np.concatenate(fa), np.concatenate(fb), np.concatenate(fcell)
    fval = vflat[fcell]
    forder = np.lexsort((-fcell, -fval))
    dying, killer = _elder_merge(n_top + 1, node_rank, fa, fb, forder)
    births = fcell[killer]
    deaths = top_flat[dying]
    return _make_part(cplx, births, deaths)


def compute_persistence(grid: FilteredGrid, dims=(0, 1, 2)) -> PersistenceDiagram:
    """Persistence diagram of the sub-level filtration of ``grid``.

    Dimensions 0 and 2 come from union-find and are cheap at 100^3.  The
    dimension-1 part needs the full reduction and is only practical on small
    grids; pass ``dims=(0, 2)`` to skip it.
    """
    cplx = CubicalComplex.from_vertices(grid.values)
    parts = {}
    if 0 in dims:
        parts[0] = _persistence_dim0(cplx)
    if 2 in dims:
        parts[2] = _persistence_top(cplx)
    if 1 in dims:
        parts[1] = reduce_boundary(cplx, dims=(1,))[1]
    return PersistenceDiagram(parts, grid.resolution, grid.digest(), cplx)


def inverse_map(grid: FilteredGrid, diagram: PersistenceDiagram) -> PersistenceDiagram:
    """Attach lattice indices of the critical vertices to every pair."""
    cplx = diagram.complex if diagram.complex is not None else CubicalComplex.from_vertices(grid.values)
    crit = cplx.crit.ravel()
    shape = grid.resolution
    for part in diagram.parts.values():
        bv = np.stack(np.unravel_index(crit[part.birth_cell], shape), axis=1) if len(part) else np.zeros((0, 3), int)
        dc = np.maximum(part.death_cell, 0)
        dv = np.stack(np.unravel_index(crit[dc], shape), axis=1) if len(part) else np.zeros((0, 3), int)
        dv[part.death_cell < 0] = -1
        part.birth_vertex = bv
        part.death_vertex = dv
    return diagram


def betti_at(diagram: PersistenceDiagram, t: float) -> tuple[int, int, int]:
    """``beta_k = #{pairs of dimension k with b <= t < d}``."""
    out = []
    for k in range(3):
        p = diagram.part(k)
        out.append(int(np.count_nonzero((p.birth <= t) & (t < p.death))))
    return tuple(out)


_SIX = ndimage.generate_binary_structure(3, 1)
_TWENTY_SIX = ndimage.generate_binary_structure(3, 3)


def oracle_betti(grid: FilteredGrid | np.ndarray, t: float) -> tuple[int, int]:
    """Components and cavities of the voxel set ``{value <= t}`` by labeling.

    Components use 6-adjacency.  Cavities are the bounded components of the
    complement inside a one-voxel padding, with 26-adjacency, which is the
    complement connectivity dual to a 6-connected solid.
    """
    values = grid.values if isinstance(grid, FilteredGrid) else np.asarray(grid)
    solid = values <= t
    _, n0 = ndimage.label(solid, structure=_SIX)
    background = np.pad(~solid, 1, constant_values=True)
    _, n_bg = ndimage.label(background, structure=_TWENTY_SIX)
    return int(n0), int(n_bg - 1)


def write_diagram_csv(diagram: PersistenceDiagram, path) -> None:
    """CSV with columns dim, birth, death, bx, by, bz, dx, dy, dz."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim", "birth", "death", "bx", "by", "bz", "dx", "dy", "dz"])
        for pair in diagram.pairs():
            death = "inf" if pair.essential else repr(pair.death)
            bv = pair.birth_vertex or ("", "", "")
            dv = pair.death_vertex or ("", "", "")
            writer.writerow([pair.dim, repr(pair.birth), death, *bv, *dv])


def read_diagram_csv(path) -> list[PersistencePair]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            bv = tuple(int(row[c]) for c in ("bx", "by", "bz")) if row["bx"] != "" else None
            dv = tuple(int(row[c]) for c in ("dx", "dy", "dz")) if row["dx"] != "" else None
            death = INF if row["death"] == "inf" else float(row["death"])
            out.append(PersistencePair(int(row["dim"]), float(row["birth"]), death, -1, -1, bv, dv))
    return out
