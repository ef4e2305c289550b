import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from topoblend import field as F
from topoblend import topology as T
from topoblend.errors import DomainError
from topoblend.optimize import betti_with_euler

# two loops around the value-3 vertices; three minima joined at 1 and 2
FIG5 = np.array(
    [
        [0, 1, 0, 2, 0],
        [0, 3, 0, 3, 0],
        [0, 1, 0, 2, 0],
    ],
    dtype=float,
)
INF = float("inf")


def intervals(part):
    return sorted(zip(part.birth.tolist(), part.death.tolist()))


def smooth_grid(rng, shape):
    return ndimage.gaussian_filter(rng.normal(size=shape), sigma=1.5, mode="wrap")


def brute_force_components(values, t):
    """Components of {value <= t} by flood fill over 6-neighbours."""
    solid = values <= t
    seen = np.zeros_like(solid)
    count = 0
    for start in zip(*np.nonzero(solid)):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            p = stack.pop()
            for a in range(3):
                for s in (-1, 1):
                    q = list(p)
                    q[a] += s
                    q = tuple(q)
                    if 0 <= q[a] < values.shape[a] and solid[q] and not seen[q]:
                        seen[q] = True
                        stack.append(q)
    return count


class TestSampleField:
    def test_constant(self):
        grid = T.sample_field(F.constant(2.5), F.UNIT_BOX, (3, 4, 5))
        assert grid.resolution == (3, 4, 5)
        assert np.all(grid.values == 2.5)

    def test_linear(self):
        grid = T.sample_field(lambda x, y, z: x, F.UNIT_BOX, (3, 3, 3))
        for i, want in enumerate((0.0, 0.5, 1.0)):
            assert np.all(grid.values[i] == want)

    def test_non_finite_names_point(self):
        with pytest.raises(DomainError, match="non-finite"):
            T.sample_field(lambda x, y, z: np.where(x > 0.9, np.nan, 0.0), F.UNIT_BOX, (3, 3, 3))

    def test_bad_resolution(self):
        with pytest.raises(DomainError):
            T.sample_field(F.constant(0.0), F.UNIT_BOX, (1, 4, 4))

    def test_tpms_hash_stable(self):
        phi = F.normalize_spec(F.PorousSpec("rod", F.tpms("P", periods=(2, 2, 2)), 0.0))
        a = T.sample_field(phi, F.UNIT_BOX, (50, 50, 50))
        b = T.sample_field(phi, F.UNIT_BOX, (50, 50, 50))
        assert a.digest() == b.digest()

    def test_points(self):
        grid = T.FilteredGrid(np.zeros((3, 5, 2)), ((0, 0, 0), (1, 2, 1)))
        np.testing.assert_allclose(grid.points([(1, 4, 1)]), [[0.5, 2.0, 1.0]])


class TestWorkedExample:
    def test_reduction_pairs(self):
        parts = T.reduce_boundary(FIG5)
        assert intervals(parts[0]) == [(0.0, 1.0), (0.0, 2.0), (0.0, INF)]
        assert intervals(parts[1]) == [(1.0, 3.0), (2.0, 3.0)]

    def test_extruded_grid(self):
        grid = T.FilteredGrid(np.repeat(FIG5[:, :, None], 2, axis=2))
        diagram = T.compute_persistence(grid)
        assert diagram.intervals(0) == [(0.0, 1.0), (0.0, 2.0), (0.0, INF)]
        assert diagram.intervals(1) == [(1.0, 3.0), (2.0, 3.0)]
        assert diagram.intervals(2) == []

    def test_betti_at_two(self):
        grid = T.FilteredGrid(np.repeat(FIG5[:, :, None], 2, axis=2))
        b0, b1, _ = T.betti_at(T.compute_persistence(grid), 2.0)
        assert (b0, b1) == (1, 2)

    def test_loop_birth_vertex(self):
        grid = T.FilteredGrid(np.repeat(FIG5[:, :, None], 2, axis=2))
        diagram = T.inverse_map(grid, T.compute_persistence(grid))
        (first,) = [p for p in diagram.pairs(1) if p.birth == 1.0]
        assert grid.values[first.birth_vertex] == 1.0
        assert first.birth_vertex[:2] in {(0, 1), (2, 1)}


class TestPersistence:
    def test_constant_grid(self):
        diagram = T.compute_persistence(T.FilteredGrid(np.full((4, 4, 4), 0.3)))
        assert diagram.intervals(0) == [(0.3, INF)]
        assert diagram.intervals(1) == [] and diagram.intervals(2) == []

    def test_constant_pair_vertex(self):
        grid = T.FilteredGrid(np.full((3, 3, 3), 1.0))
        (pair,) = T.inverse_map(grid, T.compute_persistence(grid)).pairs(0)
        assert pair.birth_vertex == (0, 0, 0)
        assert pair.death_vertex is None

    def test_two_blobs(self):
        x = np.linspace(0, 1, 21)
        X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
        a = (X - 0.25) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2
        b = (X - 0.75) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2 - 0.01
        values = np.minimum(a, b)
        diagram = T.compute_persistence(T.FilteredGrid(values), dims=(0,))
        pairs = diagram.intervals(0)
        assert len(pairs) == 2
        birth, death = max(pairs, key=lambda p: p[0])
        assert birth == pytest.approx(values.min() + 0.01, abs=1e-12)
        # brute-force threshold sweep over the vertex values
        levels = np.unique(values)
        merge = next(t for t in levels if t >= birth and brute_force_components(values, t) == 1)
        assert death == merge

    def test_hollow_shell(self):
        grid = T.sample_field(lambda x, y, z: np.abs(np.sqrt((x - .5) ** 2 + (y - .5) ** 2 + (z - .5) ** 2) - 0.3) - 0.08, F.UNIT_BOX, (24, 24, 24))
        assert T.oracle_betti(grid, 0.0) == (1, 1)
        b0, b1, b2 = T.betti_at(T.compute_persistence(grid, dims=(0, 2)), 0.0)
        assert (b0, b2) == (1, 1)

    def test_solid_box_oracle(self):
        assert T.oracle_betti(T.FilteredGrid(np.full((5, 5, 5), -1.0)), 0.0) == (1, 0)

    def test_below_minimum(self):
        rng = np.random.default_rng(0)
        grid = T.FilteredGrid(rng.normal(size=(6, 6, 6)))
        assert T.betti_at(T.compute_persistence(grid), grid.values.min() - 1) == (0, 0, 0)

    def test_union_find_matches_reduction(self):
        rng = np.random.default_rng(1)
        for _ in range(15):
            values = rng.integers(0, 4, size=(5, 4, 6)).astype(float)
            fast = T.compute_persistence(T.FilteredGrid(values), dims=(0, 2))
            slow = T.reduce_boundary(values)
            for k in (0, 2):
                assert intervals(fast.part(k)) == intervals(slow[k])
                np.testing.assert_array_equal(np.sort(fast.part(k).birth_cell), np.sort(slow[k].birth_cell))

    def test_euler_b1_matches_reduction(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            grid = T.FilteredGrid(smooth_grid(rng, (8, 8, 8)))
            full = T.compute_persistence(grid)
            quick = T.compute_persistence(grid, dims=(0, 2))
            for t in np.quantile(grid.values, [0.2, 0.5, 0.8]):
                assert betti_with_euler(quick, t) == T.betti_at(full, t)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.int8, (5, 5, 5), elements=st.integers(0, 3)), st.integers(0, 3))
    def test_betti_matches_oracle(self, values, t):
        grid = T.FilteredGrid(values.astype(float))
        b0, _, b2 = T.betti_at(T.compute_persistence(grid, dims=(0, 2)), t)
        assert (b0, b2) == T.oracle_betti(grid, t)

    def test_inverse_map_attains_values(self):
        rng = np.random.default_rng(3)
        grid = T.FilteredGrid(smooth_grid(rng, (12, 12, 12)))
        diagram = T.inverse_map(grid, T.compute_persistence(grid, dims=(0, 2)))
        for pair in diagram.pairs():
            assert grid.values[pair.birth_vertex] == pair.birth
            if not pair.essential:
                assert grid.values[pair.death_vertex] == pair.death

    def test_death_vertex_perturbation(self):
        rng = np.random.default_rng(4)
        values = smooth_grid(rng, (10, 10, 10))
        grid = T.FilteredGrid(values)
        diagram = T.inverse_map(grid, T.compute_persistence(grid, dims=(0,)))
        pair = next(p for p in diagram.pairs(0) if not p.essential)
        delta = 1e-9
        bumped = values.copy()
        bumped[pair.death_vertex] += delta
        moved = T.compute_persistence(T.FilteredGrid(bumped), dims=(0,))
        births = moved.part(0).birth
        deaths = moved.part(0).death
        n = int(np.flatnonzero(births == pair.birth)[0])
        assert deaths[n] - pair.death == pytest.approx(delta, rel=1e-6)

    def test_provenance(self):
        grid = T.FilteredGrid(np.zeros((3, 4, 5)))
        diagram = T.compute_persistence(grid)
        assert diagram.resolution == (3, 4, 5)
        assert diagram.field_hash == grid.digest()

    def test_euler_characteristic_of_cube(self):
        cplx = T.CubicalComplex.from_vertices(np.zeros((3, 3, 3)))
        assert cplx.euler_characteristic(0.0) == 1


class TestDiagramCSV:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        grid = T.FilteredGrid(smooth_grid(rng, (10, 10, 10)))
        diagram = T.inverse_map(grid, T.compute_persistence(grid, dims=(0, 2)))
        path = tmp_path / "d.csv"
        T.write_diagram_csv(diagram, path)
        back = T.read_diagram_csv(path)
        orig = diagram.pairs()
        assert len(back) == len(orig)
        for a, b in zip(orig, back):
            assert (a.dim, a.birth, a.death, a.birth_vertex, a.death_vertex) == (
                b.dim,
                b.birth,
                b.death,
                b.birth_vertex,
                b.death_vertex,
            )
