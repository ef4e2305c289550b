import numpy as np
import pytest

from topoblend import field as F
from topoblend import mesh as M
from topoblend import topology as T


def sphere_grid(n=40, r=0.3):
    return T.sample_field(F.sphere_sdf((0.5, 0.5, 0.5), r), F.UNIT_BOX, (n, n, n))


class TestMarchingCubes:
    def test_sphere_area(self):
        mesh = M.marching_cubes(sphere_grid())
        assert mesh.areas().sum() == pytest.approx(4 * np.pi * 0.3**2, rel=0.02)
        radii = np.linalg.norm(mesh.vertices - 0.5, axis=1)
        np.testing.assert_allclose(radii, 0.3, atol=0.01)

    def test_box_offset(self):
        grid = T.sample_field(F.sphere_sdf((2.5, 0.5, 0.5), 0.3), ((2, 0, 0), (3, 1, 1)), (30, 30, 30))
        mesh = M.marching_cubes(grid)
        assert mesh.vertices[:, 0].min() > 2.0

    def test_no_crossing(self):
        grid = T.FilteredGrid(np.ones((4, 4, 4)))
        mesh = M.marching_cubes(grid)
        assert len(mesh) == 0 and mesh.vertices.shape == (0, 3)

    def test_no_degenerate_triangles(self):
        mesh = M.marching_cubes(sphere_grid(17))
        assert np.all(mesh.areas() > M.DEGENERATE_AREA)
        assert np.unique(mesh.faces).size == len(mesh.vertices)

    def test_bad_face_index(self):
        with pytest.raises(ValueError):
            M.TriangleMesh(np.zeros((2, 3)), [[0, 1, 2]])


class TestFormats:
    def test_obj_round_trip(self, tmp_path):
        mesh = M.marching_cubes(sphere_grid(12))
        M.write_obj(mesh, tmp_path / "m.obj")
        back = M.read_obj(tmp_path / "m.obj")
        np.testing.assert_allclose(back.vertices, mesh.vertices, rtol=1e-8)
        np.testing.assert_array_equal(back.faces, mesh.faces)

    def test_stl_round_trip(self, tmp_path):
        mesh = M.marching_cubes(sphere_grid(12))
        M.write_stl(mesh, tmp_path / "m.stl")
        tri = M.read_stl(tmp_path / "m.stl")
        assert (tmp_path / "m.stl").stat().st_size == 84 + 50 * len(mesh)
        np.testing.assert_allclose(tri, mesh.vertices[mesh.faces], atol=1e-6)

    def test_empty_mesh_files(self, tmp_path):
        M.write_obj(M.TriangleMesh.empty(), tmp_path / "e.obj")
        M.write_stl(M.TriangleMesh.empty(), tmp_path / "e.stl")
        assert len(M.read_obj(tmp_path / "e.obj")) == 0
        assert len(M.read_stl(tmp_path / "e.stl")) == 0

    def test_grid_round_trip(self, tmp_path):
        grid = T.sample_field(F.tpms("G", (2, 2, 2)), ((0, 0, 0), (1, 2, 0.5)), (7, 5, 3))
        raw, side = M.write_grid(grid, tmp_path / "f.raw")
        assert raw.stat().st_size == 4 * 7 * 5 * 3 and side.suffix == ".json"
        back = M.read_grid(side)
        assert back.resolution == grid.resolution and back.box == grid.box
        np.testing.assert_array_equal(back.values, grid.values.astype(np.float32))

    def test_truncated_raw(self, tmp_path):
        grid = T.FilteredGrid(np.zeros((3, 3, 3)))
        raw, _ = M.write_grid(grid, tmp_path / "f.raw")
        raw.write_bytes(raw.read_bytes()[:-4])
        with pytest.raises(ValueError):
            M.read_grid(raw)

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            M.write_obj(M.TriangleMesh.empty(), tmp_path / "missing" / "m.obj")
