import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoblend import field as F
from topoblend import spline
from topoblend.errors import DomainError
from topoblend.frames import AffineBoxMap, CoordinateFrame, WeightFunction

coords = st.floats(-1.0, 2.0, allow_nan=False)


class TestTPMS:
    def test_primitive_at_origin(self):
        phi = F.tpms("P")
        assert phi(0.0, 0.0, 0.0) == pytest.approx(3.0)
        assert phi(0.5, 0.5, 0.5) == pytest.approx(-3.0)

    def test_gyroid_at_origin(self):
        assert F.tpms("G")(0.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("kind", sorted(F.TPMS_KINDS))
    def test_periodic(self, kind):
        phi = F.tpms(kind, periods=(4, 4, 4))
        rng = np.random.default_rng(0)
        p = rng.uniform(0, 1, (50, 3))
        np.testing.assert_allclose(phi.at(p), phi.at(p + 0.25), atol=1e-12)

    def test_offset_shifts(self):
        a = F.tpms("D", periods=(2, 2, 2))
        b = F.tpms("D", periods=(2, 2, 2), offset=(0.1, 0.0, 0.0))
        assert b(0.3, 0.2, 0.7) == pytest.approx(a(0.2, 0.2, 0.7))

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            F.tpms("Q")

    def test_bad_periods(self):
        with pytest.raises(DomainError):
            F.tpms("P", periods=(0, 1, 1))


class TestPorousSpec:
    @settings(max_examples=60, deadline=None)
    @given(coords, coords, coords, st.floats(-1.5, 1.5))
    def test_rod_and_pore_normalization(self, x, y, z, c):
        base = F.tpms("G", periods=(2, 2, 2))
        for kind in ("rod", "pore"):
            spec = F.PorousSpec(kind, base, c)
            phi = F.normalize_spec(spec)
            assert bool(phi(x, y, z) <= 0) == bool(spec.contains(x, y, z))

    @settings(max_examples=60, deadline=None)
    @given(coords, coords, coords)
    def test_sheet_normalization(self, x, y, z):
        spec = F.PorousSpec("sheet", F.tpms("P", periods=(3, 3, 3)), (-0.5, 0.4))
        assert bool(F.normalize_spec(spec)(x, y, z) <= 0) == bool(spec.contains(x, y, z))

    def test_variable_threshold(self):
        tdf = F.ScalarField(lambda x, y, z: x - 0.5)
        spec = F.PorousSpec("rod", F.constant(0.0), tdf)
        assert spec.contains(0.9, 0, 0) and not spec.contains(0.1, 0, 0)

    def test_sheet_needs_pair(self):
        with pytest.raises(DomainError):
            F.PorousSpec("sheet", F.tpms("P"), 0.3)

    def test_bad_kind(self):
        with pytest.raises(DomainError):
            F.PorousSpec("foam", F.tpms("P"), 0.0)

    def test_sheet_order_checked(self):
        spec = F.PorousSpec("sheet", F.tpms("P"), (0.5, -0.5))
        with pytest.raises(DomainError):
            spec.validate()


class TestBlendAndClip:
    def test_blend_endpoints(self):
        left, right = F.constant(-1.0), F.constant(2.0)
        for w, want in ((0.0, -1.0), (1.0, 2.0), (0.25, -0.25)):
            phi = F.blended_field(lambda x, y, z, w=w: np.full(np.shape(x), w), left, right)
            assert phi(0.3, 0.3, 0.3) == pytest.approx(want)

    def test_clip(self):
        phi = F.clip_to_model(F.constant(-1.0), F.sphere_sdf((0.5, 0.5, 0.5), 0.25))
        assert phi(0.5, 0.5, 0.5) == pytest.approx(-0.25)
        assert phi(0.0, 0.0, 0.0) > 0.0


class TestRegions:
    def test_box(self):
        r = F.box_region((0, 0, 0), (0.5, 1, 1))
        assert r.contains(0.5, 0.2, 0.2)
        assert not r.contains(0.51, 0.2, 0.2)
        assert r.box == ((0.0, 0.0, 0.0), (0.5, 1.0, 1.0))

    def test_half_space(self):
        r = F.half_space((1, 1, 0), 1.0)
        assert r.contains(0.5, 0.5, 9) and not r.contains(0.6, 0.6, 0)

    def test_shells(self):
        cyl = F.cylinder_shell("z", (0.5, 0.5, 0), 0.1, 0.2)
        assert cyl.contains(0.65, 0.5, 3.0) and not cyl.contains(0.5, 0.5, 0.0)
        sph = F.sphere_shell((0, 0, 0), 0.5, 1.0)
        assert sph.contains(0.0, 0.7, 0.0) and not sph.contains(0.1, 0.1, 0.1)

    @settings(max_examples=80, deadline=None)
    @given(coords, coords, coords)
    def test_set_algebra(self, x, y, z):
        a = F.box_region((0, 0, 0), (0.6, 1, 1))
        b = F.sphere_shell((0.5, 0.5, 0.5), 0.0, 0.4)
        ia, ib = bool(a.contains(x, y, z)), bool(b.contains(x, y, z))
        assert bool((a | b).contains(x, y, z)) == (ia or ib)
        assert bool((a & b).contains(x, y, z)) == (ia and ib)
        assert bool((a - b).contains(x, y, z)) == (ia and not ib)

    def test_union_box_is_hull(self):
        r = F.box_region((0, 0, 0), (0.5, 1, 1)) | F.box_region((0.4, 0, 0), (1, 2, 1))
        assert r.box == ((0.0, 0.0, 0.0), (1.0, 2.0, 1.0))

    def test_empty(self):
        assert not F.empty_region().contains(0.5, 0.5, 0.5)

    def test_image_region(self, tmp_path):
        from PIL import Image

        img = np.full((4, 4), 255, dtype=np.uint8)
        img[:, :2] = 0
        path = tmp_path / "split.pgm"
        Image.fromarray(img).save(path)
        dark, light = F.image_region(path)
        assert dark.contains(0.2, 0.5, 0.5) and not dark.contains(0.8, 0.5, 0.5)
        assert light.contains(0.8, 0.5, 0.5)
        assert not light.contains(0.8, 0.5, 1.5)

    def test_image_rejects_color(self, tmp_path):
        from PIL import Image

        path = tmp_path / "rgb.png"
        Image.new("RGB", (2, 2)).save(path)
        with pytest.raises(DomainError):
            F.read_pgm(path)

    def test_dilated_interface(self):
        a = F.box_region((0, 0, 0), (0.5, 1, 1))
        b = F.box_region((0.5, 0, 0), (1, 1, 1))
        band = F.dilate_region_boundary(a, b, 0.1, F.UNIT_BOX, (33, 9, 9))
        assert band.contains(0.45, 0.5, 0.5) and band.contains(0.55, 0.1, 0.9)
        assert not band.contains(0.3, 0.5, 0.5)

    def test_dilated_needs_interface(self):
        a = F.box_region((0, 0, 0), (0.2, 1, 1))
        b = F.box_region((0.6, 0, 0), (1, 1, 1))
        with pytest.raises(DomainError):
            F.dilate_region_boundary(a, b, 0.1, F.UNIT_BOX, (17, 5, 5))


class TestFrames:
    def test_box_map_round_trip(self):
        m = AffineBoxMap((1, -1, 0), (3, 1, 0.5))
        u = m.forward(2.0, 0.0, 0.25)
        np.testing.assert_allclose(u, (0.5, 0.5, 0.5))
        np.testing.assert_allclose(m.inverse(*u), (2.0, 0.0, 0.25))

    def test_degenerate_box(self):
        with pytest.raises(DomainError):
            AffineBoxMap((0, 0, 0), (1, 0, 1))

    def test_frame_coordinates(self):
        assert CoordinateFrame.cartesian("y").coordinate(1, 2, 3) == 2
        assert CoordinateFrame.cylindrical("z", (1, 1, 0)).coordinate(4, 5, 9) == pytest.approx(5.0)
        assert CoordinateFrame.spherical((0, 0, 0)).coordinate(1, 2, 2) == pytest.approx(3.0)

    def test_bad_frame(self):
        with pytest.raises(DomainError):
            CoordinateFrame("polar")
        with pytest.raises(DomainError):
            CoordinateFrame.cartesian("w")

    def test_weight_lattice_matches_pointwise(self):
        rng = np.random.default_rng(1)
        vol = spline.uniform_volume((5, 4, 6), (3, 2, 3)).with_coefficients(rng.uniform(size=(5, 4, 6)))
        box = ((0, 0, 0), (2, 1, 1))
        omega = WeightFunction(vol, AffineBoxMap(*box))
        axes = [np.linspace(0, 2, 5), np.linspace(0, 1, 4), np.linspace(0, 1, 3)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        np.testing.assert_allclose(omega.on_lattice(axes), omega(X, Y, Z), atol=1e-13)

    def test_weight_basis_sums_to_one(self):
        vol = spline.uniform_volume((5, 4, 6), (3, 2, 3))
        omega = WeightFunction(vol, AffineBoxMap((0, 0, 0), (1, 1, 1)))
        assert sum(omega.basis_at(0.3, 0.6, 0.9).values()) == pytest.approx(1.0)

    def test_one_dimensional_weight(self):
        kv = spline.clamped_uniform(4, 1)
        vol = spline.univariate(kv, [0.0, 0.0, 1.0, 1.0])
        omega = WeightFunction(vol, AffineBoxMap((0, 0, 0), (1, 1, 1)), CoordinateFrame.cartesian("z"), (0.0, 1.0))
        assert omega(0.9, 0.9, 0.1) == 0.0
        assert omega(0.1, 0.1, 0.9) == 1.0
        assert omega(0.0, 0.0, 0.5) == pytest.approx(0.5)
