import numpy as np
import pytest

from drc_voxel.services.camera import Camera, intrinsics_from_hfov, look_at
from drc_voxel.services.grid import AuxGrid, BinaryGrid, OccupancyGrid, make_frustum_geometry, make_uniform_geometry
from drc_voxel.services.renderer import add_depth_noise, expected_fields, render, render_expected, sample_view_ring
from drc_voxel.services.shapes import make_test_scene, make_test_shape
from drc_voxel.utils.errors import DataError
from drc_voxel.utils.settings import ESCAPE_DEPTH_SCENE


def front_camera(size=9):
    return look_at((0.0, 0.0, 2.0), (0.0, 0.0, 0.0), width=size, height=size, intrinsics=intrinsics_from_hfov(size, size, 30))


class TestRender:
    def test_empty_grid_mask(self, cube8):
        binary = BinaryGrid(cube8, np.zeros(cube8.num_cells, dtype=bool))
        obs = render(binary, None, front_camera(), "mask")
        assert not obs.mask.any()

    def test_full_box_center_depth(self, cube8):
        binary = BinaryGrid(cube8, np.ones(cube8.num_cells, dtype=bool))
        obs = render(binary, None, front_camera(), "depth")
        # the centre pixel ray runs down the z axis into the first cell layer
        assert obs.depth[4, 4] == pytest.approx(2.0 - 0.5 + 0.0625)
        assert obs.depth[0, 0] < 10.0

    def test_background_is_escape(self, cube8):
        binary = BinaryGrid(cube8, np.zeros(cube8.num_cells, dtype=bool))
        obs = render(binary, None, front_camera(), "depth")
        assert np.all(obs.depth == 10.0)

    def test_color_of_hit_cell(self, cube8):
        binary = BinaryGrid(cube8, np.ones(cube8.num_cells, dtype=bool))
        payload = np.tile([1.0, 0.0, 0.0], (cube8.num_cells, 1))
        obs = render(binary, AuxGrid(cube8, "color", payload), front_camera(), "color")
        np.testing.assert_array_equal(obs.color[4, 4], [1.0, 0.0, 0.0])

    def test_color_without_aux(self, cube8):
        binary = BinaryGrid(cube8, np.ones(cube8.num_cells, dtype=bool))
        with pytest.raises(DataError):
            render(binary, None, front_camera(), "color")

    def test_semantic_background_class(self):
        binary, aux = make_test_shape("sphere", 8, aux_kind="semantics", num_classes=4)
        obs = render(binary, aux, front_camera(), "depth_semantics", escape_depth=ESCAPE_DEPTH_SCENE)
        assert obs.labels[0, 0] == 3
        assert obs.labels[4, 4] in (0, 1)

    def test_traces_are_cached(self, cube8):
        binary = BinaryGrid(cube8, np.ones(cube8.num_cells, dtype=bool))
        obs = render(binary, None, front_camera(), "mask")
        assert obs.trace_table(cube8) is obs.trace_table(cube8)


class TestDepthNoise:
    def _depth(self):
        binary, _ = make_test_shape("sphere", 8)
        return render(binary, None, front_camera(16), "depth")

    def test_bounded_and_background_untouched(self):
        obs = self._depth()
        noisy = add_depth_noise(obs, 0.2, seed=3)
        fg = obs.depth < 10.0
        assert np.all(np.abs(noisy.depth[fg] - obs.depth[fg]) <= 0.2)
        np.testing.assert_array_equal(noisy.depth[~fg], obs.depth[~fg])
        assert np.any(noisy.depth[fg] != obs.depth[fg])

    def test_seeded(self):
        obs = self._depth()
        a = add_depth_noise(obs, 0.1, seed=5)
        b = add_depth_noise(obs, 0.1, seed=5)
        c = add_depth_noise(obs, 0.1, seed=5, stream=1)
        np.testing.assert_array_equal(a.depth, b.depth)
        assert np.any(a.depth != c.depth)

    def test_zero_noise_is_identity(self):
        obs = self._depth()
        np.testing.assert_array_equal(add_depth_noise(obs, 0.0, seed=1).depth, obs.depth)

    def test_stays_positive(self):
        obs = self._depth()
        assert np.all(add_depth_noise(obs, 5.0, seed=2).depth > 0)

    def test_wrong_kind(self, cube8):
        obs = render(BinaryGrid(cube8, np.ones(cube8.num_cells, dtype=bool)), None, front_camera(), "mask")
        with pytest.raises(DataError):
            add_depth_noise(obs, 0.1, seed=0)


class TestRenderExpected:
    def test_binary_grid_matches_hard_render(self):
        binary, aux = make_test_shape("sphere", 8)
        camera = front_camera(12)
        hard = render(binary, aux, camera, "depth")
        soft = expected_fields(binary.as_occupancy_grid(), aux, camera)
        np.testing.assert_allclose(soft.depth, hard.depth)
        np.testing.assert_array_equal(soft.foreground > 0.5, hard.depth < 10.0)

    def test_half_empty_slab(self):
        geometry = make_uniform_geometry((1, 1, 1), ((-1, -1, -0.5), (1, 1, 0.5)))
        grid = OccupancyGrid(geometry, [0.5])
        soft = expected_fields(grid, None, front_camera(1))
        assert soft.foreground[0, 0] == pytest.approx(0.5)
        assert soft.depth[0, 0] == pytest.approx(0.5 * 2.0 + 0.5 * 10.0)

    @pytest.mark.parametrize("kind", ["mask", "depth"])
    def test_observation_matches_hard_render(self, kind):
        binary, _ = make_test_shape("sphere", 8)
        camera = front_camera(12)
        hard = render(binary, None, camera, kind)
        preview = render_expected(binary.as_occupancy_grid(), None, camera, kind)
        assert preview.kind == kind
        if kind == "mask":
            np.testing.assert_array_equal(preview.mask, hard.mask)
        else:
            np.testing.assert_allclose(preview.depth, hard.depth)

    def test_semantic_background_class(self):
        binary, aux = make_test_shape("sphere", 8, aux_kind="semantics")
        camera = front_camera(12)
        preview = render_expected(binary.as_occupancy_grid(), aux, camera, "depth_semantics")
        hard = render(binary, aux, camera, "depth_semantics")
        background = hard.depth >= 10.0
        assert background.any()
        assert np.all(preview.labels[background] == aux.channels - 1)
        np.testing.assert_array_equal(preview.labels, hard.labels)

    def test_color_needs_aux(self):
        binary, _ = make_test_shape("sphere", 8)
        with pytest.raises(DataError):
            render_expected(binary.as_occupancy_grid(), None, front_camera(), "color")


class TestViewRing:
    def test_cameras_look_at_target(self):
        cams = sample_view_ring(5, seed=0, image_size=16)
        assert len(cams) == 5
        for cam in cams:
            assert np.linalg.norm(cam.center) == pytest.approx(2.5)
            np.testing.assert_allclose(cam.R[2], -cam.center / np.linalg.norm(cam.center), atol=1e-12)

    def test_elevation_range(self):
        for cam in sample_view_ring(20, (15.0, 30.0), seed=4, image_size=8):
            elevation = np.degrees(np.arcsin(cam.center[1] / 2.5))
            assert 15.0 - 1e-9 <= elevation <= 30.0 + 1e-9

    def test_seeded(self):
        a = sample_view_ring(3, seed=9, image_size=8)
        b = sample_view_ring(3, seed=9, image_size=8)
        assert a == b

    def test_azimuths_must_match_view_count(self):
        with pytest.raises(DataError):
            sample_view_ring(3, azimuths=[0.0, 90.0], image_size=8)


class TestShapes:
    def test_unknown_shape(self):
        with pytest.raises(DataError):
            make_test_shape("teapot", 16)

    def test_chair_cavity_empty_and_enclosed(self):
        from drc_voxel.services.shapes import is_laterally_enclosed, seat_cavity

        binary, _ = make_test_shape("chair_like", 32)
        cavity = seat_cavity(binary.geometry)
        assert cavity.sum() > 20
        assert not binary.occ[cavity].any()
        enclosed = [is_laterally_enclosed(binary, i) for i in np.flatnonzero(cavity)]
        assert np.mean(enclosed) > 0.9

    def test_semantic_payload_is_one_hot(self):
        _, aux = make_test_shape("chair_like", 16, aux_kind="semantics", num_classes=3)
        assert aux.payload.max(axis=1).min() == 1.0
        assert aux.payload[:, 2].sum() == 0

    def test_street_scene(self):
        geometry = make_frustum_geometry((16, 8, 12), 0.5, 100.0, 50.0)
        binary, aux = make_test_scene(geometry)
        assert binary.occ.any() and not binary.occ.all()
        assert aux.payload[:, 3].sum() == 0


class TestFrustumScene:
    def test_apex_render_hits_road(self):
        geometry = make_frustum_geometry((16, 8, 12), 0.5, 100.0, 50.0)
        binary, aux = make_test_scene(geometry)
        fu = 8.0 / (geometry.f * 8.0)
        camera = Camera(model="perspective", width=16, height=8, intrinsics=(fu, fu, 8.0, 4.0),
                        rotation=(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0), translation=(0.0, 0.0, 0.0))
        obs = render(binary, aux, camera, "depth_semantics", escape_depth=ESCAPE_DEPTH_SCENE)
        # bottom image rows look down at the road
        assert np.all(obs.labels[-1] == 0)
        assert np.all(obs.depth[-1] < ESCAPE_DEPTH_SCENE)
