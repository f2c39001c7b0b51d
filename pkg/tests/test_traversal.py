import math

import numpy as np
import pytest

from drc_voxel.services.camera import Ray, make_ray
from drc_voxel.services.grid import BinaryGrid, make_frustum_geometry
from drc_voxel.services.consistency import event_probabilities
from drc_voxel.services.traversal import first_hit, first_hits, trace, trace_many
from drc_voxel.utils.errors import GeometryMismatchError

SAMPLES = 4000
ORACLE_RAYS = 1000


def random_rays(geometry, rng, count):
    lo, hi = geometry.world_bounds()
    mid, extent = 0.5 * (lo + hi), hi - lo
    rays = []
    for i in range(count):
        if i % 4 == 0:
            # origin inside the hull
            origin = lo + rng.uniform(0.05, 0.95, 3) * extent
        else:
            origin = mid + rng.normal(size=3) * 2.0 * extent
        target = lo + rng.uniform(0.0, 1.0, 3) * extent
        direction = target - origin if i % 5 else rng.normal(size=3)
        rays.append(make_ray(origin, direction))
    return rays


def assert_matches_dense_samples(geometry, ray):
    """Every sample away from a segment boundary lies in the cell the trace claims."""
    tr = trace(geometry, ray)
    lo, hi = geometry.world_bounds()
    reach = np.linalg.norm(ray.origin - 0.5 * (lo + hi)) + np.linalg.norm(hi - lo)
    h = reach / SAMPLES
    ts = (np.arange(SAMPLES) + 0.5) * h
    sampled = geometry.cell_of_points(ray.origin + ts[:, None] * ray.direction)

    if tr.n:
        assert np.all(tr.t_enter < tr.t_exit)
        assert np.all(np.diff(tr.t_enter) > 0)
        assert tr.t_enter[0] >= 0.0
        seg = np.minimum(np.searchsorted(tr.t_exit, ts, side="right"), tr.n - 1)
        inside = (tr.t_enter[seg] <= ts) & (ts < tr.t_exit[seg])
        expected = np.where(inside, tr.cells[seg], -1)
        bounds = np.concatenate([tr.t_enter, tr.t_exit])
        near = np.min(np.abs(ts[:, None] - bounds[None, :]), axis=1) < 2 * h
    else:
        expected = np.full(SAMPLES, -1)
        near = np.zeros(SAMPLES, dtype=bool)
    np.testing.assert_array_equal(sampled[~near], expected[~near])
    return tr


def frustum_chord(geometry, ray):
    """Length of the ray inside the convex frustum hull, by clipping against its six planes."""
    nx, ny, nz = geometry.dims
    z_near, z_far = geometry.layer_depth(0), geometry.layer_depth(nz)
    # rows are (a, c): the half-space a . p + c >= 0
    planes = [
        ((1.0, 0.0, geometry.f * nx / 2.0), 0.0),
        ((-1.0, 0.0, geometry.f * nx / 2.0), 0.0),
        ((0.0, 1.0, geometry.f * ny / 2.0), 0.0),
        ((0.0, -1.0, geometry.f * ny / 2.0), 0.0),
        ((0.0, 0.0, 1.0), -z_near),
        ((0.0, 0.0, -1.0), z_far),
    ]
    t0, t1 = 0.0, math.inf
    for a, c in planes:
        start = float(np.dot(a, ray.origin) + c)
        rate = float(np.dot(a, ray.direction))
        if rate == 0.0:
            if start < 0.0:
                return 0.0
            continue
        t = -start / rate
        if rate > 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    return max(0.0, t1 - t0)


class TestUniformTrace:
    def test_axis_ray(self, cube8):
        tr = trace(cube8, Ray(np.array([-1.0, 0.01, 0.01]), np.array([1.0, 0.0, 0.0])))
        assert tr.n == 8
        ix, iy, iz = cube8.unravel(tr.cells)
        np.testing.assert_array_equal(ix, np.arange(8))
        assert set(iy) == {4} and set(iz) == {4}
        np.testing.assert_allclose(tr.t_enter, 0.5 + 0.125 * np.arange(8))
        np.testing.assert_allclose(tr.d, 0.5625 + 0.125 * np.arange(8))

    def test_miss(self, cube8):
        tr = trace(cube8, Ray(np.array([-1.0, 2.0, 0.0]), np.array([1.0, 0.0, 0.0])))
        assert tr.n == 0

    def test_behind_origin_not_traced(self, cube8):
        tr = trace(cube8, Ray(np.array([1.0, 0.01, 0.01]), np.array([1.0, 0.0, 0.0])))
        assert tr.n == 0

    def test_ray_on_cell_boundary(self, cube8):
        tr = trace(cube8, Ray(np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])))
        assert tr.n == 8
        assert tr.length == pytest.approx(1.0, abs=1e-9)

    def test_diagonal_through_corners(self, cube8):
        tr = trace(cube8, make_ray((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)))
        assert tr.n == 8
        ix, iy, iz = cube8.unravel(tr.cells)
        np.testing.assert_array_equal(ix, np.arange(8))
        np.testing.assert_array_equal(iy, np.arange(8))
        np.testing.assert_array_equal(iz, np.arange(8))
        assert tr.length == pytest.approx(math.sqrt(3), abs=1e-9)

    def test_origin_inside(self, cube8):
        tr = trace(cube8, Ray(np.array([0.01, 0.01, 0.01]), np.array([0.0, 0.0, 1.0])))
        assert tr.t_enter[0] == 0.0
        assert tr.length == pytest.approx(0.49, abs=1e-12)

    def test_dense_sampling_oracle(self, small_uniform, rng):
        for ray in random_rays(small_uniform, rng, ORACLE_RAYS):
            assert_matches_dense_samples(small_uniform, ray)

    def test_chord_length(self, small_uniform, rng):
        lo, hi = small_uniform.world_bounds()
        for ray in random_rays(small_uniform, rng, ORACLE_RAYS):
            tr = trace(small_uniform, ray)
            if not tr.n:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                a = (lo - ray.origin) / ray.direction
                b = (hi - ray.origin) / ray.direction
            t0 = max(0.0, np.nanmax(np.minimum(a, b)))
            t1 = np.nanmin(np.maximum(a, b))
            assert tr.length == pytest.approx(t1 - t0, abs=1e-9)
            np.testing.assert_allclose(tr.t_enter[1:], tr.t_exit[:-1], atol=1e-9)


class TestFrustumTrace:
    def test_apex_ray_crosses_every_layer(self, small_frustum):
        center = small_frustum.cell_center(small_frustum.linear_index(1, 1, 0))
        tr = trace(small_frustum, make_ray((0.0, 0.0, 0.0), center))
        assert tr.n == 3
        _, _, iz = small_frustum.unravel(tr.cells)
        np.testing.assert_array_equal(iz, [0, 1, 2])
        assert np.all(np.diff(tr.d) > 0)

    def test_dense_sampling_oracle(self, small_frustum, rng):
        for ray in random_rays(small_frustum, rng, ORACLE_RAYS):
            assert_matches_dense_samples(small_frustum, ray)

    def test_chord_length(self, small_frustum, rng):
        for ray in random_rays(small_frustum, rng, ORACLE_RAYS):
            tr = trace(small_frustum, ray)
            assert tr.length == pytest.approx(frustum_chord(small_frustum, ray), abs=1e-9)
            if tr.n > 1:
                np.testing.assert_allclose(tr.t_enter[1:], tr.t_exit[:-1], atol=1e-9)

    def test_street_grid_oracle(self, rng):
        geometry = make_frustum_geometry((8, 4, 6), 0.5, 50.0, 50.0)
        for ray in random_rays(geometry, rng, 100):
            assert_matches_dense_samples(geometry, ray)

    def test_segments_are_contiguous(self, small_frustum, rng):
        for ray in random_rays(small_frustum, rng, 200):
            tr = trace(small_frustum, ray)
            if tr.n > 1:
                gaps = tr.t_enter[1:] - tr.t_exit[:-1]
                assert np.all(gaps >= -1e-9)
                # a gap means the ray left the hull and came back
                for g, a, b in zip(gaps, tr.t_exit[:-1], tr.t_enter[1:]):
                    if g > 1e-9:
                        mid = ray.origin + 0.5 * (a + b) * ray.direction
                        assert small_frustum.cell_of_points(mid[None])[0] == -1


class TestFirstHit:
    def test_first_occupied_cell(self, cube8):
        occ = np.zeros(cube8.num_cells, dtype=bool)
        occ[cube8.linear_index(5, 4, 4)] = True
        occ[cube8.linear_index(7, 4, 4)] = True
        tr = trace(cube8, Ray(np.array([-1.0, 0.01, 0.01]), np.array([1.0, 0.0, 0.0])))
        hit = first_hit(BinaryGrid(cube8, occ), tr)
        assert hit.event == 5
        assert hit.cell == cube8.linear_index(5, 4, 4)
        assert hit.depth == pytest.approx(0.5 + 5.5 * 0.125)

    def test_escape(self, cube8):
        tr = trace(cube8, Ray(np.array([-1.0, 0.01, 0.01]), np.array([1.0, 0.0, 0.0])))
        hit = first_hit(BinaryGrid(cube8, np.zeros(cube8.num_cells, dtype=bool)), tr)
        assert hit.escaped and hit.event == 8

    def test_matches_most_likely_event(self, small_uniform, small_frustum, rng):
        for geometry in (small_uniform, small_frustum):
            for ray in random_rays(geometry, rng, 200):
                occ = rng.uniform(size=geometry.num_cells) < 0.3
                tr = trace(geometry, ray)
                hit = first_hit(BinaryGrid(geometry, occ), tr)
                x = np.where(occ[tr.cells], 0.0, 1.0)
                assert hit.event == int(np.argmax(event_probabilities(x)))
                if hit.escaped:
                    assert hit.event == tr.n
                else:
                    assert hit.cell == tr.cells[hit.event]

    def test_batch_matches_single_rays(self, small_uniform, rng):
        rays = random_rays(small_uniform, rng, 60)
        table = trace_many(small_uniform, np.array([r.origin for r in rays]), np.array([r.direction for r in rays]))
        occ = rng.uniform(size=small_uniform.num_cells) < 0.4
        cells, depths, _ = table.gather(np.arange(len(rays)))
        event, cell, depth = first_hits(occ, cells, depths)
        binary = BinaryGrid(small_uniform, occ)
        for i in range(len(rays)):
            single = first_hit(binary, table.row(i))
            assert (event[i], cell[i]) == (single.event, single.cell)
            assert depth[i] == single.depth

    def test_geometry_mismatch(self, cube8, small_uniform):
        tr = trace(small_uniform, Ray(np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])))
        with pytest.raises(GeometryMismatchError):
            first_hit(BinaryGrid(cube8, np.zeros(cube8.num_cells, dtype=bool)), tr)


class TestTraceTable:
    def test_rows_match_single_traces(self, small_uniform, rng):
        rays = random_rays(small_uniform, rng, 40)
        origins = np.array([r.origin for r in rays])
        directions = np.array([r.direction for r in rays])
        table = trace_many(small_uniform, origins, directions)
        assert len(table) == 40
        for i, ray in enumerate(rays):
            np.testing.assert_array_equal(table.row(i).cells, trace(small_uniform, ray).cells)

    def test_gather_pads(self, small_uniform, rng):
        rays = random_rays(small_uniform, rng, 20)
        table = trace_many(small_uniform, np.array([r.origin for r in rays]), np.array([r.direction for r in rays]))
        cells, depths, lengths = table.gather(np.arange(20))
        assert cells.shape[1] == max(1, lengths.max())
        for i in range(20):
            np.testing.assert_array_equal(cells[i, : lengths[i]], table.row(i).cells)
            assert np.all(cells[i, lengths[i]:] == -1)
            np.testing.assert_allclose(depths[i, : lengths[i]], table.row(i).d)
