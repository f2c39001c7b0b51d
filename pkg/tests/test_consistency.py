import math

import numpy as np
import pytest

from drc_voxel.services.camera import intrinsics_from_hfov, look_at
from drc_voxel.services.consistency import (
    all_rays,
    batch_event_probabilities,
    batch_grad_x,
    batch_loss,
    cost_color,
    cost_depth,
    cost_mask,
    cost_semantic,
    event_probabilities,
    gather_samples,
    mask_loss_closed_form,
    ray_costs,
    ray_loss,
    ray_loss_expectation,
    ray_loss_grad_p,
    ray_loss_grad_x,
    ray_loss_grad_x_naive,
    view_loss,
)
from drc_voxel.services.evaluation import brute_force_ray_loss
from drc_voxel.services.gradcheck import random_instance, ray_costs_for
from drc_voxel.services.grid import AuxGrid, OccupancyGrid
from drc_voxel.services.renderer import render
from drc_voxel.services.shapes import make_test_shape
from drc_voxel.utils.errors import DataError, DomainError


class TestEventProbabilities:
    def test_all_empty_escapes(self):
        np.testing.assert_allclose(event_probabilities([1.0, 1.0]), [0.0, 0.0, 1.0])

    def test_first_cell_occupied(self):
        np.testing.assert_allclose(event_probabilities([0.0, 0.3]), [1.0, 0.0, 0.0])

    def test_halves(self):
        np.testing.assert_allclose(event_probabilities([0.5, 0.5]), [0.5, 0.25, 0.25])

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            event_probabilities([0.5, 1.2])

    def test_normalization(self, rng):
        lengths = rng.integers(1, 65, size=10_000)
        width = lengths.max()
        x = rng.uniform(size=(10_000, width))
        x[np.arange(width)[None, :] >= lengths[:, None]] = 1.0
        probs = batch_event_probabilities(x)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)


class TestEventCosts:
    def test_depth(self):
        np.testing.assert_allclose(cost_depth([1.0, 2.0], 2.0).psi, [1.0, 0.0, 8.0])

    def test_depth_empty_trace(self):
        np.testing.assert_allclose(cost_depth([], 4.0).psi, [6.0])

    def test_mask(self):
        np.testing.assert_array_equal(cost_mask([1, 2, 3], 0).psi, [0, 0, 0, 1])
        np.testing.assert_array_equal(cost_mask([1, 2, 3], 1).psi, [1, 1, 1, 0])
        np.testing.assert_array_equal(cost_mask([], 1).psi, [0])

    def test_mask_rejects_non_binary(self):
        with pytest.raises(DomainError):
            cost_mask([1.0], 2)

    def test_semantic_perfect_explanation(self):
        costs = cost_semantic([2.0], [[0.0, 1.0, 0.0, 0.0]], 2.0, 1)
        assert costs.psi[0] == pytest.approx(0.0)

    def test_semantic_escape(self):
        costs = cost_semantic([], None, 2.0, 0, num_classes=4)
        assert costs.psi[0] == pytest.approx(abs(0.001 - 0.5) + math.log(4))

    def test_semantic_half(self):
        costs = cost_semantic([2.0], [[0.5, 0.5]], 2.0, 0)
        assert costs.psi[0] == pytest.approx(math.log(2))
        np.testing.assert_allclose(costs.dpsi_dp[0], [-2.0, 0.0])

    def test_semantic_floor(self):
        costs = cost_semantic([2.0], [[0.0, 1.0]], 2.0, 0)
        assert costs.psi[0] == pytest.approx(-math.log(1e-8))
        assert np.all(np.isfinite(costs.dpsi_dp))

    def test_semantic_invalid_simplex(self):
        with pytest.raises(DomainError):
            cost_semantic([2.0], [[0.5, 0.6]], 2.0, 0)

    def test_color(self):
        costs = cost_color([1.0, 2.0], [[0.2, 0.3, 0.4], [0.0, 0.0, 0.0]], [1.0, 1.0, 1.0])
        assert costs.psi[1] == pytest.approx(1.5)
        assert costs.psi[2] == 0.0
        np.testing.assert_allclose(costs.dpsi_dp[1], [-1.0, -1.0, -1.0])

    def test_color_match(self):
        assert cost_color([1.0], [[0.3, 0.6, 0.9]], [0.3, 0.6, 0.9]).psi[0] == 0.0


class TestRayLoss:
    def test_mask_foreground_ray(self):
        psi = cost_mask([1.0, 2.0], 0).psi
        assert ray_loss([0.8, 0.5], psi) == pytest.approx(0.4)

    def test_constant_psi(self, rng):
        x = rng.uniform(size=7)
        assert ray_loss(x, np.full(8, 3.25)) == pytest.approx(3.25)
        np.testing.assert_allclose(ray_loss_grad_x(x, np.full(8, 3.25)), 0.0, atol=1e-15)

    def test_direct_expectation(self):
        assert ray_loss([0.5], [2.0, 4.0]) == pytest.approx(3.0)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            ray_loss([0.5, 0.5], [1.0, 2.0])

    def test_telescoped_matches_expectation(self, rng):
        for _ in range(200):
            n = int(rng.integers(0, 30))
            x, psi = rng.uniform(size=n), rng.normal(size=n + 1)
            assert ray_loss(x, psi) == pytest.approx(ray_loss_expectation(x, psi), abs=1e-12)

    @pytest.mark.parametrize("kind", ["mask", "depth", "depth_semantics", "color"])
    def test_brute_force_oracle(self, kind):
        rng = np.random.default_rng(7)
        for _ in range(500):
            x, depths, payload, obs = random_instance(kind, rng)
            psi, _ = ray_costs_for(kind, depths, payload, obs)
            assert ray_loss(x, psi) == pytest.approx(brute_force_ray_loss(x, psi), abs=1e-10)

    def test_mask_closed_form(self, rng):
        for _ in range(10_000):
            n = int(rng.integers(1, 20))
            x = rng.uniform(size=n)
            s = int(rng.integers(0, 2))
            psi = cost_mask(np.arange(n, dtype=float), s).psi
            assert abs(ray_loss(x, psi) - mask_loss_closed_form(x, s)) <= 1e-12


class TestGradients:
    def test_mask_background_example(self):
        psi = cost_mask([1.0, 2.0], 1).psi
        # L = 1 - prod x for s_r = 1, so d/dx_k = -prod_{j != k} x_j
        assert ray_loss([0.5, 0.5], psi) == pytest.approx(0.75)
        np.testing.assert_allclose(ray_loss_grad_x([0.5, 0.5], psi), [-0.5, -0.5])

    def test_all_empty_depth(self):
        psi = cost_depth([1.0, 2.0, 3.0], 2.5).psi
        np.testing.assert_allclose(ray_loss_grad_x([1.0, 1.0, 1.0], psi), psi[-1] - psi[:-1])

    def test_linear_matches_naive(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 25))
            x, psi = rng.uniform(size=n), rng.normal(size=n + 1)
            np.testing.assert_allclose(ray_loss_grad_x(x, psi), ray_loss_grad_x_naive(x, psi), rtol=0, atol=1e-12)

    def test_zero_cells_no_division(self):
        psi = np.array([0.0, 1.0, 3.0, 2.0])
        grad = ray_loss_grad_x([0.0, 0.0, 0.0], psi)
        assert np.all(np.isfinite(grad))
        np.testing.assert_allclose(grad, ray_loss_grad_x_naive([0.0, 0.0, 0.0], psi))

    def test_grad_p_color(self):
        costs = cost_color([1.0], [[0.0, 0.0, 0.0]], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(ray_loss_grad_p([0.0], costs.psi, costs.dpsi_dp), [[-1.0, 0.0, 0.0]])

    def test_grad_p_zero_probability(self):
        costs = cost_color([1.0, 2.0], [[0.1, 0.1, 0.1], [0.5, 0.5, 0.5]], [0.0, 0.0, 0.0])
        grad = ray_loss_grad_p([0.0, 0.3], costs.psi, costs.dpsi_dp)
        np.testing.assert_allclose(grad[1], 0.0)

    def test_grad_p_needs_dpsi(self):
        with pytest.raises(DataError):
            ray_loss_grad_p([0.5], [1.0, 2.0], None)

    def test_padding_is_neutral(self, rng):
        x = rng.uniform(size=(1, 5))
        psi = rng.normal(size=(1, 6))
        x_pad = np.concatenate([x, np.ones((1, 3))], axis=1)
        psi_pad = np.concatenate([psi, np.repeat(psi[:, -1:], 3, axis=1)], axis=1)
        np.testing.assert_allclose(batch_loss(x_pad, psi_pad), batch_loss(x, psi))
        np.testing.assert_allclose(batch_grad_x(x_pad, psi_pad)[:, :5], batch_grad_x(x, psi))


def _ring(n=5, size=24):
    cams = []
    for k in range(n):
        a = 2 * math.pi * k / n
        eye = (2.5 * math.sin(a), 0.6, 2.5 * math.cos(a))
        cams.append(look_at(eye, (0.0, 0.0, 0.0), width=size, height=size, intrinsics=intrinsics_from_hfov(size, size, 40)))
    return cams


class TestViewLoss:
    @pytest.mark.parametrize("kind", ["mask", "depth"])
    def test_ground_truth_is_consistent(self, kind):
        binary, _ = make_test_shape("sphere", 12)
        gt = binary.as_occupancy_grid()
        for camera in _ring():
            obs = render(binary, None, camera, kind)
            result = view_loss(gt, None, obs, all_rays(obs))
            assert result.loss <= 1e-9

    def test_color_ground_truth_is_consistent(self):
        binary, aux = make_test_shape("sphere", 12)
        obs = render(binary, aux, _ring(1)[0], "color")
        result = view_loss(binary.as_occupancy_grid(), aux, obs, all_rays(obs))
        assert result.loss <= 1e-9
        np.testing.assert_allclose(result.grad_p, 0.0, atol=1e-12)

    def test_gradient_matches_finite_difference(self, rng):
        binary, _ = make_test_shape("sphere", 8)
        obs = render(binary, None, _ring(1, 12)[0], "depth")
        geometry = binary.geometry
        x = rng.uniform(0.2, 0.9, geometry.num_cells)
        rays = all_rays(obs, 5.0)
        result = view_loss(OccupancyGrid(geometry, x), None, obs, rays)
        touched = np.flatnonzero(result.grad_x)[:10]
        h = 1e-6
        for k in touched:
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            numeric = (view_loss(OccupancyGrid(geometry, xp), None, obs, rays).loss
                       - view_loss(OccupancyGrid(geometry, xm), None, obs, rays).loss) / (2 * h)
            assert result.grad_x[k] == pytest.approx(numeric, rel=1e-5, abs=1e-7)

    def test_parallel_matches_sequential(self, rng):
        binary, _ = make_test_shape("sphere", 8)
        obs = render(binary, None, _ring(1, 16)[0], "depth")
        grid = OccupancyGrid(binary.geometry, rng.uniform(size=binary.geometry.num_cells))
        rays = all_rays(obs)
        seq = view_loss(grid, None, obs, rays, chunk_size=32)
        par = view_loss(grid, None, obs, rays, chunk_size=32, threads=4, deterministic=False)
        assert par.loss == pytest.approx(seq.loss, rel=1e-12)
        np.testing.assert_allclose(par.grad_x, seq.grad_x, rtol=1e-10, atol=1e-12)

    def test_color_needs_aux(self):
        binary, aux = make_test_shape("sphere", 8)
        obs = render(binary, aux, _ring(1)[0], "color")
        with pytest.raises(DataError):
            view_loss(binary.as_occupancy_grid(), None, obs, all_rays(obs))

    def test_empty_ray_set(self):
        binary, _ = make_test_shape("sphere", 8)
        obs = render(binary, None, _ring(1)[0], "mask")
        with pytest.raises(DataError):
            view_loss(binary.as_occupancy_grid(), None, obs, all_rays(obs).take(slice(0, 0)))


class TestSingleRayPath:
    @pytest.mark.parametrize("kind", ["depth", "color"])
    def test_per_ray_sum_matches_view_loss(self, rng, kind):
        binary, aux = make_test_shape("sphere", 8)
        obs = render(binary, aux if kind == "color" else None, _ring(1, 8)[0], kind)
        geometry = binary.geometry
        grid = OccupancyGrid(geometry, rng.uniform(0.05, 0.95, geometry.num_cells))
        soft_aux = AuxGrid(geometry, "color", rng.uniform(size=(geometry.num_cells, 3))) if kind == "color" else None
        rays = all_rays(obs, 5.0)
        table = obs.trace_table(geometry)
        total = 0.0
        for i, pixel in enumerate(rays.pixels):
            trace = table.row(int(pixel))
            samples = gather_samples(grid, soft_aux, trace)
            costs = ray_costs(trace, rays.ray_observation(i), samples.p_r, escape_depth=obs.escape_depth)
            total += rays.weight[i] * ray_loss(samples.x_r, costs.psi)
        expected = view_loss(grid, soft_aux, obs, rays).loss
        assert total == pytest.approx(expected, rel=1e-10)
