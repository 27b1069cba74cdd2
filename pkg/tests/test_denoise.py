import math

import numpy as np
import pytest

from nlem.denoise import (NlemParams, PatchStack, add_gaussian_noise, build_stack,
                          initial_patch, nlem_denoise, nlem_iterates, nlm_denoise,
                          patch_at, patch_weights, solve_pixel)
from nlem.errors import NumericalError, UsageError
from nlem.imgio import Image, psnr, read_pgm
from nlem.median import (AdmmConfig, BoxConstraint, PointSet, admm_euclidean_median,
                         em_cost)

from conftest import data_path


def mirror(i, n):
    # Symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    period = 2 * n
    i %= period
    return i if i < n else period - 1 - i


def small_params(**kw):
    base = dict(sigma=20.0, h=200.0, search=7, patch=3, iters=4)
    base.update(kw)
    return NlemParams(**base)


# ---------------------------------------------------------------- params


def test_params_validation():
    with pytest.raises(UsageError):
        NlemParams(search=20)
    with pytest.raises(UsageError):
        NlemParams(search=5, patch=7)
    with pytest.raises(UsageError):
        NlemParams(h=0.0)
    with pytest.raises(UsageError):
        NlemParams(solver="bm3d")
    with pytest.raises(UsageError):
        NlemParams(init_mode="clean")


def test_params_defaults_and_init_switch():
    p = NlemParams.for_sigma(40)
    assert (p.search, p.patch, p.h, p.iters, p.mu, p.epsilon) == (21, 7, 400.0, 4, 1e-3, 1e-6)
    assert (p.range.lower, p.range.upper) == (0.0, 255.0)
    assert p.resolved_init == "noisy"
    assert NlemParams.for_sigma(60).resolved_init == "noisy"
    assert NlemParams.for_sigma(80).resolved_init == "nlm"
    assert NlemParams.for_sigma(80, init_mode="noisy").resolved_init == "noisy"
    assert NlemParams.for_sigma(0).h == 10.0


# ---------------------------------------------------------------- noise


def test_zero_noise_is_identity():
    img = Image(np.arange(12.0).reshape(3, 4))
    out = add_gaussian_noise(img, 0.0, seed=5)
    np.testing.assert_array_equal(out.pixels, img.pixels)


def test_noise_statistics():
    clean = Image(np.full((64, 64), 128.0))
    noisy = add_gaussian_noise(clean, 20.0, seed=0)
    diff = noisy.pixels - clean.pixels
    assert abs(diff.mean()) <= 20 * 3 / 64
    assert abs(diff.std() - 20) <= 0.05 * 20


def test_noise_is_seeded_and_unclipped():
    clean = Image(np.full((32, 32), 250.0))
    a = add_gaussian_noise(clean, 30.0, seed=9)
    b = add_gaussian_noise(clean, 30.0, seed=9)
    c = add_gaussian_noise(clean, 30.0, seed=10)
    assert a.pixels.tobytes() == b.pixels.tobytes()
    assert a.pixels.tobytes() != c.pixels.tobytes()
    assert a.pixels.max() > 255


def test_noise_psnr_at_sigma_40():
    clean = Image(np.full((512, 512), 128.0))
    noisy = add_gaussian_noise(clean, 40.0, seed=0)
    assert psnr(clean, noisy) == pytest.approx(16.15, abs=0.1)


# ---------------------------------------------------------------- patches


def test_patch_interior_ramp():
    img = Image(np.arange(100.0).reshape(10, 10))
    np.testing.assert_array_equal(patch_at(img, (4, 6), 3),
                                  [35, 36, 37, 45, 46, 47, 55, 56, 57])


def test_patch_corner_reflection():
    img = Image(np.array([[1.0, 2.0], [3.0, 4.0]]))
    # Rows/cols -1, 0, 1 map to 0, 0, 1 under symmetric reflection.
    np.testing.assert_array_equal(patch_at(img, (0, 0), 3), [1, 1, 2, 1, 1, 2, 3, 3, 4])


def test_patch_reflection_oracle():
    rng = np.random.default_rng(3)
    pix = rng.integers(0, 255, (4, 5)).astype(float)
    img = Image(pix)
    k = 7
    half = k // 2
    for r in range(4):
        for c in range(5):
            oracle = [pix[mirror(r + a, 4), mirror(c + b, 5)]
                      for a in range(-half, half + 1) for b in range(-half, half + 1)]
            np.testing.assert_array_equal(patch_at(img, (r, c), k), oracle)


def test_patch_constant_image():
    img = Image(np.full((5, 6), 42.0))
    for center in [(0, 0), (2, 3), (4, 5)]:
        assert np.all(patch_at(img, center, 5) == 42.0)


def test_patch_weights_examples():
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(patch_weights(p, p[None], 5.0), [1.0])
    q = p + np.array([3.0, 4.0, 0.0])
    assert patch_weights(p, q[None], 5.0)[0] == pytest.approx(math.exp(-1), abs=1e-15)
    with pytest.raises(UsageError):
        patch_weights(p, q[None], 0.0)


def test_patch_weights_resummation():
    rng = np.random.default_rng(8)
    center = rng.random(49) * 255
    others = rng.random((20, 49)) * 255
    h = 300.0
    expected = [math.exp(-sum((a - b) ** 2 for a, b in zip(center, o)) / h ** 2) for o in others]
    np.testing.assert_allclose(patch_weights(center, others, h), expected, rtol=1e-12)


def test_stack_window_and_weights():
    rng = np.random.default_rng(2)
    img = Image(rng.random((12, 13)) * 255)
    params = small_params(h=300.0)
    stack = build_stack(img, (0, 12), params)
    # Search window clipped at the top-right corner: 4 x 4 neighbours.
    assert stack.patches.shape == (16, 9)
    assert stack.weights[stack.self_index] == 1.0
    np.testing.assert_array_equal(stack.patches[stack.self_index], patch_at(img, (0, 12), 3))
    expected = patch_weights(stack.patches[stack.self_index], stack.patches, 300.0)
    np.testing.assert_allclose(stack.weights, expected, rtol=1e-13)
    interior = build_stack(img, (6, 6), params)
    assert interior.patches.shape == (49, 9)


# ---------------------------------------------------------------- NLM


def test_nlm_constant_image():
    img = Image(np.full((16, 16), 77.0))
    out = nlm_denoise(img, small_params())
    np.testing.assert_allclose(out.pixels, 77.0, rtol=1e-14)


def test_nlm_uniform_weights_is_window_mean():
    checker = np.indices((10, 11)).sum(axis=0) % 2 * 100.0 + 50.0
    img = Image(checker)
    out = nlm_denoise(img, small_params(h=1e12)).pixels
    for r in range(10):
        for c in range(11):
            win = checker[max(0, r - 3):r + 4, max(0, c - 3):c + 4]
            assert out[r, c] == pytest.approx(win.mean(), rel=1e-12)


def test_nlm_output_clipped():
    img = Image(np.full((8, 8), 300.0))
    assert np.all(nlm_denoise(img, small_params()).pixels == 255.0)


# ---------------------------------------------------------------- NLEM


@pytest.mark.parametrize("solver", ["admm", "irls"])
def test_nlem_constant_image(solver):
    img = Image(np.full((12, 12), 91.0))
    out = nlem_denoise(img, small_params(solver=solver))
    np.testing.assert_allclose(out.pixels, 91.0, atol=1e-9)


@pytest.mark.parametrize("solver", ["admm", "irls"])
def test_nlem_output_in_range(solver):
    clean = read_pgm(data_path("camera_crop128.pgm")).crop(0, 0, 32, 32)
    noisy = add_gaussian_noise(clean, 60.0, seed=1)
    params = NlemParams.for_sigma(60.0, search=9, patch=5, solver=solver)
    out = nlem_denoise(noisy, params).pixels
    assert out.min() >= 0.0 and out.max() <= 255.0


def test_nlem_custom_range():
    clean = Image(np.full((10, 10), 128.0))
    noisy = add_gaussian_noise(clean, 40.0, seed=3)
    params = small_params(range=BoxConstraint(100.0, 140.0))
    out = nlem_denoise(noisy, params).pixels
    assert out.min() >= 100.0 and out.max() <= 140.0


def test_concentrated_weights_pick_nearest_patch():
    rng = np.random.default_rng(4)
    own = rng.random(9) * 255
    others = own + rng.normal(0, 60, (15, 9))
    patches = np.vstack([own, others])
    weights = patch_weights(own, patches, h=1e-3)
    assert weights[0] == 1.0 and weights[1:].max() < 1e-300
    stack = PatchStack((0, 0), patches, weights, 0)
    res = admm_euclidean_median(stack.point_set(), None,
                                AdmmConfig(max_iter=10, z_init=initial_patch(stack, "nlm")))
    np.testing.assert_allclose(res.minimizer, own, atol=1e-9)


def test_kernel_matches_per_pixel_solver():
    clean = read_pgm(data_path("camera_crop128.pgm")).crop(30, 30, 24, 24)
    noisy = add_gaussian_noise(clean, 40.0, seed=2)
    for solver in ("admm", "irls"):
        for init in ("noisy", "nlm"):
            params = NlemParams.for_sigma(40.0, search=9, patch=5, solver=solver, init_mode=init)
            full = nlem_denoise(noisy, params).pixels
            for center in [(0, 0), (5, 17), (23, 23), (12, 0)]:
                res = solve_pixel(noisy, center, params)
                expected = min(max(res.minimizer[12], 0.0), 255.0)
                assert full[center] == pytest.approx(expected, abs=1e-9)


def test_iterates_end_at_final_image():
    clean = read_pgm(data_path("camera_crop128.pgm")).crop(0, 0, 20, 20)
    noisy = add_gaussian_noise(clean, 30.0, seed=0)
    for solver in ("admm", "irls"):
        params = NlemParams.for_sigma(30.0, search=7, patch=3, solver=solver, iters=5)
        frames = nlem_iterates(noisy, params)
        assert len(frames) == 5
        np.testing.assert_array_equal(frames[-1].pixels, nlem_denoise(noisy, params).pixels)


def test_nlem_never_worse_than_start():
    clean = read_pgm(data_path("camera256.pgm"))
    noisy = add_gaussian_noise(clean, 40.0, seed=0)
    params = NlemParams.for_sigma(40.0)
    worse = 0
    total = 0
    for r in range(3, 256, 23):
        for c in range(5, 256, 23):
            stack = build_stack(noisy, (r, c), params)
            ps = stack.point_set()
            start = em_cost(ps, initial_patch(stack, "noisy"))
            res = solve_pixel(noisy, (r, c), params, record_trace=False)
            total += 1
            if res.objective > start * (1 + 1e-6):
                worse += 1
    assert total >= 100
    assert worse / total < 0.01


def test_nlem_deterministic():
    clean = read_pgm(data_path("camera_crop128.pgm")).crop(0, 0, 40, 40)
    noisy = add_gaussian_noise(clean, 40.0, seed=0)
    params = NlemParams.for_sigma(40.0, search=11, patch=5)
    a = nlem_denoise(noisy, params)
    b = nlem_denoise(noisy, params)
    assert a.pixels.tobytes() == b.pixels.tobytes()


def test_denoisers_improve_psnr():
    clean = read_pgm(data_path("camera_crop128.pgm")).crop(0, 0, 64, 64)
    noisy = add_gaussian_noise(clean, 20.0, seed=0)
    base = psnr(clean, noisy)
    for solver in ("nlm", "admm", "irls"):
        params = NlemParams.for_sigma(20.0, search=11, patch=5, solver=solver)
        assert psnr(clean, nlem_denoise(noisy, params)) > base + 3


def test_solve_pixel_bounds_and_solver():
    img = Image(np.zeros((5, 5)))
    with pytest.raises(UsageError):
        solve_pixel(img, (5, 0), small_params())
    with pytest.raises(UsageError):
        solve_pixel(img, (0, 0), small_params(solver="nlm"))


def test_numerical_error_message():
    err = NumericalError("ADMM produced a non-finite iterate", iteration=3, pixel=(4, 7))
    assert "iteration 3" in str(err) and "row=4, col=7" in str(err)
    assert err.pixel == (4, 7)


def test_psnr_plateaus_by_iteration_four():
    # Iteration 4 within 0.05 dB of iteration 10 at sigma = 20.
    clean = read_pgm(data_path("camera_crop128.pgm"))
    noisy = add_gaussian_noise(clean, 20.0, seed=0)
    frames = nlem_iterates(noisy, NlemParams.for_sigma(20.0, iters=10))
    assert abs(psnr(clean, frames[3]) - psnr(clean, frames[9])) <= 0.05
