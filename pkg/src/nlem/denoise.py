"""Patch-based denoising: NLM and Non-Local Euclidean Medians (NLEM).

For every pixel the neighbouring patches inside an ``S x S`` search window
are weighted by ``exp(-||P_i - P_j||^2 / h^2)``. NLM averages the centre
pixels; NLEM replaces each patch by the box-constrained weighted Euclidean
median of its neighbours and keeps the median's centre pixel.

Patches are read from the mirror-padded image (symmetric reflection, edge
sample repeated). Search windows are clipped to the image, so pixels near
the border have fewer than ``S^2`` neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numba
import numpy as np

from . import _kernels
from .errors import NumericalError, UsageError
from .imgio import Image
from .median import (DEFAULT_EPSILON, DEFAULT_MU, AdmmConfig, BoxConstraint,
                     IrlsConfig, PointSet, SolverResult, admm_euclidean_median,
                     irls_euclidean_median)

SOLVERS = ("admm", "irls", "nlm")
INIT_MODES = ("noisy", "nlm")
# Above this noise level the NLM patch is the better starting point.
NLM_INIT_SIGMA = 60.0

_METHOD_CODE = {"nlm": _kernels.METHOD_NLM, "admm": _kernels.METHOD_ADMM,
                "irls": _kernels.METHOD_IRLS}


@dataclass(frozen=True)
class NlemParams:
    """Denoising configuration.

    ``h`` is absolute; :meth:`for_sigma` derives it as a multiple of the
    noise level. ``init_mode=None`` picks ``"noisy"`` for ``sigma <= 60``
    and ``"nlm"`` above.
    """

    sigma: float = 0.0
    h: float = 10.0
    search: int = 21
    patch: int = 7
    solver: str = "admm"
    iters: int = 4
    mu: float = DEFAULT_MU
    epsilon: float = DEFAULT_EPSILON
    init_mode: Optional[str] = None
    range: BoxConstraint = field(default_factory=lambda: BoxConstraint(0.0, 255.0))

    def __post_init__(self):
        for name in ("search", "patch"):
            v = getattr(self, name)
            if int(v) != v or v < 1 or v % 2 == 0:
                raise UsageError(f"{name} must be an odd positive integer, got {v}")
        if self.patch > self.search:
            raise UsageError(f"patch size {self.patch} exceeds search window {self.search}")
        if not self.h > 0:
            raise UsageError(f"h must be positive, got {self.h}")
        if not self.sigma >= 0:
            raise UsageError(f"sigma must be nonnegative, got {self.sigma}")
        if self.solver not in SOLVERS:
            raise UsageError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if int(self.iters) < 1:
            raise UsageError(f"iters must be >= 1, got {self.iters}")
        if not self.mu > 0 or not self.epsilon > 0:
            raise UsageError("mu and epsilon must be positive")
        if self.init_mode is not None and self.init_mode not in INIT_MODES:
            raise UsageError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")

    @classmethod
    def for_sigma(cls, sigma: float, h_mult: float = 10.0, **kw) -> "NlemParams":
        # sigma = 0 would give h = 0; treat the noise floor as one grey level.
        return cls(sigma=sigma, h=h_mult * max(sigma, 1.0), **kw)

    @property
    def resolved_init(self) -> str:
        if self.init_mode is not None:
            return self.init_mode
        return "nlm" if self.sigma > NLM_INIT_SIGMA else "noisy"

    def with_(self, **kw) -> "NlemParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class PatchStack:
    center_pixel: Tuple[int, int]
    patches: np.ndarray
    weights: np.ndarray
    self_index: int

    def point_set(self) -> PointSet:
        return PointSet(self.patches, self.weights)


def set_threads(n: Optional[int]) -> None:
    """Cap the worker threads used by the per-pixel loops."""
    if n is not None:
        if int(n) < 1:
            raise UsageError(f"thread count must be >= 1, got {n}")
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def add_gaussian_noise(clean: Image, sigma: float, seed: int) -> Image:
    """``clean + sigma * xi`` with ``xi`` iid N(0, 1) from a PCG64 stream.

    The result is not clipped.
    """
    if not sigma >= 0:
        raise UsageError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return Image(clean.pixels.copy())
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(clean.pixels.shape)
    return Image(clean.pixels + sigma * xi)


def _padded(img: Image, k: int) -> np.ndarray:
    return np.ascontiguousarray(np.pad(img.pixels, k // 2, mode="symmetric"))


def patch_at(img: Image, center: Tuple[int, int], k: int) -> np.ndarray:
    """The ``k x k`` window around ``center``, flattened row-major."""
    if k < 1 or k % 2 == 0:
        raise UsageError(f"patch size must be odd, got {k}")
    row, col = center
    if not (0 <= row < img.height and 0 <= col < img.width):
        raise UsageError(f"pixel {center} outside {img.height}x{img.width} image")
    padded = _padded(img, k)
    return padded[row:row + k, col:col + k].reshape(-1).copy()


def patch_weights(center_patch, neighbor_patches, h: float) -> np.ndarray:
    """``exp(-||P_i - P_j||^2 / h^2)`` for each row ``P_j``."""
    if not h > 0:
        raise UsageError(f"h must be positive, got {h}")
    diff = np.atleast_2d(neighbor_patches) - np.asarray(center_patch)
    return np.exp(-np.sum(diff * diff, axis=1) / (h * h))


def build_stack(noisy: Image, center: Tuple[int, int], params: NlemParams) -> PatchStack:
    row, col = center
    if not (0 <= row < noisy.height and 0 <= col < noisy.width):
        raise UsageError(f"pixel {center} outside {noisy.height}x{noisy.width} image")
    A, w, self_idx = _kernels.pixel_stack(_padded(noisy, params.patch), row, col,
                                          noisy.height, noisy.width, params.patch,
                                          params.search, float(params.h))
    return PatchStack((row, col), A, w, int(self_idx))


def initial_patch(stack: PatchStack, init_mode: str) -> np.ndarray:
    if init_mode == "nlm":
        return stack.weights @ stack.patches / stack.weights.sum()
    return stack.patches[stack.self_index].copy()


def solve_pixel(noisy: Image, center: Tuple[int, int], params: NlemParams,
                iters: Optional[int] = None, record_trace: bool = True) -> SolverResult:
    """Solve the patch regression at one pixel and return the full solver result.

    This is the per-pixel problem that :func:`nlem_denoise` runs for every
    pixel, exposed for convergence studies.
    """
    stack = build_stack(noisy, center, params)
    ps = stack.point_set()
    start = initial_patch(stack, params.resolved_init)
    iters = params.iters if iters is None else iters
    if params.solver == "admm":
        return admm_euclidean_median(ps, params.range, AdmmConfig(
            mu=params.mu, max_iter=iters, z_init=start, record_trace=record_trace))
    if params.solver == "irls":
        return irls_euclidean_median(ps, IrlsConfig(
            epsilon=params.epsilon, max_iter=iters, x_init=start,
            record_trace=record_trace), box=params.range)
    raise UsageError("solve_pixel needs an ADMM or IRLS solver")


def _run(noisy: Image, params: NlemParams, solver: str, record: bool) -> np.ndarray:
    box = params.range
    out, failures = _kernels.denoise_image(
        _padded(noisy, params.patch), noisy.height, noisy.width, params.patch,
        params.search, float(params.h), _METHOD_CODE[solver], int(params.iters),
        float(params.mu), float(params.epsilon), box.lower, box.upper,
        params.resolved_init == "nlm", record)
    bad = np.argwhere(failures > 0)
    if bad.size:
        r, c = (int(v) for v in bad[0])
        raise NumericalError(f"{solver.upper()} produced a non-finite iterate",
                             iteration=int(failures[r, c]), pixel=(r, c))
    return out


def nlm_denoise(noisy: Image, params: NlemParams) -> Image:
    """Classical NLM: weighted mean of centre pixels, clipped to the range."""
    return Image(_run(noisy, params, "nlm", False)[0])


def nlem_denoise(noisy: Image, params: NlemParams) -> Image:
    """Denoise with the configured solver (``params.solver`` may be ``"nlm"``)."""
    return Image(_run(noisy, params, params.solver, False)[0])


def nlem_iterates(noisy: Image, params: NlemParams) -> list:
    """Denoised images after each of ``params.iters`` solver iterations."""
    if params.solver == "nlm":
        img = nlm_denoise(noisy, params)
        return [img] * int(params.iters)
    stack = _run(noisy, params, params.solver, True)
    return [Image(stack[t]) for t in range(stack.shape[0])]


def work_per_pixel(params: NlemParams) -> int:
    """Nominal floating-point work per interior pixel and iteration, ``S^2 k^2``."""
    return params.search ** 2 * params.patch ** 2
