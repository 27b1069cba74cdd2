"""Weighted Euclidean median by ADMM, and Non-Local Euclidean Medians denoising."""

from .denoise import (NlemParams, PatchStack, add_gaussian_noise, nlem_denoise,
                      nlm_denoise, patch_at, patch_weights)
from .errors import NumericalError, PgmError, UsageError
from .imgio import Image, psnr, read_pgm, write_pgm, write_trace_csv
from .median import (AdmmConfig, BoxConstraint, IrlsConfig, PointSet, SolverResult,
                     admm_euclidean_median, brute_force_median_2d, em_cost,
                     irls_euclidean_median, optimality_residual, project_box,
                     prox_weighted_norm, surrogate_cost)

__version__ = "0.1.0"
