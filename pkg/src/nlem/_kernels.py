"""Compiled inner loops shared by the median solvers and the denoisers.

Everything here works on plain float64 arrays so it can be called from
inside ``prange`` loops. Accumulations always run in index order, which
makes every solve bit-reproducible regardless of the thread count.
"""

import math
import os

import numba
import numpy as np
from numba import njit, prange

# Prefer OpenMP: probing an outdated TBB first only produces a warning.
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

METHOD_NLM = 0
METHOD_ADMM = 1
METHOD_IRLS = 2


@njit(cache=True)
def em_cost(A, w, x):
    n, d = A.shape
    total = 0.0
    for k in range(n):
        s = 0.0
        for i in range(d):
            diff = x[i] - A[k, i]
            s += diff * diff
        total += w[k] * math.sqrt(s)
    return total


@njit(cache=True)
def surrogate_cost(A, w, x, eps):
    n, d = A.shape
    total = 0.0
    for k in range(n):
        s = 0.0
        for i in range(d):
            diff = x[i] - A[k, i]
            s += diff * diff
        total += w[k] * math.sqrt(s + eps)
    return total


@njit(cache=True)
def admm_solve(A, w, z0, mu, lo, hi, max_iter, tol, obj_out, res_out, center_out, center):
    """Run the split-variable ADMM loop for the box-constrained median.

    Returns ``(z, iterations)``; a negative iteration count ``-t`` flags a
    non-finite value first seen at iteration ``t``. Trace buffers of length
    zero are skipped.
    """
    n, d = A.shape
    z = z0.copy()
    X = np.empty((n, d))
    Y = np.zeros((n, d))
    r = np.empty(d)
    v = np.empty(d)
    inv_mu = 1.0 / mu
    record_obj = obj_out.shape[0] > 0
    record_res = res_out.shape[0] > 0
    record_center = center_out.shape[0] > 0
    iters = 0
    for t in range(max_iter):
        for i in range(d):
            r[i] = 0.0
        for k in range(n):
            lam = w[k] * inv_mu
            s = 0.0
            for i in range(d):
                vi = z[i] - Y[k, i] * inv_mu
                v[i] = vi
                diff = vi - A[k, i]
                s += diff * diff
            dist = math.sqrt(s)
            if lam == 0.0:
                for i in range(d):
                    X[k, i] = v[i]
                    r[i] += v[i] + Y[k, i] * inv_mu
            elif dist <= lam:
                for i in range(d):
                    X[k, i] = A[k, i]
                    r[i] += A[k, i] + Y[k, i] * inv_mu
            else:
                step = lam / dist
                for i in range(d):
                    xi = v[i] - step * (v[i] - A[k, i])
                    X[k, i] = xi
                    r[i] += xi + Y[k, i] * inv_mu
        shift = 0.0
        for i in range(d):
            zi = r[i] / n
            if zi < lo:
                zi = lo
            elif zi > hi:
                zi = hi
            dz = zi - z[i]
            shift += dz * dz
            z[i] = zi
        worst = 0.0
        for k in range(n):
            s = 0.0
            for i in range(d):
                diff = X[k, i] - z[i]
                Y[k, i] += mu * diff
                s += diff * diff
            if not s <= worst:
                worst = s
        res = math.sqrt(worst)
        iters = t + 1
        if not math.isfinite(res) or not math.isfinite(shift):
            return z, -iters
        if record_obj:
            obj_out[t] = em_cost(A, w, z)
        if record_res:
            res_out[t] = res
        if record_center:
            center_out[t] = z[center]
        # A small primal residual alone can be transient; z must also settle.
        if tol > 0.0 and res <= tol and math.sqrt(shift) <= tol:
            break
    return z, iters


@njit(cache=True)
def irls_solve(A, w, x0, eps, max_iter, tol, obj_out, center_out, center):
    """Majorize-minimize iterations on the smoothed objective.

    Same return convention as :func:`admm_solve`.
    """
    n, d = A.shape
    x = x0.copy()
    num = np.empty(d)
    record_obj = obj_out.shape[0] > 0
    record_center = center_out.shape[0] > 0
    prev = 0.0
    if tol > 0.0:
        prev = surrogate_cost(A, w, x, eps)
    iters = 0
    for t in range(max_iter):
        for i in range(d):
            num[i] = 0.0
        den = 0.0
        for k in range(n):
            s = 0.0
            for i in range(d):
                diff = x[i] - A[k, i]
                s += diff * diff
            beta = w[k] / math.sqrt(s + eps)
            den += beta
            for i in range(d):
                num[i] += beta * A[k, i]
        iters = t + 1
        if not (math.isfinite(den) and den > 0.0):
            return x, -iters
        check = 0.0
        for i in range(d):
            x[i] = num[i] / den
            check += x[i] * 0.0
        if check != 0.0:
            return x, -iters
        if record_center:
            center_out[t] = x[center]
        if record_obj or tol > 0.0:
            cur = surrogate_cost(A, w, x, eps)
            if record_obj:
                obj_out[t] = cur
            if tol > 0.0:
                if prev - cur <= tol * prev:
                    break
                prev = cur
    return x, iters


@njit(cache=True)
def pixel_stack(padded, row, col, height, width, k, S, h):
    """Neighbour patches and similarity weights for one pixel.

    ``padded`` is the noisy image mirror-padded by ``k // 2`` on every side.
    The search window is clipped to the image. Returns ``(A, w, self_idx)``.
    """
    half_s = S // 2
    r0 = max(0, row - half_s)
    r1 = min(height - 1, row + half_s)
    c0 = max(0, col - half_s)
    c1 = min(width - 1, col + half_s)
    m = (r1 - r0 + 1) * (c1 - c0 + 1)
    d = k * k
    A = np.empty((m, d))
    idx = 0
    self_idx = 0
    for rr in range(r0, r1 + 1):
        for cc in range(c0, c1 + 1):
            if rr == row and cc == col:
                self_idx = idx
            q = 0
            for a in range(k):
                for b in range(k):
                    A[idx, q] = padded[rr + a, cc + b]
                    q += 1
            idx += 1
    w = np.empty(m)
    inv_h2 = 1.0 / (h * h)
    for j in range(m):
        s = 0.0
        for q in range(d):
            diff = A[self_idx, q] - A[j, q]
            s += diff * diff
        w[j] = math.exp(-s * inv_h2)
    return A, w, self_idx


@njit(parallel=True, cache=True)
def denoise_image(padded, height, width, k, S, h, method, iters, mu, eps,
                  lo, hi, init_nlm, record):
    """Denoise every pixel; returns ``(out, failures)``.

    ``out`` has shape ``(iters, H, W)`` when ``record`` is set (the centre
    estimate after each solver iteration) and ``(1, H, W)`` otherwise.
    ``failures`` holds, per pixel, the iteration at which a solver produced
    a non-finite value (0 when the pixel is clean).
    """
    n_rec = iters if record else 1
    out = np.empty((n_rec, height, width))
    failures = np.zeros((height, width), dtype=np.int64)
    d = k * k
    center = d // 2
    empty = np.empty(0)
    for p in prange(height * width):
        row = p // width
        col = p % width
        A, w, self_idx = pixel_stack(padded, row, col, height, width, k, S, h)
        m = A.shape[0]
        if method == METHOD_NLM:
            num = 0.0
            den = 0.0
            for j in range(m):
                num += w[j] * A[j, center]
                den += w[j]
            val = num / den
            val = min(max(val, lo), hi)
            for t in range(n_rec):
                out[t, row, col] = val
            continue
        if init_nlm:
            start = np.zeros(d)
            den = 0.0
            for j in range(m):
                den += w[j]
                for q in range(d):
                    start[q] += w[j] * A[j, q]
            for q in range(d):
                start[q] /= den
        else:
            start = A[self_idx].copy()
        trace = np.empty(n_rec) if record else empty
        if method == METHOD_ADMM:
            z, done = admm_solve(A, w, start, mu, lo, hi, iters, 0.0,
                                 empty, empty, trace, center)
        else:
            z, done = irls_solve(A, w, start, eps, iters, 0.0, empty, trace, center)
        if done < 0:
            failures[row, col] = -done
            for t in range(n_rec):
                out[t, row, col] = np.nan
            continue
        if record:
            for t in range(n_rec):
                out[t, row, col] = min(max(trace[t], lo), hi)
        else:
            out[0, row, col] = min(max(z[center], lo), hi)
    return out, failures
