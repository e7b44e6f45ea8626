"""Numeric hot kernels.

Two groups of inner loops dominate the package runtime and live here in a
numba ``@njit`` build plus a pure-numpy build (``RELAYOPT_BACKEND`` picks
the active one, see :mod:`relayopt._backend`):

* the Monte Carlo expected-payoff estimator, which evaluates millions of
  single-winner auction outcomes (a K-th largest selection over a handful
  of rival bids plus a threshold test per sample), and
* the per-cone arithmetic of the interior-point solver (step-to-boundary,
  Jordan products/solves and the Nesterov-Todd scaling blocks), called a
  handful of times per Newton iteration over thousands of small solves.

Second-order cones are described positionally by ``(starts, stops)`` index
arrays and the orthant entries by one flat index array.

``benchmarks/bench_kernels.py`` times the two builds against each other.
"""

import numpy as np

from ._backend import NUMBA_ENABLED

__all__ = [
    "kth_largest_rows",
    "payoff_mean_stderr",
    "payoff_sweep",
    "cone_max_step",
    "cone_jprod",
    "cone_jsolve",
    "cone_nt_scaling",
]


# -- pure numpy builds -------------------------------------------------------

def _kth_largest_rows_np(rivals: np.ndarray, K: int) -> np.ndarray:
    m = rivals.shape[1]
    return np.partition(rivals, m - K, axis=1)[:, m - K]


def _payoff_mean_stderr_np(kth, x_reported, x_true):
    payoff = np.where(kth <= x_reported, x_true - kth, 0.0)
    mean = float(payoff.mean())
    stderr = float(payoff.std(ddof=1) / np.sqrt(payoff.size))
    return mean, stderr


def _payoff_sweep_np(kth, grid, x_true):
    n = grid.size
    means = np.empty(n)
    stderrs = np.empty(n)
    for j in range(n):
        means[j], stderrs[j] = _payoff_mean_stderr_np(kth, grid[j], x_true)
    return means, stderrs


# -- pure numpy cone arithmetic ----------------------------------------------

def _cone_max_step_np(v, dv, orth, starts, stops):
    alpha = np.inf
    if orth.size:
        vv, dd = v[orth], dv[orth]
        neg = dd < 0
        if np.any(neg):
            alpha = float(np.min(-vv[neg] / dd[neg]))
    for a, b in zip(starts, stops):
        vv, dd = v[a:b], dv[a:b]
        aq = dd[0] * dd[0] - dd[1:] @ dd[1:]
        bq = vv[0] * dd[0] - vv[1:] @ dd[1:]
        cq = max(vv[0] * vv[0] - vv[1:] @ vv[1:], 0.0)
        if aq < 0 or (aq == 0 and bq < 0) or (aq > 0 and bq < 0
                                              and bq * bq >= aq * cq):
            sq = np.sqrt(max(bq * bq - aq * cq, 0.0))
            if aq == 0:
                root = -cq / (2.0 * bq)
            else:
                root = np.inf
                for r in ((-bq - sq) / aq, (-bq + sq) / aq):
                    if 0 < r < root:
                        root = r
            if root < alpha:
                alpha = float(root)
    return alpha


def _cone_jprod_np(u, v, orth, starts, stops, out):
    if orth.size:
        out[orth] = u[orth] * v[orth]
    for a, b in zip(starts, stops):
        uu, vv = u[a:b], v[a:b]
        out[a] = uu @ vv
        out[a + 1:b] = uu[0] * vv[1:] + vv[0] * uu[1:]
    return out


def _cone_jsolve_np(lam, r, orth, starts, stops, out):
    if orth.size:
        out[orth] = r[orth] / lam[orth]
    for a, b in zip(starts, stops):
        l0, lb = lam[a], lam[a + 1:b]
        det = l0 * l0 - lb @ lb
        x0 = (l0 * r[a] - lb @ r[a + 1:b]) / det
        out[a] = x0
        out[a + 1:b] = (r[a + 1:b] - x0 * lb) / l0
    return out


def _cone_nt_scaling_np(s, z, orth, starts, stops, W, lam):
    """Returns 0 on success, 1 when an iterate left the cone interior."""
    if orth.size:
        ss, zz = s[orth], z[orth]
        if np.any(ss <= 0) or np.any(zz <= 0):
            return 1
        W[orth, orth] = np.sqrt(ss / zz)
        lam[orth] = np.sqrt(ss * zz)
    for a, b in zip(starts, stops):
        ss, zz = s[a:b], z[a:b]
        res_s = ss[0] * ss[0] - ss[1:] @ ss[1:]
        res_z = zz[0] * zz[0] - zz[1:] @ zz[1:]
        if res_s <= 0 or res_z <= 0 or ss[0] <= 0 or zz[0] <= 0:
            return 1
        rs, rz = np.sqrt(res_s), np.sqrt(res_z)
        sbar, zbar = ss / rs, zz / rz
        gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
        # hyperbolic unit vector of the scaling point (wbar' J wbar = 1)
        wbar = sbar.copy()
        wbar[0] += zbar[0]
        wbar[1:] -= zbar[1:]
        wbar /= 2.0 * gamma
        # W block = sqrt(rs/rz) * P(wbar)^{1/2}
        scale = np.sqrt(rs / rz)
        blk = np.outer(wbar[1:], wbar[1:] / (1.0 + wbar[0]))
        blk[np.diag_indices_from(blk)] += 1.0
        W[a, a] = scale * wbar[0]
        W[a, a + 1:b] = scale * wbar[1:]
        W[a + 1:b, a] = scale * wbar[1:]
        W[a + 1:b, a + 1:b] = scale * blk
        lam[a:b] = W[a:b, a:b] @ zz
    return 0


# -- numba builds ------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True)
    def _cone_max_step_nb(v, dv, orth, starts, stops):  # pragma: no cover
        alpha = np.inf
        for i in orth:
            if dv[i] < 0:
                t = -v[i] / dv[i]
                if t < alpha:
                    alpha = t
        for k in range(starts.size):
            a, b = starts[k], stops[k]
            aq = dv[a] * dv[a]
            bq = v[a] * dv[a]
            cq = v[a] * v[a]
            for i in range(a + 1, b):
                aq -= dv[i] * dv[i]
                bq -= v[i] * dv[i]
                cq -= v[i] * v[i]
            if cq < 0.0:
                cq = 0.0
            hit = aq < 0 or (aq == 0 and bq < 0) or (
                aq > 0 and bq < 0 and bq * bq >= aq * cq)
            if hit:
                disc = bq * bq - aq * cq
                if disc < 0.0:
                    disc = 0.0
                sq = np.sqrt(disc)
                if aq == 0:
                    root = -cq / (2.0 * bq)
                else:
                    root = np.inf
                    r1 = (-bq - sq) / aq
                    r2 = (-bq + sq) / aq
                    if r1 > 0 and r1 < root:
                        root = r1
                    if r2 > 0 and r2 < root:
                        root = r2
                if root < alpha:
                    alpha = root
        return alpha

    @njit(cache=True)
    def _cone_jprod_nb(u, v, orth, starts, stops, out):  # pragma: no cover
        for i in orth:
            out[i] = u[i] * v[i]
        for k in range(starts.size):
            a, b = starts[k], stops[k]
            acc = 0.0
            for i in range(a, b):
                acc += u[i] * v[i]
            for i in range(a + 1, b):
                out[i] = u[a] * v[i] + v[a] * u[i]
            out[a] = acc
        return out

    @njit(cache=True)
    def _cone_jsolve_nb(lam, r, orth, starts, stops, out):  # pragma: no cover
        for i in orth:
            out[i] = r[i] / lam[i]
        for k in range(starts.size):
            a, b = starts[k], stops[k]
            det = lam[a] * lam[a]
            lr = lam[a] * r[a]
            for i in range(a + 1, b):
                det -= lam[i] * lam[i]
                lr -= lam[i] * r[i]
            x0 = lr / det
            out[a] = x0
            for i in range(a + 1, b):
                out[i] = (r[i] - x0 * lam[i]) / lam[a]
        return out

    @njit(cache=True)
    def _cone_nt_scaling_nb(s, z, orth, starts, stops, W, lam):
        # pragma: no cover - jitted
        for i in orth:
            if s[i] <= 0 or z[i] <= 0:
                return 1
            W[i, i] = np.sqrt(s[i] / z[i])
            lam[i] = np.sqrt(s[i] * z[i])
        for k in range(starts.size):
            a, b = starts[k], stops[k]
            res_s = s[a] * s[a]
            res_z = z[a] * z[a]
            for i in range(a + 1, b):
                res_s -= s[i] * s[i]
                res_z -= z[i] * z[i]
            if res_s <= 0 or res_z <= 0 or s[a] <= 0 or z[a] <= 0:
                return 1
            rs, rz = np.sqrt(res_s), np.sqrt(res_z)
            dot = 0.0
            for i in range(a, b):
                dot += (s[i] / rs) * (z[i] / rz)
            gamma = np.sqrt((1.0 + dot) / 2.0)
            d = b - a
            wbar = np.empty(d)
            wbar[0] = (s[a] / rs + z[a] / rz) / (2.0 * gamma)
            for i in range(1, d):
                wbar[i] = (s[a + i] / rs - z[a + i] / rz) / (2.0 * gamma)
            scale = np.sqrt(rs / rz)
            W[a, a] = scale * wbar[0]
            for i in range(1, d):
                W[a, a + i] = scale * wbar[i]
                W[a + i, a] = scale * wbar[i]
            denom = 1.0 + wbar[0]
            for i in range(1, d):
                for j in range(1, d):
                    v = wbar[i] * wbar[j] / denom
                    if i == j:
                        v += 1.0
                    W[a + i, a + j] = scale * v
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += W[a + i, a + j] * z[a + j]
                lam[a + i] = acc
        return 0

    @njit(cache=True)
    def _kth_largest_rows_nb(rivals, K):  # pragma: no cover - jitted
        s, m = rivals.shape
        out = np.empty(s)
        work = np.empty(m)
        for i in range(s):
            for j in range(m):
                work[j] = rivals[i, j]
            # partial selection sort of the top K entries; m is tiny
            for j in range(K):
                best = j
                for l in range(j + 1, m):
                    if work[l] > work[best]:
                        best = l
                work[j], work[best] = work[best], work[j]
            out[i] = work[K - 1]
        return out

    @njit(cache=True)
    def _payoff_mean_stderr_nb(kth, x_reported, x_true):  # pragma: no cover
        s = kth.size
        total = 0.0
        for i in range(s):
            if kth[i] <= x_reported:
                total += x_true - kth[i]
        mean = total / s
        var = 0.0
        for i in range(s):
            p = x_true - kth[i] if kth[i] <= x_reported else 0.0
            var += (p - mean) * (p - mean)
        var /= s - 1
        return mean, np.sqrt(var / s)

    @njit(cache=True)
    def _payoff_sweep_nb(kth, grid, x_true):  # pragma: no cover - jitted
        n = grid.size
        means = np.empty(n)
        stderrs = np.empty(n)
        for j in range(n):
            means[j], stderrs[j] = _payoff_mean_stderr_nb(
                kth, grid[j], x_true)
        return means, stderrs


def kth_largest_rows(rivals: np.ndarray, K: int) -> np.ndarray:
    """K-th largest entry of each row of ``rivals`` (rows are MC samples)."""
    rivals = np.ascontiguousarray(rivals, dtype=np.float64)
    if not 1 <= K <= rivals.shape[1]:
        raise ValueError(f"K={K} out of range for {rivals.shape[1]} rivals")
    if NUMBA_ENABLED:
        return _kth_largest_rows_nb(rivals, K)
    return _kth_largest_rows_np(rivals, K)


def payoff_mean_stderr(kth: np.ndarray, x_reported: float,
                       x_true: float) -> tuple[float, float]:
    """Mean and standard error of the auction payoff over MC samples.

    ``kth`` holds the K-th largest rival bid per sample; the bidder wins a
    sample when its report meets that threshold and is then credited its
    true value minus the threshold (the uniform clearing price).
    """
    kth = np.ascontiguousarray(kth, dtype=np.float64)
    if NUMBA_ENABLED:
        return _payoff_mean_stderr_nb(kth, float(x_reported), float(x_true))
    return _payoff_mean_stderr_np(kth, float(x_reported), float(x_true))


def payoff_sweep(kth: np.ndarray, grid: np.ndarray,
                 x_true: float) -> tuple[np.ndarray, np.ndarray]:
    """Payoff mean/stderr for every report on ``grid``, sharing one
    rival sample set (common random numbers)."""
    kth = np.ascontiguousarray(kth, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if NUMBA_ENABLED:
        return _payoff_sweep_nb(kth, grid, float(x_true))
    return _payoff_sweep_np(kth, grid, float(x_true))


if NUMBA_ENABLED:
    cone_max_step = _cone_max_step_nb
    cone_jprod = _cone_jprod_nb
    cone_jsolve = _cone_jsolve_nb
    cone_nt_scaling = _cone_nt_scaling_nb
else:
    cone_max_step = _cone_max_step_np
    cone_jprod = _cone_jprod_np
    cone_jsolve = _cone_jsolve_np
    cone_nt_scaling = _cone_nt_scaling_np
