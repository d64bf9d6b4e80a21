"""Product-kernel density estimation over encoded mixed spaces.

Numeric axes use a Gaussian kernel with Scott's bandwidth; categorical axes use
the Aitchison-Aitken kernel. Inactive entries (code ``-1``) behave like one
extra discrete state per axis: two inactive entries match with kernel value 1,
an active/inactive pair gets :data:`MISMATCH_KERNEL`.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

MIN_BANDWIDTH = 1e-3
MISMATCH_KERNEL = 1e-3

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class ProductKDE:
    def __init__(self, data: np.ndarray, is_cat: np.ndarray, n_levels: np.ndarray):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[0] == 0:
            raise ValueError("KDE needs at least one point")
        self.data = data
        self.is_cat = np.asarray(is_cat, dtype=bool)
        self.n_levels = np.asarray(n_levels, dtype=int)
        n, d = data.shape
        factor = n ** (-1.0 / (d + 4))
        bw = np.empty(d)
        for j in range(d):
            col = data[:, j]
            col = col[col >= 0]
            sd = col.std(ddof=1) if col.size > 1 else 0.0
            bw[j] = factor * sd
        bw = np.maximum(bw, MIN_BANDWIDTH)
        # Aitchison-Aitken lambda lives in [0, (L - 1) / L]; (L - 1) / L is uniform
        lam_max = np.where(self.n_levels > 1, (self.n_levels - 1) / np.maximum(self.n_levels, 1), 0.0)
        self.bandwidth = np.where(self.is_cat, np.minimum(bw, lam_max), bw)

    def _log_kernel_axis(self, q: np.ndarray, j: int) -> np.ndarray:
        """(m, n) log-kernel values on axis j for query column q."""
        x = self.data[:, j]
        qa = (q >= 0)[:, None]
        xa = (x >= 0)[None, :]
        both = qa & xa
        out = np.where(qa == xa, 0.0, np.log(MISMATCH_KERNEL))
        if self.is_cat[j]:
            L = self.n_levels[j]
            if L > 1:
                lam = self.bandwidth[j]
                same = np.abs(q[:, None] - x[None, :]) < 0.5 / (L - 1)
                val = np.where(same, np.log1p(-lam), np.log(lam / (L - 1)))
                out = np.where(both, val, out)
        else:
            h = self.bandwidth[j]
            z = (q[:, None] - x[None, :]) / h
            out = np.where(both, -0.5 * z * z - _LOG_SQRT_2PI - np.log(h), out)
        return out

    def logpdf(self, Q: np.ndarray, chunk: int = 2048) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        n = len(self.data)
        out = np.empty(len(Q))
        step = max(1, min(chunk, 4_000_000 // max(n, 1)))
        for s in range(0, len(Q), step):
            q = Q[s:s + step]
            acc = np.zeros((len(q), n))
            for j in range(self.data.shape[1]):
                acc += self._log_kernel_axis(q[:, j], j)
            out[s:s + step] = logsumexp(acc, axis=1) - np.log(n)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw encoded rows (before activity resolution / integer snapping)."""
        idx = rng.integers(0, len(self.data), size=n)
        X = self.data[idx].copy()
        for j in range(X.shape[1]):
            col = X[:, j]
            act = col >= 0
            if self.is_cat[j]:
                L = self.n_levels[j]
                if L < 2:
                    continue
                lam = self.bandwidth[j]
                move = act & (rng.random(n) < lam)
                if move.any():
                    cur = np.floor(col[move] * (L - 1) + 0.5).astype(int)
                    shift = rng.integers(1, L, size=move.sum())
                    col[move] = ((cur + shift) % L) / (L - 1)
            else:
                col[act] = _truncated_normal(col[act], self.bandwidth[j], rng)
            X[:, j] = col
        return X


def _truncated_normal(mu: np.ndarray, h: float, rng: np.random.Generator, tries: int = 50) -> np.ndarray:
    out = mu.copy()
    todo = np.arange(len(mu))
    for _ in range(tries):
        if not todo.size:
            break
        x = mu[todo] + h * rng.standard_normal(todo.size)
        ok = (x >= 0.0) & (x <= 1.0)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    out[todo] = np.clip(mu[todo], 0.0, 1.0)
    return out
