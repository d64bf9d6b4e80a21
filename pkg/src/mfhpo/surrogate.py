"""Surrogate learners used to rank candidate configurations.

All models share one convention: ``predict(X, r)`` returns a score per encoded
row of ``X`` (queried at fidelity ``r``) where lower means predicted-better.
"""
from __future__ import annotations

import math

import numpy as np

from .archive import Archive
from .kde import ProductKDE
from .param_space import ParamSpace

KINDS = ("KNN1", "KKNN7", "TPE", "RF")

GOOD_FRACTION = 0.15


class InductionError(RuntimeError):
    """The archive cannot support the requested surrogate."""


def gower_distances(A: np.ndarray, B: np.ndarray, is_cat: np.ndarray) -> np.ndarray:
    """Mean per-axis distance between encoded rows of ``A`` and ``B``.

    Numeric axes contribute ``|a - b|``, categorical axes a 0/1 mismatch. An
    inactive entry (negative code) is at distance 1 from any active entry and
    at distance 0 from another inactive one.
    """
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    D = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        a = A[:, j][:, None]
        b = B[:, j][None, :]
        if is_cat[j]:
            dj = (np.abs(a - b) > 1e-9).astype(float)
        else:
            dj = np.abs(a - b)
        ia, ib = a < 0, b < 0
        dj = np.where(ia | ib, np.where(ia & ib, 0.0, 1.0), dj)
        D += dj
    return D / A.shape[1]


def samworth_weights(k: int, d: int) -> np.ndarray:
    """Optimal weighted-nearest-neighbour weights for ``k`` neighbours in ``d`` dims.

    Negative weights are clamped to zero and the vector renormalized.
    """
    if k < 1 or d < 1:
        raise ValueError("need k >= 1 and d >= 1")
    i = np.arange(1, k + 1, dtype=float)
    p = 1.0 + 2.0 / d
    w = (1.0 / k) * (1.0 + d / 2.0 - d / (2.0 * k ** (2.0 / d)) * (i ** p - (i - 1) ** p))
    w = np.maximum(w, 0.0)
    return w / w.sum()


def nearest_indices(D: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest columns per row, ties to the lower index."""
    m, n = D.shape
    if k == 1:
        return np.argmin(D, axis=1)[:, None]
    kth = np.partition(D, k - 1, axis=1)[:, k - 1][:, None]
    less = D < kth
    need = k - less.sum(axis=1)
    eq = D == kth
    sel = less | (eq & (np.cumsum(eq, axis=1) <= need[:, None]))
    idx = np.nonzero(sel)[1].reshape(m, k)
    dsel = np.take_along_axis(D, idx, axis=1)
    order = np.argsort(dsel, axis=1, kind="stable")
    return np.take_along_axis(idx, order, axis=1)


class SurrogateModel:
    """Base class; subclasses fill :meth:`_score`."""

    kind = ""

    def __init__(self, space: ParamSpace, filter_mb: bool, trained_at: int):
        self.space = space
        self.filter_mb = filter_mb
        self.trained_at = trained_at

    def _features(self, X: np.ndarray, r: float) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.filter_mb:
            return X
        return np.hstack([X, np.full((len(X), 1), float(r))])

    def predict(self, X: np.ndarray, r: float = 1.0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(X) == 0:
            return np.empty(0)
        return self._score(self._features(X, r))

    def _score(self, F: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class NearestNeighborModel(SurrogateModel):
    def __init__(self, space, filter_mb, trained_at, F, y, k, is_cat):
        super().__init__(space, filter_mb, trained_at)
        self.F = F
        self.y = y
        self.k = min(k, len(y))
        self.is_cat = is_cat
        self.weights = samworth_weights(self.k, F.shape[1])
        self.kind = "KNN1" if k == 1 else f"KKNN{k}"

    def _score(self, F: np.ndarray) -> np.ndarray:
        n = len(self.y)
        out = np.empty(len(F))
        step = max(1, 2_000_000 // max(n, 1))
        for s in range(0, len(F), step):
            D = gower_distances(F[s:s + step], self.F, self.is_cat)
            idx = nearest_indices(D, self.k)
            out[s:s + step] = self.y[idx] @ self.weights
        return out


class TPEModel(SurrogateModel):
    """Negated log density ratio of good-point and bad-point KDEs.

    Ranking-equivalent to the negated density ratio itself but free of
    overflow. Fidelity is not a KDE feature, so the query fidelity is ignored.
    """

    kind = "TPE"

    def __init__(self, space, filter_mb, trained_at, good: np.ndarray, bad: np.ndarray):
        super().__init__(space, filter_mb, trained_at)
        is_cat = space.is_categorical
        n_levels = np.array([p.n_levels for p in space.params])
        self.good_kde = ProductKDE(good, is_cat, n_levels)
        self.bad_kde = ProductKDE(bad, is_cat, n_levels)

    def predict(self, X: np.ndarray, r: float = 1.0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(X) == 0:
            return np.empty(0)
        return -(self.good_kde.logpdf(X) - self.bad_kde.logpdf(X))


class ForestModel(SurrogateModel):
    kind = "RF"

    def __init__(self, space, filter_mb, trained_at, F, y, seed):
        from sklearn.ensemble import RandomForestRegressor

        super().__init__(space, filter_mb, trained_at)
        self.forest = RandomForestRegressor(
            n_estimators=100,
            max_depth=None,
            max_features=max(1, math.ceil(F.shape[1] / 3)),
            bootstrap=True,
            random_state=seed,
            n_jobs=1,
        ).fit(F, y)

    def _score(self, F: np.ndarray) -> np.ndarray:
        return self.forest.predict(F)

    def predict_with_spread(self, X: np.ndarray, r: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Mean and standard deviation across trees."""
        F = self._features(X, r)
        per_tree = np.stack([t.predict(F) for t in self.forest.estimators_])
        return per_tree.mean(axis=0), per_tree.std(axis=0)


def training_data(archive: Archive, space: ParamSpace, filter_mb: bool) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and targets, honoring the ``filter_mb`` convention."""
    X = archive.encoded(space)
    y = archive.costs()
    if filter_mb:
        idx = np.array(archive.highest_fidelity_indices(), dtype=int)
        return X[idx], y[idx]
    return np.hstack([X, archive.fidelities()[:, None]]), y


def induce(
    kind: str,
    archive: Archive,
    space: ParamSpace,
    filter_mb: bool = True,
    seed: int | None = 0,
    good_fraction: float = GOOD_FRACTION,
    min_good: int | None = None,
) -> SurrogateModel:
    """Fit a surrogate of the given kind on the archive."""
    if kind not in KINDS:
        raise ValueError(f"unknown surrogate kind {kind!r}")
    if len(archive) == 0:
        raise InductionError("empty archive")
    n = len(archive)
    if kind == "TPE":
        if archive.n_distinct() < 2:
            raise InductionError("TPE needs at least two distinct configs")
        if min_good is None:
            min_good = space.dim + 1
        n_distinct = archive.n_distinct()
        good_idx, bad_idx = archive.split_indices(good_fraction, min_good, max_good=n_distinct - 1)
        X = archive.encoded(space)
        return TPEModel(space, filter_mb, n, X[good_idx], X[bad_idx])
    F, y = training_data(archive, space, filter_mb)
    if kind == "RF":
        return ForestModel(space, filter_mb, n, F, y, seed)
    is_cat = np.append(space.is_categorical, False) if not filter_mb else space.is_categorical
    k = 1 if kind == "KNN1" else 7
    return NearestNeighborModel(space, filter_mb, n, F, y, k, is_cat)
