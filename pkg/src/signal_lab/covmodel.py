"""Known covariate distributions, whitening, and population moment oracles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import DataError, DegenerateSubsetError, MomentError, ShapeError, WhiteningError
from .ustat import LabeledSample

Sampler = Callable[[int, np.random.Generator], np.ndarray]
ResponseLaw = Callable[[np.ndarray, np.random.Generator], np.ndarray]

MARGINALS = ("normal", "centered_exponential")
DEFAULT_MOMENT_N = 10**6
_CHUNK = 20_000


def _draw_marginal(marginal: str, size, rng: np.random.Generator) -> np.ndarray:
    if marginal == "normal":
        return rng.standard_normal(size)
    if marginal == "centered_exponential":
        return rng.standard_exponential(size) - 1.0
    raise ValueError(f"unknown marginal {marginal!r}; expected one of {MARGINALS}")


def inverse_sqrt(covariance) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix via eigendecomposition."""
    vals, vecs = _checked_eigh(covariance)
    return (vecs / np.sqrt(vals)) @ vecs.T


def _checked_eigh(covariance):
    S = np.atleast_2d(np.asarray(covariance, dtype=float))
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {S.shape}")
    scale = max(np.abs(S).max(), np.finfo(float).tiny)
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise WhiteningError("covariance is not symmetric")
    vals, vecs = np.linalg.eigh((S + S.T) / 2)
    if vals[0] <= 1e-12 * vals[-1] or vals[-1] <= 0:
        raise WhiteningError(
            f"covariance is not positive definite (eigenvalues in [{vals[0]:.3g}, {vals[-1]:.3g}])"
        )
    return vals, vecs


@dataclass(frozen=True, eq=False)
class CovariateModel:
    """A fully known covariate distribution.

    Three kinds are supported:

    ``"independent"``
        i.i.d. standardized coordinates with the given ``marginal``. Already
        whitened: zero mean and identity covariance.
    ``"gaussian"``
        multivariate normal with arbitrary ``mean`` and ``covariance``.
    ``"empirical"``
        any distribution reachable through ``sampler(n, rng)`` with known
        ``mean`` and ``covariance``. Fourth-order functionals are obtained by
        Monte-Carlo.

    Instances are immutable; every sampling call takes its own generator.
    """

    kind: str
    p: int
    mean: np.ndarray
    covariance: np.ndarray
    marginal: str | None = None
    sampler: Sampler | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("independent", "gaussian", "empirical"):
            raise ValueError(f"unknown covariate model kind {self.kind!r}")
        if self.p < 1:
            raise ShapeError("p must be positive")
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.shape != (self.p,) or cov.shape != (self.p, self.p):
            raise ShapeError(
                f"mean/covariance shapes {mean.shape}/{cov.shape} do not match p = {self.p}"
            )
        _checked_eigh(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if self.kind == "independent" and self.marginal not in MARGINALS:
            raise ValueError(f"unknown marginal {self.marginal!r}")
        if self.kind == "empirical" and self.sampler is None:
            raise ValueError("empirical covariate models need a sampler")

    @classmethod
    def independent(cls, p: int, marginal: str = "normal") -> "CovariateModel":
        return cls("independent", p, np.zeros(p), np.eye(p), marginal=marginal)

    @classmethod
    def gaussian(cls, mean, covariance) -> "CovariateModel":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        return cls("gaussian", mean.shape[0], mean, covariance)

    @classmethod
    def empirical(cls, sampler: Sampler, mean, covariance) -> "CovariateModel":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        return cls("empirical", mean.shape[0], mean, covariance, sampler=sampler)

    @property
    def is_whitened(self) -> bool:
        return bool(
            np.all(self.mean == 0) and np.array_equal(self.covariance, np.eye(self.p))
        )

    @property
    def independent_after_whitening(self) -> bool:
        """Whether the whitened coordinates are mutually independent."""
        return self.kind in ("independent", "gaussian")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` raw (unwhitened) covariate rows."""
        if self.kind == "independent":
            return _draw_marginal(self.marginal, (n, self.p), rng)
        if self.kind == "gaussian":
            vals, vecs = _checked_eigh(self.covariance)
            root = (vecs * np.sqrt(vals)) @ vecs.T
            return self.mean + rng.standard_normal((n, self.p)) @ root
        X = np.asarray(self.sampler(n, rng), dtype=float)
        if X.shape != (n, self.p):
            raise ShapeError(f"sampler returned shape {X.shape}, expected {(n, self.p)}")
        return X

    def sample_whitened(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "independent":
            return self.sample(n, rng)
        if self.kind == "gaussian":
            return rng.standard_normal((n, self.p))
        return whiten_matrix(self.sample(n, rng), self.mean, self.covariance)


def whiten_matrix(X, mean, covariance) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mean = np.asarray(mean, dtype=float).reshape(-1)
    root = inverse_sqrt(covariance)
    if X.shape[1] != mean.shape[0] or root.shape[0] != mean.shape[0]:
        raise ShapeError(
            f"dimension mismatch: X has {X.shape[1]} columns, mean {mean.shape[0]}, "
            f"covariance {root.shape[0]}"
        )
    return (X - mean) @ root


def whiten(raw: LabeledSample, mean, covariance) -> LabeledSample:
    """Map covariates to ``cov^{-1/2} (x - mean)``; the response is untouched."""
    return LabeledSample(whiten_matrix(raw.X, mean, covariance), raw.Y)


def unwhiten(sample: LabeledSample, mean, covariance) -> LabeledSample:
    vals, vecs = _checked_eigh(covariance)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    mean = np.asarray(mean, dtype=float).reshape(-1)
    if sample.p != mean.shape[0] or root.shape[0] != mean.shape[0]:
        raise ShapeError("dimension mismatch between sample and moments")
    return LabeledSample(sample.X @ root + mean, sample.Y)


# ---------------------------------------------------------------------------
# zero-estimator kernel and its variance


def pair_products(X, subset) -> np.ndarray:
    """Row-wise ``sum_{j < k in subset} X[:, j] * X[:, k]``.

    Uses ``((sum x)^2 - sum x^2) / 2`` rather than enumerating pairs.
    """
    Xs = np.atleast_2d(np.asarray(X, dtype=float))[:, list(subset)]
    s = Xs.sum(axis=1)
    return (s * s - np.einsum("ij,ij->i", Xs, Xs)) / 2


class MomentEstimate(float):
    """A float carrying the standard error of its Monte-Carlo estimate."""

    stderr: float

    def __new__(cls, value: float, stderr: float = 0.0):
        obj = super().__new__(cls, value)
        obj.stderr = float(stderr)
        return obj

    def __repr__(self):
        return f"MomentEstimate({float(self)!r}, stderr={self.stderr!r})"


def _normalize_subset(subset, p: int) -> tuple[int, ...]:
    idx = tuple(sorted({int(j) for j in subset}))
    if idx and (idx[0] < 0 or idx[-1] >= p):
        raise ShapeError(f"subset indices must lie in [0, {p})")
    if len(idx) < 2:
        raise DegenerateSubsetError(
            f"subset {idx} has fewer than two covariates; its pair kernel is identically 0"
        )
    return idx


def var_g(
    model: CovariateModel,
    subset: Iterable[int],
    n_moment: int = DEFAULT_MOMENT_N,
    seed: int = 0,
) -> MomentEstimate:
    """``Var[g_S(X)]`` for the whitened covariates, ``g_S(x) = sum_{j<k in S} x_j x_k``.

    Exact when the whitened coordinates are independent with unit variance,
    where it equals ``|S| (|S| - 1) / 2``. Otherwise it is estimated from
    ``n_moment`` draws and the standard error is attached to the result.
    """
    idx = _normalize_subset(subset, model.p)
    k = len(idx)
    if model.independent_after_whitening:
        return MomentEstimate(k * (k - 1) / 2, 0.0)

    rng = np.random.default_rng(seed)
    g = np.concatenate([
        pair_products(model.sample_whitened(min(_CHUNK, n_moment - start), rng), idx)
        for start in range(0, n_moment, _CHUNK)
    ])
    var = float(np.var(g, ddof=1))
    c = g - g.mean()
    m4 = float(np.mean(c**4))
    se = float(np.sqrt(max(m4 - var**2, 0.0) / len(g)))
    return MomentEstimate(var, se)


# ---------------------------------------------------------------------------
# population moments


@dataclass
class MomentSet:
    """Population quantities used by the variance formulas and oracle coefficients.

    ``theta`` maps a sorted index tuple ``S`` to ``E[W g_S(X)]``; the reserved
    key ``"wy"`` holds ``E[W (Y - alpha)]``.
    """

    beta: np.ndarray
    alpha: float
    sigma_y_sq: float
    A: np.ndarray | None = None
    theta: dict = field(default_factory=dict)
    mu4: float | None = None
    pi: np.ndarray | None = None
    beta_se: np.ndarray | None = None

    @property
    def tau_sq(self) -> float:
        return float(self.beta @ self.beta)

    def theta_for(self, subset) -> np.ndarray:
        key = tuple(sorted(int(j) for j in subset))
        try:
            return self.theta[key]
        except KeyError:
            raise MomentError(f"theta for subset {key} is not available") from None


def population_moments(
    model: CovariateModel,
    response_law: ResponseLaw,
    N: int = DEFAULT_MOMENT_N,
    seed: int = 0,
    subsets: Iterable[Iterable[int]] = (),
) -> MomentSet:
    """Monte-Carlo oracle for the population moments of ``(X, Y)``.

    ``response_law(X, rng)`` draws responses given whitened covariates. The
    returned entries are plain averages over ``N`` joint draws, processed in
    fixed-size chunks so the result depends only on ``seed`` and ``N``.
    """
    if N < 10**4:
        raise MomentError(f"population_moments needs N >= 1e4, got {N}")
    p = model.p
    keys = [_normalize_subset(S, p) for S in subsets]

    sW = np.zeros(p)
    sW2 = np.zeros(p)
    sWW = np.zeros((p, p))
    sWY = np.zeros(p)
    sWY2 = np.zeros(p)
    sWg = {k: np.zeros(p) for k in keys}
    sY = np.zeros(5)

    ss = np.random.SeedSequence(seed)
    n_chunks = -(-N // _CHUNK)
    for c, child in enumerate(ss.spawn(n_chunks)):
        rng = np.random.default_rng(child)
        m = min(_CHUNK, N - c * _CHUNK)
        X = model.sample_whitened(m, rng)
        Y = np.asarray(response_law(X, rng), dtype=float).reshape(-1)
        if Y.shape != (m,):
            raise ShapeError(f"response law returned shape {Y.shape}, expected {(m,)}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("non-finite draw in moment oracle")
        W = X * Y[:, None]
        sW += W.sum(axis=0)
        sW2 += (W * W).sum(axis=0)
        sWW += W.T @ W
        sWY += W.T @ Y
        sWY2 += W.T @ (Y * Y)
        for k in keys:
            sWg[k] += W.T @ pair_products(X, k)
        sY += [m, Y.sum(), (Y**2).sum(), (Y**3).sum(), (Y**4).sum()]

    beta = sW / N
    EWY, EWY2 = sWY / N, sWY2 / N
    _, m1, m2, m3, m4 = sY / N
    alpha = m1
    theta = {k: v / N for k, v in sWg.items()}
    theta["wy"] = EWY - alpha * beta
    return MomentSet(
        beta=beta,
        alpha=float(alpha),
        sigma_y_sq=float(m2 - alpha**2),
        A=sWW / N,
        theta=theta,
        mu4=float(m4 - 4 * alpha * m3 + 6 * alpha**2 * m2 - 3 * alpha**4),
        pi=EWY2 - 2 * alpha * EWY + alpha**2 * beta,
        beta_se=np.sqrt(np.maximum(sW2 / N - beta**2, 0.0) / N),
    )
