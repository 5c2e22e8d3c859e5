"""Naive U-statistic estimators of the signal and noise levels.

All estimators assume the covariates are whitened, i.e. ``E[X] = 0`` and
``Var(X) = I``. With ``W_ij = X_ij * Y_i`` the squared slope of covariate
``j`` is estimated by the order-2 U-statistic

    beta_sq_hat[j] = (S_j**2 - Q_j) / (n * (n - 1)),

where ``S_j`` and ``Q_j`` are the column sum and column sum of squares of
``W``. The signal estimate is the sum over columns, and the noise estimate
is the unbiased sample variance of ``Y`` minus the signal estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any
import warnings

import numpy as np

from .errors import MomentError, SampleSizeError, ShapeError, DataError

if TYPE_CHECKING:
    from .covmodel import MomentSet

# above this many entries, column sums go through numpy's pairwise reduction
_PAIRWISE_THRESHOLD = 10**6


@dataclass(frozen=True)
class LabeledSample:
    """An ``n x p`` covariate matrix with its response vector."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2:
            raise ShapeError(f"X must be 2-dimensional, got shape {X.shape}")
        if Y.ndim != 1 or Y.shape[0] != X.shape[0]:
            raise ShapeError(
                f"Y must be a vector of length {X.shape[0]}, got shape {Y.shape}"
            )
        if X.shape[1] < 1:
            raise ShapeError("at least one covariate is required")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("sample contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def take(self, rows) -> "LabeledSample":
        return LabeledSample(self.X[rows], self.Y[rows])


def _column_sums(a: np.ndarray) -> np.ndarray:
    if a.size > _PAIRWISE_THRESHOLD:
        # reducing along the contiguous axis uses pairwise summation
        return np.ascontiguousarray(a.T).sum(axis=1)
    return a.sum(axis=0)


@dataclass(frozen=True)
class WMatrix:
    W: np.ndarray
    column_sums: np.ndarray
    column_sq_sums: np.ndarray

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]


def build_w(sample: LabeledSample) -> WMatrix:
    """Form ``W = X * Y[:, None]`` and cache its column sums."""
    W = sample.X * sample.Y[:, None]
    W.setflags(write=False)
    return WMatrix(W, _column_sums(W), _column_sums(W * W))


def _check_pairs(n: int) -> None:
    if n < 2:
        raise SampleSizeError(f"pairwise U-statistics need n >= 2, got n = {n}")


def beta_sq_hat(w: WMatrix) -> np.ndarray:
    """Unbiased estimates of the squared best-linear-predictor slopes.

    Equal to the average of ``W[i1, j] * W[i2, j]`` over all unordered pairs
    ``i1 < i2``, computed in O(n p) from the cached column sums.
    """
    n = w.n
    _check_pairs(n)
    return (w.column_sums**2 - w.column_sq_sums) / (n * (n - 1))


def tau_sq_naive(w: WMatrix) -> float:
    """The naive signal estimate, ``sum_j beta_sq_hat[j]``."""
    n = w.n
    _check_pairs(n)
    S, Q = w.column_sums, w.column_sq_sums
    return float((S @ S - Q.sum()) / (n * (n - 1)))


def sigma_y_sq_hat(Y) -> float:
    Y = np.asarray(Y, dtype=float)
    _check_pairs(Y.shape[0])
    return float(np.var(Y, ddof=1))


def sigma_sq_hat(sigma_y_sq: float, tau_sq: float) -> float:
    """Noise estimate. Not truncated at zero, so it can be negative."""
    return sigma_y_sq - tau_sq


@dataclass
class EstimateBundle:
    """Result of one estimation run on a single sample.

    ``sigma_sq_hat`` is always ``sigma_y_sq_hat - tau_sq_hat``; the
    zero-estimator fields stay ``None`` for the plain naive estimate.
    """

    tau_sq_hat: float
    sigma_y_sq_hat: float
    beta_sq_hat: np.ndarray
    method: str = "naive"
    z_bar: float | None = None
    coefficient: float | None = None
    subset: tuple[int, ...] | None = None
    improved: float | None = None
    flags: tuple[str, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def sigma_sq_hat(self) -> float:
        return sigma_sq_hat(self.sigma_y_sq_hat, self.tau_sq_hat)

    @property
    def sigma_sq_hat_clamped(self) -> float:
        return max(self.sigma_sq_hat, 0.0)

    @property
    def estimate(self) -> float:
        """The improved signal estimate when present, else the naive one."""
        return self.tau_sq_hat if self.improved is None else self.improved

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tau_sq_hat": self.tau_sq_hat,
            "sigma_y_sq_hat": self.sigma_y_sq_hat,
            "sigma_sq_hat": self.sigma_sq_hat,
            "estimate": self.estimate,
            "z_bar": self.z_bar,
            "coefficient": self.coefficient,
            "subset": None if self.subset is None else list(self.subset),
            "flags": list(self.flags),
        }


def naive_estimate(sample: LabeledSample, w: WMatrix | None = None) -> EstimateBundle:
    if w is None:
        w = build_w(sample)
    b2 = beta_sq_hat(w)
    return EstimateBundle(
        tau_sq_hat=tau_sq_naive(w),
        sigma_y_sq_hat=sigma_y_sq_hat(sample.Y),
        beta_sq_hat=b2,
    )


# ---------------------------------------------------------------------------
# exact finite-sample variances


@dataclass(frozen=True)
class NaiveVariance:
    variance: float
    zeta1: float
    zeta2: float


def var_tau_from_zetas(zeta1: float, zeta2: float, n: int) -> float:
    _check_pairs(n)
    return 4 * (n - 2) / (n * (n - 1)) * zeta1 + 2 / (n * (n - 1)) * zeta2


def var_tau_naive(moments: "MomentSet", n: int) -> NaiveVariance:
    """Exact variance of the naive signal estimate at sample size ``n``.

    Uses ``zeta1 = b'Ab - |b|^4`` and ``zeta2 = |A|_F^2 - |b|^4`` with
    ``A = E[W W']``::

        Var = 4 (n - 2) / (n (n - 1)) * zeta1 + 2 / (n (n - 1)) * zeta2
    """
    if getattr(moments, "beta", None) is None or getattr(moments, "A", None) is None:
        raise MomentError("var_tau_naive needs moments.beta and moments.A")
    beta = np.asarray(moments.beta, dtype=float)
    A = np.asarray(moments.A, dtype=float)
    b4 = float(beta @ beta) ** 2
    zeta1 = float(beta @ A @ beta) - b4
    zeta2 = float(np.sum(A * A)) - b4
    var = var_tau_from_zetas(zeta1, zeta2, n)
    if var < 0:
        warnings.warn(
            f"negative variance {var:.3g}: moment inputs are inconsistent",
            RuntimeWarning,
            stacklevel=2,
        )
    return NaiveVariance(var, zeta1, zeta2)


@dataclass(frozen=True)
class NoiseVariance:
    variance: float
    var_sigma_y_sq: float
    var_tau_sq: float
    cross_pi: float
    cross_wy: float


def var_sigma_hat(moments: "MomentSet", n: int) -> NoiseVariance:
    """Exact variance of the noise estimate at sample size ``n``.

    The result is ``var_sigma_y_sq + var_tau_sq - cross_pi + cross_wy`` with

    * ``var_sigma_y_sq = mu4 / n - (n - 3) / (n (n - 1)) * sigma_y**4``
    * ``cross_pi = 4 / n * (pi'beta - tau^2 sigma_y^2)``
    * ``cross_wy = 4 / (n (n - 1)) * sum_j E[W_j (Y - alpha)]**2``

    The vector ``E[W_j (Y - alpha)]`` is read from ``moments.theta["wy"]``.
    """
    if n < 4:
        raise SampleSizeError(f"var_sigma_hat needs n >= 4, got n = {n}")
    missing = [
        name
        for name in ("beta", "A", "mu4", "pi", "sigma_y_sq")
        if getattr(moments, name, None) is None
    ]
    theta = getattr(moments, "theta", None) or {}
    if "wy" not in theta:
        missing.append('theta["wy"]')
    if missing:
        raise MomentError(f"var_sigma_hat is missing moments: {', '.join(missing)}")

    beta = np.asarray(moments.beta, dtype=float)
    pi = np.asarray(moments.pi, dtype=float)
    wy = np.asarray(theta["wy"], dtype=float)
    s2 = float(moments.sigma_y_sq)
    tau_sq = float(beta @ beta)

    v_y = moments.mu4 / n - (n - 3) / (n * (n - 1)) * s2**2
    v_tau = var_tau_naive(moments, n).variance
    cross_pi = 4 / n * (float(pi @ beta) - tau_sq * s2)
    cross_wy = 4 / (n * (n - 1)) * float(wy @ wy)
    return NoiseVariance(v_y + v_tau - cross_pi + cross_wy, v_y, v_tau, cross_pi, cross_wy)
