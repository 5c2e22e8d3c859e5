"""Zero-estimator variance reduction for the naive signal estimate.

For a covariate subset ``S`` the kernel ``g_S(x) = sum_{j<k in S} x_j x_k``
has mean zero under whitened covariates, so ``Z = mean_i g_S(X_i)`` is a
zero-estimator and ``tau_sq_hat - c * Z`` stays unbiased for any fixed
``c``. The variance-minimizing coefficient is ``2 beta' theta_S / Var[g_S]``
with ``theta_S = E[W g_S(X)]``; :func:`c_hat` estimates it without bias from
the same sample.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .covmodel import CovariateModel, MomentSet, pair_products, var_g as _model_var_g
from .errors import DegenerateSubsetError, MomentError, SampleSizeError
from .select import Selection, Selector, select_all
from .ustat import (
    EstimateBundle,
    LabeledSample,
    WMatrix,
    build_w,
    naive_estimate,
)

NO_ZERO_ESTIMATOR = "NoZeroEstimator"


@dataclass(frozen=True)
class ZeroStat:
    subset: tuple[int, ...]
    z_values: np.ndarray
    z_bar: float
    var_g: float


@dataclass(frozen=True)
class Coefficient:
    value: float
    kind: str  # "oracle", "ustat" or "bootstrap"

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise MomentError(f"{self.kind} coefficient is not finite: {self.value}")

    def __float__(self):
        return float(self.value)


def zero_stat(sample: LabeledSample, subset: Iterable[int], var_g: float) -> ZeroStat:
    idx = tuple(sorted({int(j) for j in subset}))
    if len(idx) < 2:
        raise DegenerateSubsetError(f"subset {idx} has fewer than two covariates")
    if not var_g > 0:
        raise MomentError(f"Var[g] must be positive, got {var_g}")
    z = pair_products(sample.X, idx)
    return ZeroStat(idx, z, float(z.mean()), float(var_g))


def c_hat(w: WMatrix, zstat: ZeroStat) -> Coefficient:
    """U-statistic estimate of the optimal coefficient.

    The numerator averages ``W_i1' W_i2 g(X_i2)`` over ordered pairs
    ``i1 != i2`` with weight ``2 / (n (n - 1))``; it is computed as
    ``sum_j [S_j (W[:, j] @ g) - (W[:, j]**2) @ g]``.
    """
    n = w.n
    if n < 2:
        raise SampleSizeError(f"c_hat needs n >= 2, got n = {n}")
    g = zstat.z_values
    Wg = w.W.T @ g
    W2g = (w.W * w.W).T @ g
    numerator = float(w.column_sums @ Wg - W2g.sum())
    return Coefficient(2.0 * numerator / (n * (n - 1)) / zstat.var_g, "ustat")


def c_oracle(moments: MomentSet, subset: Iterable[int], var_g: float) -> Coefficient:
    if not var_g > 0:
        raise MomentError(f"Var[g] must be positive, got {var_g}")
    theta = moments.theta_for(subset)
    return Coefficient(2.0 * float(np.asarray(moments.beta) @ theta) / var_g, "oracle")


def improve(tau_naive: float, c, zstat: ZeroStat) -> float:
    return tau_naive - float(c) * zstat.z_bar


def _var_g_for(model: CovariateModel, subset) -> float:
    return float(_model_var_g(model, subset))


def algorithm1(
    sample: LabeledSample,
    selector: Selector,
    model: CovariateModel,
    w: WMatrix | None = None,
) -> EstimateBundle:
    """Naive estimate corrected by the zero-estimator over a selected subset.

    ``selector`` is applied to the sample to choose ``S``; the returned bundle
    carries ``Z_S``, the estimated coefficient and the improved value. If
    fewer than two covariates are selected there is no zero-estimator and
    the naive value is returned with the ``NoZeroEstimator`` flag.
    """
    if w is None:
        w = build_w(sample)
    bundle = naive_estimate(sample, w)
    selection = selector(sample)
    bundle.method = f"zero_{selection.method}"
    bundle.subset = selection.indices
    bundle.extras["selection"] = selection

    if len(selection.indices) < 2:
        bundle.improved = bundle.tau_sq_hat
        bundle.coefficient = 0.0
        bundle.z_bar = 0.0
        bundle.flags = (*bundle.flags, NO_ZERO_ESTIMATOR)
        return bundle

    zstat = zero_stat(sample, selection.indices, _var_g_for(model, selection.indices))
    c = c_hat(w, zstat)
    bundle.z_bar = zstat.z_bar
    bundle.coefficient = c.value
    bundle.improved = improve(bundle.tau_sq_hat, c, zstat)
    bundle.extras["zstat"] = zstat
    return bundle


def t_g_hat(sample: LabeledSample, model: CovariateModel, w: WMatrix | None = None) -> EstimateBundle:
    """Zero-estimator correction using every covariate."""
    return algorithm1(sample, lambda s: select_all(s.p), model, w)


def oracle_estimate(
    sample: LabeledSample,
    subset: Iterable[int],
    moments: MomentSet,
    model: CovariateModel,
    w: WMatrix | None = None,
) -> float:
    """``tau_sq_hat - c* Z_S`` with the population coefficient for ``subset``."""
    if w is None:
        w = build_w(sample)
    tau = naive_estimate(sample, w).tau_sq_hat
    subset = tuple(subset)
    if len(subset) < 2:
        return tau
    vg = _var_g_for(model, subset)
    zstat = zero_stat(sample, subset, vg)
    return improve(tau, c_oracle(moments, subset, vg), zstat)


def selection_agreement(selections: Iterable[Selection]) -> float:
    """Fraction of replicates whose selection equals the most common one.

    A replicate-level stability diagnostic; it does not certify stability.
    """
    counts: dict[tuple[int, ...], int] = {}
    total = 0
    for s in selections:
        counts[s.indices] = counts.get(s.indices, 0) + 1
        total += 1
    return max(counts.values()) / total if total else float("nan")
