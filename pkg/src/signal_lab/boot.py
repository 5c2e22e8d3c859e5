"""Bootstrap approximation of the zero-estimator coefficient for any plug-in.

The subset is chosen once on the original sample. Each bootstrap replicate
redraws ``n`` rows with replacement and re-evaluates the plug-in estimate
and the zero-estimator on the same subset. The coefficient is the empirical
covariance of those pairs divided by the known ``Var(Z) = Var[h(X)] / n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable
import logging

import numpy as np

from .covmodel import CovariateModel, pair_products, var_g
from .errors import SignalLabError, ConfigError
from .parallel import ordered_map
from .select import Selector, gap_selector
from .ustat import LabeledSample, build_w, tau_sq_naive
from .zeroest import NO_ZERO_ESTIMATOR, algorithm1, t_g_hat

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PluginEstimator:
    """A deterministic map from a sample to an estimate of the signal level."""

    name: str
    eval: Callable[[LabeledSample], float]


@dataclass
class BootstrapResult:
    estimate: float
    c_tilde: float
    M: int
    cov_hat: float
    subset: tuple[int, ...]
    base_estimate: float
    z_bar: float
    failed: tuple[int, ...] = ()
    flags: tuple[str, ...] = ()
    replicates: np.ndarray | None = field(default=None, repr=False)


def naive_plugin() -> PluginEstimator:
    return PluginEstimator("naive", lambda s: tau_sq_naive(build_w(s)))


def plugin_registry(model: CovariateModel) -> dict[str, PluginEstimator]:
    return {
        "naive": naive_plugin(),
        "naive_tg": PluginEstimator("naive_tg", lambda s: t_g_hat(s, model).estimate),
        "naive_th": PluginEstimator(
            "naive_th", lambda s: algorithm1(s, gap_selector, model).estimate
        ),
    }


PLUGIN_NAMES = ("naive", "naive_tg", "naive_th")


def get_plugin(name: str, model: CovariateModel) -> PluginEstimator:
    registry = plugin_registry(model)
    if name not in registry:
        raise ConfigError(f"unknown plug-in estimator {name!r}; available: {sorted(registry)}")
    return registry[name]


def _replicate_rng(seed: int, m: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(m,)))


def algorithm2(
    sample: LabeledSample,
    estimator: PluginEstimator,
    selector: Selector,
    model: CovariateModel,
    M: int = 100,
    seed: int = 0,
    threads: int | None = 1,
) -> BootstrapResult:
    if M < 2:
        raise ValueError(f"M must be at least 2, got {M}")
    n = sample.n
    subset = selector(sample).indices
    base = float(estimator.eval(sample))

    if len(subset) < 2:
        return BootstrapResult(base, 0.0, M, 0.0, subset, base, 0.0, flags=(NO_ZERO_ESTIMATOR,))

    h = pair_products(sample.X, subset)
    z_bar = float(h.mean())
    var_z = float(var_g(model, subset)) / n

    def replicate(m: int):
        rows = _replicate_rng(seed, m).integers(0, n, size=n)
        try:
            t = float(estimator.eval(sample.take(rows)))
        except (SignalLabError, ArithmeticError, ValueError) as exc:
            log.debug("bootstrap replicate %d failed: %s", m, exc)
            return None
        if not np.isfinite(t):
            return None
        return t, float(h[rows].mean())

    results = ordered_map(replicate, range(M), threads)
    failed = tuple(m for m, r in enumerate(results) if r is None)
    if len(failed) > M / 2:
        raise SignalLabError(
            f"plug-in {estimator.name!r} failed on {len(failed)} of {M} bootstrap replicates"
        )
    pairs = np.array([r for r in results if r is not None])
    t_star, z_star = pairs[:, 0], pairs[:, 1]
    # shift by the first replicate before centering so a constant plug-in
    # gives an exactly zero covariance
    dt = t_star - t_star[0]
    dz = z_star - z_star[0]
    cov_hat = float(np.sum((dt - dt.mean()) * (dz - dz.mean())) / (len(dt) - 1))
    c_tilde = cov_hat / var_z
    return BootstrapResult(
        estimate=base - c_tilde * z_bar,
        c_tilde=c_tilde,
        M=M,
        cov_hat=cov_hat,
        subset=subset,
        base_estimate=base,
        z_bar=z_bar,
        failed=failed,
        replicates=pairs,
    )
