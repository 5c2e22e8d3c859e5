"""Simulation studies on the additive non-linear benchmark model.

Responses are generated as

    Y = sum_j gamma_j (X_j + sin X_j) + xi,

with ``gamma_j = gamma_L`` on a distinguished set of ``K`` covariates and
``gamma_S`` elsewhere. By default the known intercept ``sum_j gamma_j E[sin X]``
is subtracted so the response has mean zero; this leaves the slopes and the
signal and noise levels unchanged but the naive estimate is not
shift-invariant in ``Y``, so its variance depends on the choice. The gammas are scaled so that the best-linear-predictor
slopes satisfy ``beta_j**2 = eta * tau_sq / K`` inside the set and
``(1 - eta) * tau_sq / (p - K)`` outside, so ``|beta|**2 = tau_sq``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .boot import algorithm2, get_plugin
from .covmodel import MARGINALS, CovariateModel, MomentSet
from .errors import ConfigError, SignalLabError
from .parallel import ordered_map
from .select import Selector, all_selector, get_selector
from .ustat import LabeledSample, build_w, tau_sq_naive
from .zeroest import algorithm1, t_g_hat

NOISE_LAWS = ("normal", "laplace", "none")


@lru_cache(maxsize=None)
def marginal_constants(marginal: str) -> dict[str, float]:
    """``E[sin X]``, ``E[X sin X]`` and ``E[sin^2 X]`` for a standardized marginal.

    Read off the characteristic function ``phi(s) = E[exp(i s X)]``:
    ``E[sin X] = Im phi(1)``, ``E[X sin X] = Im(-i phi'(1))`` and
    ``E[sin^2 X] = (1 - Re phi(2)) / 2``.
    """
    if marginal == "centered_exponential":
        # X = T - 1 with T ~ Exp(1): phi(s) = exp(-is) / (1 - is)
        phi1 = np.exp(-1j) / (1 - 1j)
        phi2 = np.exp(-2j) / (1 - 2j)
        e_x_exp = -np.exp(-1j) / 2  # E[X exp(iX)] = -i phi'(1)
    elif marginal == "normal":
        phi1 = np.exp(-0.5)
        phi2 = np.exp(-2.0)
        e_x_exp = 1j * np.exp(-0.5)
    else:
        raise ConfigError(f"unknown covariate marginal {marginal!r}; expected one of {MARGINALS}")
    e_sin = float(np.imag(phi1))
    e_xsin = float(np.imag(e_x_exp))
    e_sin2 = float((1 - np.real(phi2)) / 2)
    return {
        "e_sin": e_sin,
        "e_xsin": e_xsin,
        "e_sin2": e_sin2,
        # Var(X + sin X) for unit-variance, mean-zero X
        "var_f": 1 + 2 * e_xsin + e_sin2 - e_sin**2,
    }


@dataclass(frozen=True)
class Scenario:
    n: int
    p: int
    K: int
    tau_sq: float
    eta: float
    reps: int = 100
    base_seed: int = 0
    covariates: str = "centered_exponential"
    noise: str = "normal"
    theta_set: tuple[int, ...] | None = None
    center_response: bool = True

    def __post_init__(self):
        if self.n < 2 or self.p < 1 or self.reps < 1:
            raise ConfigError("n >= 2, p >= 1 and reps >= 1 are required")
        if not 1 <= self.K <= self.p:
            raise ConfigError(f"K must lie in [1, p], got K = {self.K}, p = {self.p}")
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if self.tau_sq < 0:
            raise ConfigError(f"tau_sq must be non-negative, got {self.tau_sq}")
        if self.K == self.p and self.eta < 1 and self.tau_sq > 0:
            raise ConfigError("with K = p all signal lies in the set, so eta must be 1")
        if self.covariates not in MARGINALS:
            raise ConfigError(f"unknown covariates {self.covariates!r}; expected one of {MARGINALS}")
        if self.noise not in NOISE_LAWS:
            raise ConfigError(f"unknown noise law {self.noise!r}; expected one of {NOISE_LAWS}")
        theta = tuple(range(self.K)) if self.theta_set is None else tuple(sorted(set(self.theta_set)))
        if len(theta) != self.K or theta[0] < 0 or theta[-1] >= self.p:
            raise ConfigError(f"theta_set must hold exactly K = {self.K} indices in [0, p)")
        object.__setattr__(self, "theta_set", theta)

    @property
    def gamma_large(self) -> float:
        c = marginal_constants(self.covariates)
        return float(np.sqrt(self.eta * self.tau_sq / (self.K * (1 + c["e_xsin"]) ** 2)))

    @property
    def gamma_small(self) -> float:
        if self.p == self.K:
            return 0.0
        c = marginal_constants(self.covariates)
        return float(
            np.sqrt(self.tau_sq * (1 - self.eta) / ((self.p - self.K) * (1 + c["e_xsin"]) ** 2))
        )

    def gammas(self) -> np.ndarray:
        g = np.full(self.p, self.gamma_small)
        g[list(self.theta_set)] = self.gamma_large
        return g

    def covariate_model(self) -> CovariateModel:
        return CovariateModel.independent(self.p, self.covariates)

    def rep_seed(self, rep: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.base_seed, spawn_key=(rep,))


def response(scenario: Scenario, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw responses for whitened covariates ``X`` under the benchmark model."""
    Y = (X + np.sin(X)) @ scenario.gammas()
    if scenario.center_response:
        Y -= intercept(scenario)
    if scenario.noise == "normal":
        Y += rng.standard_normal(X.shape[0])
    elif scenario.noise == "laplace":
        Y += rng.laplace(scale=np.sqrt(0.5), size=X.shape[0])
    return Y


def intercept(scenario: Scenario) -> float:
    """Population mean of the uncentered response, ``sum_j gamma_j E[sin X]``."""
    return float(scenario.gammas().sum() * marginal_constants(scenario.covariates)["e_sin"])


def gen_dataset(scenario: Scenario, rep_index: int) -> LabeledSample:
    rng = np.random.default_rng(scenario.rep_seed(rep_index))
    X = scenario.covariate_model().sample(scenario.n, rng)
    return LabeledSample(X, response(scenario, X, rng))


def theta_exact(scenario: Scenario, subset: Iterable[int]) -> np.ndarray:
    """``E[W g_S(X)]`` under the benchmark model.

    With independent covariates and an additive response only the pair
    ``{j, m}`` survives in ``E[X_j f(X_m) X_k X_l]``, which leaves
    ``theta_j = sum_{m in S, m != j} beta_m`` for ``j`` in ``S`` and zero
    elsewhere.
    """
    beta = exact_moments(scenario).beta
    idx = sorted({int(j) for j in subset})
    theta = np.zeros(scenario.p)
    theta[idx] = beta[idx].sum() - beta[idx]
    return theta


def exact_moments(scenario: Scenario, subsets: Iterable[Iterable[int]] = ()) -> MomentSet:
    """Closed-form first and second moments plus ``theta`` for ``subsets``."""
    c = marginal_constants(scenario.covariates)
    gam = scenario.gammas()
    noise_var = 0.0 if scenario.noise == "none" else 1.0
    ms = MomentSet(
        beta=gam * (1 + c["e_xsin"]),
        alpha=0.0 if scenario.center_response else intercept(scenario),
        sigma_y_sq=float(gam @ gam * c["var_f"] + noise_var),
    )
    for S in subsets:
        key = tuple(sorted({int(j) for j in S}))
        theta = np.zeros(scenario.p)
        theta[list(key)] = ms.beta[list(key)].sum() - ms.beta[list(key)]
        ms.theta[key] = theta
    return ms


def sigma_sq_true(scenario: Scenario) -> float:
    ms = exact_moments(scenario)
    return ms.sigma_y_sq - ms.tau_sq


# ---------------------------------------------------------------------------
# estimator suites


@dataclass(frozen=True)
class StudyContext:
    scenario: Scenario
    model: CovariateModel
    selector: Selector
    bootstrap_M: int
    seed: int
    plugin: str = "naive"


EstimatorFn = Callable[[LabeledSample, StudyContext], float]


def _naive(sample, ctx):
    return tau_sq_naive(build_w(sample))


def _t_g(sample, ctx):
    return t_g_hat(sample, ctx.model).estimate


def _t_h(sample, ctx):
    return algorithm1(sample, ctx.selector, ctx.model).estimate


def _boot_g(sample, ctx):
    return algorithm2(
        sample, get_plugin(ctx.plugin, ctx.model), all_selector, ctx.model, ctx.bootstrap_M, ctx.seed
    ).estimate


def _boot_h(sample, ctx):
    return algorithm2(
        sample, get_plugin(ctx.plugin, ctx.model), ctx.selector, ctx.model, ctx.bootstrap_M, ctx.seed
    ).estimate


ESTIMATORS: dict[str, EstimatorFn] = {
    "naive": _naive,
    "t_g": _t_g,
    "t_h": _t_h,
    "boot_g": _boot_g,
    "boot_h": _boot_h,
}

SuiteEntry = Union[str, tuple[str, EstimatorFn]]


def _resolve_suite(suite: Sequence[SuiteEntry]) -> list[tuple[str, EstimatorFn]]:
    if not suite:
        raise ConfigError("estimator suite is empty")
    resolved = []
    for entry in suite:
        if isinstance(entry, str):
            if entry not in ESTIMATORS:
                raise ConfigError(
                    f"unknown estimator {entry!r}; available: {sorted(ESTIMATORS)}"
                )
            resolved.append((entry, ESTIMATORS[entry]))
        else:
            resolved.append(tuple(entry))
    return resolved


def simulate_estimates(
    scenario: Scenario,
    suite: Sequence[SuiteEntry] = ("naive", "t_g", "t_h"),
    selector: str | Selector = "gap",
    bootstrap_M: int = 100,
    threads: int | None = None,
    plugin: str = "naive",
) -> np.ndarray:
    """Estimates of shape ``(reps, len(suite))``; all estimators share each dataset."""
    entries = _resolve_suite(suite)
    sel = get_selector(selector) if isinstance(selector, str) else selector
    model = scenario.covariate_model()

    def run_rep(rep: int) -> list[float]:
        sample = gen_dataset(scenario, rep)
        boot_seed = int(scenario.rep_seed(rep).spawn(1)[0].generate_state(1)[0])
        ctx = StudyContext(scenario, model, sel, bootstrap_M, boot_seed, plugin)
        out = []
        for name, fn in entries:
            try:
                out.append(float(fn(sample, ctx)))
            except SignalLabError as exc:
                raise SignalLabError(
                    f"estimator {name!r} failed on replicate {rep} "
                    f"(base_seed={scenario.base_seed}): {exc}"
                ) from exc
        return out

    return np.array(ordered_map(run_rep, range(scenario.reps), threads), dtype=float)


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    bias: float
    se: float
    rmse: float
    pct_change: float
    sigma_rmse_hat: float
    R: int
    eta: float = float("nan")
    tau_sq: float = float("nan")


def summarize(
    estimates: np.ndarray,
    names: Sequence[str],
    truth: float,
    eta: float = float("nan"),
    tau_sq: float = float("nan"),
) -> list[MetricsRow]:
    """Bias, SE, RMSE and the delta-method standard error of the RMSE.

    SE is the ``ddof=1`` standard deviation of the estimates, so
    ``rmse**2 == bias**2 + se**2 * (R - 1) / R``. The RMSE standard error
    propagates the variance of the mean squared error through the square
    root: ``sqrt(var(err**2, ddof=1) / R) / (2 * rmse)``. Percentage changes
    are relative to the first column.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    R = est.shape[0]
    err = est - truth
    sq = err**2
    rmse = np.sqrt(sq.mean(axis=0))
    bias = err.mean(axis=0)
    se = est.std(axis=0, ddof=1) if R > 1 else np.zeros(est.shape[1])
    var_mse = sq.var(axis=0, ddof=1) / R if R > 1 else np.zeros(est.shape[1])
    rows = []
    for k, name in enumerate(names):
        pct = 0.0 if k == 0 or rmse[0] == 0 else 100 * (rmse[k] - rmse[0]) / rmse[0]
        sig = 0.0 if rmse[k] == 0 else float(np.sqrt(var_mse[k]) / (2 * rmse[k]))
        rows.append(
            MetricsRow(name, float(bias[k]), float(se[k]), float(rmse[k]), float(pct), sig, R, eta, tau_sq)
        )
    return rows


def run_study(
    scenario: Scenario,
    suite: Sequence[SuiteEntry] = ("naive", "t_g", "t_h"),
    selector: str | Selector = "gap",
    bootstrap_M: int = 100,
    threads: int | None = None,
    plugin: str = "naive",
) -> list[MetricsRow]:
    names = [e if isinstance(e, str) else e[0] for e in suite]
    est = simulate_estimates(scenario, suite, selector, bootstrap_M, threads, plugin)
    return summarize(est, names, scenario.tau_sq, scenario.eta, scenario.tau_sq)


def with_cell(scenario: Scenario, eta: float, tau_sq: float, cell: int) -> Scenario:
    """A grid cell derived from a template scenario with its own seed stream."""
    seed = int(np.random.SeedSequence([scenario.base_seed, cell]).generate_state(1)[0])
    return replace(scenario, eta=eta, tau_sq=tau_sq, base_seed=seed)
