"""Self-checks run by ``signal-lab verify``.

Each check compares a fast path against a slow reference (pair enumeration,
explicit loops) or tests a distributional property with a generous
Monte-Carlo band. Failures are collected, not raised, so one run reports
everything.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .covmodel import CovariateModel, pair_products, unwhiten, var_g, whiten
from .select import gap_select
from .ustat import LabeledSample, beta_sq_hat, build_w, naive_estimate, tau_sq_naive
from .zeroest import c_hat, zero_stat


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-300)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def _random_instance(rng: np.random.Generator):
    n = int(rng.integers(2, 31))
    p = int(rng.integers(2, 9))
    X = rng.standard_normal((n, p))
    Y = rng.standard_normal(n) + X[:, 0]
    return LabeledSample(X, Y)


def brute_tau(sample: LabeledSample) -> float:
    W = sample.X * sample.Y[:, None]
    n = sample.n
    total = sum(W[a] @ W[b] for a, b in itertools.combinations(range(n), 2))
    return total / (n * (n - 1) / 2)


def brute_beta_sq(sample: LabeledSample) -> np.ndarray:
    W = sample.X * sample.Y[:, None]
    n = sample.n
    total = sum(W[a] * W[b] for a, b in itertools.combinations(range(n), 2))
    return total / (n * (n - 1) / 2)


def brute_g(X: np.ndarray, subset) -> np.ndarray:
    return np.array([sum(x[j] * x[k] for j, k in itertools.combinations(sorted(subset), 2)) for x in X])


def brute_c_numerator(sample: LabeledSample, g: np.ndarray) -> float:
    W = sample.X * sample.Y[:, None]
    n = sample.n
    total = sum(W[a] @ W[b] * g[b] for a, b in itertools.permutations(range(n), 2))
    return total / (n * (n - 1) / 2)


def check_brute_force(instances: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        s = _random_instance(rng)
        w = build_w(s)
        k = int(rng.integers(2, s.p + 1))
        S = tuple(sorted(rng.choice(s.p, size=k, replace=False).tolist()))
        g = brute_g(s.X, S)
        zs = zero_stat(s, S, 1.0)
        worst = max(
            worst,
            _rel(tau_sq_naive(w), brute_tau(s)),
            _rel(beta_sq_hat(w), brute_beta_sq(s)),
            _rel(zs.z_values, g),
            _rel(c_hat(w, zs).value, brute_c_numerator(s, g)),
        )
    return CheckResult("brute_force", worst <= 1e-10, f"{instances} instances, max rel err {worst:.2e}")


def check_dual_form(instances: int, seed: int) -> CheckResult:
    """Moment-difference form of the per-column estimate equals the pair form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        s = _random_instance(rng)
        W = s.X * s.Y[:, None]
        n = s.n
        moment_form = (W**2).sum(0) / n - ((W - W.mean(0)) ** 2).sum(0) / (n - 1)
        worst = max(worst, _rel(moment_form, beta_sq_hat(build_w(s))))
    return CheckResult("dual_form", worst <= 1e-10, f"max rel err {worst:.2e}")


def check_bundle(instances: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(instances):
        b = naive_estimate(_random_instance(rng))
        ok &= b.sigma_sq_hat == b.sigma_y_sq_hat - b.tau_sq_hat
        ok &= _rel(b.beta_sq_hat.sum(), b.tau_sq_hat) <= 1e-10
    return CheckResult("bundle_identities", bool(ok), "sigma = sigma_y - tau; sum beta_sq = tau")


def check_whitening(instances: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        p = int(rng.integers(1, 6))
        B = rng.standard_normal((p, p))
        cov = B @ B.T + p * np.eye(p)
        mu = rng.standard_normal(p)
        s = LabeledSample(rng.standard_normal((6, p)), rng.standard_normal(6))
        back = unwhiten(whiten(s, mu, cov), mu, cov)
        worst = max(worst, _rel(back.X, s.X))
    return CheckResult("whiten_roundtrip", worst <= 1e-10, f"max rel err {worst:.2e}")


def check_zero_mean(draws: int, seed: int) -> CheckResult:
    model = CovariateModel.independent(5, "centered_exponential")
    S = (0, 1, 3, 4)
    g = pair_products(model.sample(draws, np.random.default_rng(seed)), S)
    band = 4 * np.sqrt(float(var_g(model, S)) / draws)
    return CheckResult("zero_mean", abs(g.mean()) <= band, f"mean {g.mean():.4f}, band {band:.4f}")


def check_var_g(draws: int, seed: int) -> CheckResult:
    model = CovariateModel.independent(4, "centered_exponential")
    S = (0, 1, 2, 3)
    g = pair_products(model.sample(draws, np.random.default_rng(seed)), S)
    v = g.var(ddof=1)
    c = g - g.mean()
    se = np.sqrt(max(np.mean(c**4) - v**2, 0.0) / draws)
    exact = float(var_g(model, S))
    return CheckResult("var_g_closed_form", abs(v - exact) <= 4 * se, f"MC {v:.4f} vs {exact}, se {se:.4f}")


def check_gap_equivariance(instances: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(instances):
        b = rng.exponential(size=int(rng.integers(2, 20)))
        base = set(gap_select(b).indices)
        perm = rng.permutation(len(b))
        ok &= {int(perm[i]) for i in gap_select(b[perm]).indices} == base
        ok &= set(gap_select(b * rng.uniform(0.1, 10)).indices) == base
    return CheckResult("gap_equivariance", bool(ok), "permutation and scale")


def run_checks(quick: bool = False, seed: int = 0) -> list[CheckResult]:
    k = 20 if quick else 100
    draws = 20_000 if quick else 100_000
    checks: list[Callable[[], CheckResult]] = [
        lambda: check_brute_force(k, seed),
        lambda: check_dual_form(k, seed + 1),
        lambda: check_bundle(k, seed + 2),
        lambda: check_whitening(k, seed + 3),
        lambda: check_zero_mean(draws, seed + 4),
        lambda: check_var_g(draws, seed + 5),
        lambda: check_gap_equivariance(k, seed + 6),
    ]
    return [c() for c in checks]
