"""Command-line front end.

    signal-lab estimate --data data.csv [--mu mu.csv --sigma sigma.csv] [--selector gap|all]
    signal-lab simulate --config run.json [--seed S] [--out results.csv]
    signal-lab verify [--quick]

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .boot import PLUGIN_NAMES
from .covmodel import DEFAULT_MOMENT_N, MARGINALS, CovariateModel, whiten
from .errors import (
    ConfigError,
    DataError,
    IoError,
    SelectionError,
    ShapeError,
    SignalLabError,
    WhiteningError,
)
from .select import SELECTORS, get_selector
from .sim import ESTIMATORS, NOISE_LAWS, MetricsRow, Scenario, run_study, with_cell
from .ustat import LabeledSample
from .verify import run_checks
from .zeroest import algorithm1

log = logging.getLogger("signal_lab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 2, 3, 4
RESULT_HEADER = ("eta", "tau_sq", "estimator", "bias", "se", "rmse", "pct_change", "sigma_rmse_hat")


# ---------------------------------------------------------------------------
# configuration


class Grid(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eta: list[float] = Field(min_length=1)
    tau_sq: list[float] = Field(min_length=1)


class RunConfig(BaseModel):
    """Validated run configuration. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal["estimate", "simulate", "verify"] = "simulate"
    grid: Grid | None = None
    n: int = Field(300, ge=2)
    p: int = Field(300, ge=1)
    K: int = Field(6, ge=1)
    reps: int = Field(100, ge=1)
    estimators: list[str] = Field(default_factory=lambda: ["naive", "t_g", "t_h"], min_length=1)
    selector: str = "gap"
    fixed_indices: list[int] | None = None
    bootstrap_M: int = Field(100, ge=2)
    plugin: str = "naive"
    base_seed: int = 0
    moment_N: int = Field(DEFAULT_MOMENT_N, ge=10**4)
    covariates: str = "centered_exponential"
    noise: str = "normal"
    center_response: bool = True
    output: str | None = None

    @field_validator("estimators")
    @classmethod
    def _known_estimators(cls, v):
        for name in v:
            if name not in ESTIMATORS:
                raise ValueError(f"unknown estimator {name!r}; available: {sorted(ESTIMATORS)}")
        return v

    @field_validator("selector")
    @classmethod
    def _known_selector(cls, v):
        if v not in (*SELECTORS, "fixed"):
            raise ValueError(f"unknown selector {v!r}; available: {sorted([*SELECTORS, 'fixed'])}")
        return v

    @field_validator("plugin")
    @classmethod
    def _known_plugin(cls, v):
        if v not in PLUGIN_NAMES:
            raise ValueError(f"unknown plug-in {v!r}; available: {sorted(PLUGIN_NAMES)}")
        return v

    @field_validator("covariates")
    @classmethod
    def _known_marginal(cls, v):
        if v not in MARGINALS:
            raise ValueError(f"unknown covariates {v!r}; available: {list(MARGINALS)}")
        return v

    @field_validator("noise")
    @classmethod
    def _known_noise(cls, v):
        if v not in NOISE_LAWS:
            raise ValueError(f"unknown noise law {v!r}; available: {list(NOISE_LAWS)}")
        return v

    @model_validator(mode="after")
    def _mode_requirements(self):
        if self.mode == "simulate" and self.grid is None:
            raise ValueError("simulate mode needs a grid with eta and tau_sq lists")
        if self.selector == "fixed" and not self.fixed_indices:
            raise ValueError("selector 'fixed' needs fixed_indices")
        return self


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def parse_config(source: str | Path | dict, overrides: dict | None = None) -> RunConfig:
    """Load a JSON config file (or an already-parsed dict) and apply flag overrides."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def template_scenario(cfg: RunConfig) -> Scenario:
    g = cfg.grid
    return Scenario(
        n=cfg.n,
        p=cfg.p,
        K=cfg.K,
        tau_sq=g.tau_sq[0] if g else 1.0,
        eta=g.eta[0] if g else 0.5,
        reps=cfg.reps,
        base_seed=cfg.base_seed,
        covariates=cfg.covariates,
        noise=cfg.noise,
        center_response=cfg.center_response,
    )


# ---------------------------------------------------------------------------
# CSV input and output


def ingest_csv(path: str | Path) -> LabeledSample:
    """Read ``y,x1,...,xp`` rows into a sample. Errors name the offending line."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        p = len(header) - 1
        expected = ["y", *(f"x{j}" for j in range(1, p + 1))]
        if p < 1 or header != expected:
            raise DataError(f"{path}: line 1: header must be y,x1,...,xp")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise DataError(f"{path}: line {line_no}: expected {p + 1} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}: line {line_no}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: line {line_no}: non-finite value")
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(rows)}")
    arr = np.array(rows, dtype=float)
    return LabeledSample(arr[:, 1:], arr[:, 0])


def write_sample_csv(sample: LabeledSample, path: str | Path) -> None:
    """Write a sample so that :func:`ingest_csv` reads back identical floats."""
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", *(f"x{j}" for j in range(1, sample.p + 1))])
            for y, x in zip(sample.Y, sample.X):
                w.writerow([repr(float(y)), *(repr(float(v)) for v in x)])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None


def _read_matrix(path: str | Path, what: str) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError as exc:
        raise DataError(f"cannot read {what} file {path}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"{what} file {path}: {exc}") from None


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def format_results(rows: Iterable[MetricsRow]) -> str:
    lines = [",".join(RESULT_HEADER)]
    for r in rows:
        lines.append(
            ",".join(
                [_fmt(r.eta), _fmt(r.tau_sq), r.estimator]
                + [_fmt(v) for v in (r.bias, r.se, r.rmse, r.pct_change, r.sigma_rmse_hat)]
            )
        )
    return "\n".join(lines) + "\n"


def emit_results(rows: Sequence[MetricsRow], path: str | Path | None) -> None:
    """Render metrics rows as CSV to ``path``, or stdout when ``path`` is None."""
    if not rows:
        raise ValueError("no result rows to emit")
    text = format_results(rows)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands


def run_simulation(cfg: RunConfig, threads: int | None = None) -> list[MetricsRow]:
    """Every (tau_sq, eta) cell in grid order, tau_sq outermost."""
    template = template_scenario(cfg)
    selector = get_selector(cfg.selector, cfg.fixed_indices)
    rows: list[MetricsRow] = []
    cell = 0
    for tau_sq in cfg.grid.tau_sq:
        for eta in cfg.grid.eta:
            scenario = with_cell(template, eta, tau_sq, cell)
            log.info("cell %d: eta=%g tau_sq=%g", cell, eta, tau_sq)
            rows.extend(
                run_study(scenario, cfg.estimators, selector, cfg.bootstrap_M, threads, cfg.plugin)
            )
            cell += 1
    return rows


def estimate_file(data: str, mu: str | None, sigma: str | None, selector: str) -> dict:
    sample = ingest_csv(data)
    if (mu is None) != (sigma is None):
        raise ConfigError("--mu and --sigma must be given together")
    if mu is not None:
        mean = _read_matrix(mu, "mean").reshape(-1)
        cov = _read_matrix(sigma, "covariance")
        sample = whiten(sample, mean, cov)
    else:
        log.info("no --mu/--sigma given; treating covariates as already whitened")
    # variance of the pair kernel is taken as |S|(|S|-1)/2, which holds when
    # the whitened coordinates are independent
    model = CovariateModel.independent(sample.p)
    bundle = algorithm1(sample, get_selector(selector), model)
    out = bundle.to_dict()
    out["whitened_with_supplied_moments"] = mu is not None
    return out


def _cmd_estimate(args) -> int:
    result = estimate_file(args.data, args.mu, args.sigma, args.selector)
    json.dump(result, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = parse_config(args.config, {"base_seed": args.seed, "output": args.out, "mode": "simulate"})
    rows = run_simulation(cfg, args.threads)
    emit_results(rows, cfg.output)
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_checks(quick=args.quick, seed=args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signal-lab", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate signal and noise levels from a CSV file")
    est.add_argument("--data", required=True, help="CSV with header y,x1,...,xp")
    est.add_argument("--mu", help="covariate mean, comma-separated")
    est.add_argument("--sigma", help="covariate covariance, p comma-separated rows")
    est.add_argument("--selector", choices=sorted(SELECTORS), default="gap")
    est.set_defaults(func=_cmd_estimate)

    sim = sub.add_parser("simulate", help="run a simulation grid and write metrics CSV")
    sim.add_argument("--config", required=True, help="JSON run configuration")
    sim.add_argument("--seed", type=int, help="override base_seed")
    sim.add_argument("--out", help="output CSV (default: stdout)")
    sim.add_argument("--threads", type=int, help="replicate threads (default: SIGNAL_LAB_THREADS or CPU count)")
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify", help="run the built-in property checks")
    ver.add_argument("--quick", action="store_true", help="smaller instance counts")
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, SelectionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError, WhiteningError, IoError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SignalLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
