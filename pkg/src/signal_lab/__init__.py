"""Signal and noise level estimation for high-dimensional regression with known covariates."""
from .covmodel import CovariateModel, MomentSet, population_moments, var_g, whiten
from .errors import (
    ConfigError,
    DataError,
    DegenerateSubsetError,
    IoError,
    MomentError,
    SampleSizeError,
    SelectionError,
    ShapeError,
    SignalLabError,
    VerificationError,
    WhiteningError,
)
from .ustat import (
    EstimateBundle,
    LabeledSample,
    beta_sq_hat,
    build_w,
    naive_estimate,
    sigma_sq_hat,
    sigma_y_sq_hat,
    tau_sq_naive,
    var_sigma_hat,
    var_tau_naive,
)
from .select import Selection, gap_select, select_all, select_fixed
from .zeroest import algorithm1, c_hat, c_oracle, improve, t_g_hat, zero_stat
from .boot import BootstrapResult, PluginEstimator, algorithm2
from .sim import MetricsRow, Scenario, gen_dataset, run_study

__version__ = "0.1.0"

__all__ = [
    "BootstrapResult",
    "ConfigError",
    "CovariateModel",
    "DataError",
    "DegenerateSubsetError",
    "EstimateBundle",
    "IoError",
    "LabeledSample",
    "MetricsRow",
    "MomentError",
    "MomentSet",
    "PluginEstimator",
    "SampleSizeError",
    "Scenario",
    "Selection",
    "SelectionError",
    "ShapeError",
    "SignalLabError",
    "VerificationError",
    "WhiteningError",
    "algorithm1",
    "algorithm2",
    "beta_sq_hat",
    "build_w",
    "c_hat",
    "c_oracle",
    "gap_select",
    "gen_dataset",
    "improve",
    "naive_estimate",
    "population_moments",
    "run_study",
    "select_all",
    "select_fixed",
    "sigma_sq_hat",
    "sigma_y_sq_hat",
    "t_g_hat",
    "tau_sq_naive",
    "var_g",
    "var_sigma_hat",
    "var_tau_naive",
    "whiten",
    "zero_stat",
]
