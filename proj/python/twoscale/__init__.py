"""Python access to the twoscale library."""
import json

from ._twoscale import (
    ConfigError,
    DeltaRule,
    EllClass,
    Regime,
    ScaleSchedule,
    ScheduleError,
    __version__,
    classify_schedule,
    ks_gaussian,
    ldp_rate,
    ou_covariance,
    phi2_closed_form,
    qbar2_closed_form,
    sv_averages,
    sv_corrector,
    sv_density,
)
from ._twoscale import run_config as _run_config


def run_config(path, checks=None, out=None, seed=None, write_files=False):
    """Run an experiment config and return the report as a dict."""
    return json.loads(_run_config(str(path), checks, out, seed, write_files))


__all__ = [
    "ConfigError",
    "DeltaRule",
    "EllClass",
    "Regime",
    "ScaleSchedule",
    "ScheduleError",
    "__version__",
    "classify_schedule",
    "ks_gaussian",
    "ldp_rate",
    "ou_covariance",
    "phi2_closed_form",
    "qbar2_closed_form",
    "run_config",
    "sv_averages",
    "sv_corrector",
    "sv_density",
]
