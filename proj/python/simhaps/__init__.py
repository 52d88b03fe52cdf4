# SPDX-License-Identifier: Apache-2.0
#
# simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
# ------------------------------------------------------------------------
"""Python front end over the C++ core. Configs are plain dicts of unit-suffixed keys."""

import json

from . import _core
from ._core import (
    CSV_HEADER,
    ConfigError,
    InfeasibleError,
    NumericalError,
    SimhapsError,
    flops_estimate,
    outage_gamma,
)

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "InfeasibleError",
    "NumericalError",
    "SimhapsError",
    "default_config",
    "ee_objective",
    "evaluate_network",
    "flops_estimate",
    "optimize",
    "outage_gamma",
    "run_ee_sweep",
    "run_outage",
    "train_network",
]


def _encode(config):
    return json.dumps(config or {})


def default_config():
    return json.loads(_core.default_config())


def ee_objective(config, seed, power, phases):
    return _core.ee_objective(_encode(config), seed, power, phases)


def optimize(config=None, seed=1, scheme="Joint-AO"):
    return _core.optimize(_encode(config), seed, scheme)


def run_outage(config=None):
    return _core.run_outage(_encode(config))


def run_ee_sweep(config=None, param="L", values=(1, 2, 3), trials=20,
                 schemes=("Joint-AO", "Power-Opt", "Phase-Opt", "Non-Opt")):
    return _core.run_ee_sweep(_encode(config), param, list(values), trials, list(schemes))


def train_network(config, model_path):
    return _core.train_network(_encode(config), str(model_path))


def evaluate_network(config, model_path):
    return _core.evaluate_network(_encode(config), str(model_path))
