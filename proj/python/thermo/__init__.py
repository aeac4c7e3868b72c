"""Python access to the solver core and to its run artifacts."""

import json
from pathlib import Path

from . import _core
from ._core import ConfigError, check_config, energy_csv_header, list_scenarios, scenario_text
from .artifacts import read_energy_csv, read_report, read_vtk

__all__ = [
    "ConfigError",
    "check_config",
    "energy_csv_header",
    "list_scenarios",
    "read_energy_csv",
    "read_report",
    "read_vtk",
    "run",
    "run_scenario",
    "scenario_text",
]


def run(config_text, out_dir=None, steps=-1, tau=-1.0, source="<config>"):
    """Runs a config given as text and returns the report as a dict."""
    out = "" if out_dir is None else str(Path(out_dir))
    return json.loads(_core.run_config(config_text, source, out, steps, tau))


def run_scenario(name, out_dir=None, steps=-1, tau=-1.0):
    return run(scenario_text(name), out_dir, steps, tau, source=name)
