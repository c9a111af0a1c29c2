"""KRnet normalizing flows: density estimation and steady Fokker-Planck solutions."""

import json

from ._core import (
    ConfigError,
    IoError,
    Model as _Model,
    NumericError,
    SingularError,
    exact_log_pdf,
    lyapunov_solve,
    problems,
    set_num_threads,
    version,
)
from . import _core

__all__ = [
    "ConfigError",
    "IoError",
    "Model",
    "NumericError",
    "SingularError",
    "exact_log_pdf",
    "lyapunov_solve",
    "problem_defaults",
    "problems",
    "run",
    "set_num_threads",
    "version",
]


class Model(_Model):
    """KRnet flow built from a flow-config dict (same keys as the JSON config)."""

    def __init__(self, flow=None, **kwargs):
        cfg = dict(flow or {})
        cfg.update(kwargs)
        super().__init__(json.dumps(cfg))

    @property
    def config(self):
        return json.loads(self.config_json())


def problem_defaults(name):
    return json.loads(_core.problem_defaults(name))


def run(command, config, out, seed=None, threads=1):
    """Run a CLI subcommand in-process; returns the JSON summary as a dict."""
    return json.loads(_core.run(command, json.dumps(config), str(out), seed, threads))
