"""Run configuration: INI-style sections, validated into solver objects.

The grammar is flat key = value under the sections [kernel],
[nonlinearity], [mesh], [time], [data], [newton], [memory], [verify],
[cascade], [output].  Every cross-field constraint is checked up front and
reported with its field path before any compute starts.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .kernels import KernelPair
from .nonlinearity import NonlinearityProfile
from .profiles import FORCING_PROFILES, INITIAL_PROFILES, forcing_function, initial_field
from .space import build_mesh
from .stepper import NewtonOptions, TimeGrid

__all__ = ["RunConfig", "DEFAULT_CONFIG"]

DEFAULT_CONFIG = """\
[kernel]
family = fractional
alpha = 0.5
gamma = 0.0

[nonlinearity]
kind = porous_medium
exponent = 2.0
slope_threshold = 1.0
mu = 0.0
table =

[mesh]
dim = 1
cells = 32
lengths = 1.0
nu = 1.0

[time]
horizon = 1.0
steps = 256
grading = 1.0

[data]
u0 = zero
u0_amplitude = 1.0
f = bump_steady
f_amplitude = 20.0

[newton]
tol = 1e-10
max_iter = 50

[memory]
path = naive
soe_tol = 1e-8

[verify]
battery_seed = 0
delta_fractions = 0.25,0.5,0.75
entropy_tol_coeff = 1e-4
allowance_coeff = 0.1

[cascade]
m_ladder = 1,2,4,8,16
n_ladder = 1,2,4
tol_coeff = 1e-3

[output]
directory = out
"""


def _get(parser, section, key, conv, default=None, path_hint=None):
    path = path_hint or f"{section}.{key}"
    if not parser.has_option(section, key):
        if default is None:
            raise ConfigurationError(f"{path}: missing required key")
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: cannot parse {raw!r} ({exc})")


def _float_list(raw):
    return [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]


def _int_list(raw):
    return [int(v) for v in raw.replace(";", ",").split(",") if v.strip()]


@dataclass
class RunConfig:
    """Validated run configuration; build_* methods construct solver objects."""

    kernel_family: str
    alpha: float
    gamma: float
    nonlinearity_kind: str
    exponent: float
    slope_threshold: float
    mu: float
    table: str
    dim: int
    cells: tuple
    lengths: tuple
    nu: float
    horizon: float
    steps: int
    grading: float
    u0_name: str
    u0_amplitude: float
    f_name: str
    f_amplitude: float
    newton_tol: float
    newton_max_iter: int
    memory_path: str
    soe_tol: float
    battery_seed: int
    delta_fractions: list
    entropy_tol_coeff: float
    allowance_coeff: float
    m_ladder: list
    n_ladder: list
    cascade_tol_coeff: float
    output_dir: str
    raw_text: str = field(default="", repr=False)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        parser.read_string(DEFAULT_CONFIG)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"config parse error: {exc}")
        cfg = cls(
            kernel_family=_get(parser, "kernel", "family", str),
            alpha=_get(parser, "kernel", "alpha", float),
            gamma=_get(parser, "kernel", "gamma", float),
            nonlinearity_kind=_get(parser, "nonlinearity", "kind", str),
            exponent=_get(parser, "nonlinearity", "exponent", float),
            slope_threshold=_get(parser, "nonlinearity", "slope_threshold", float),
            mu=_get(parser, "nonlinearity", "mu", float),
            table=_get(parser, "nonlinearity", "table", str, default=""),
            dim=_get(parser, "mesh", "dim", int),
            cells=tuple(_get(parser, "mesh", "cells", _int_list)),
            lengths=tuple(_get(parser, "mesh", "lengths", _float_list)),
            nu=_get(parser, "mesh", "nu", float),
            horizon=_get(parser, "time", "horizon", float),
            steps=_get(parser, "time", "steps", int),
            grading=_get(parser, "time", "grading", float),
            u0_name=_get(parser, "data", "u0", str),
            u0_amplitude=_get(parser, "data", "u0_amplitude", float),
            f_name=_get(parser, "data", "f", str),
            f_amplitude=_get(parser, "data", "f_amplitude", float),
            newton_tol=_get(parser, "newton", "tol", float),
            newton_max_iter=_get(parser, "newton", "max_iter", int),
            memory_path=_get(parser, "memory", "path", str),
            soe_tol=_get(parser, "memory", "soe_tol", float),
            battery_seed=_get(parser, "verify", "battery_seed", int),
            delta_fractions=_get(parser, "verify", "delta_fractions", _float_list),
            entropy_tol_coeff=_get(parser, "verify", "entropy_tol_coeff", float),
            allowance_coeff=_get(parser, "verify", "allowance_coeff", float),
            m_ladder=_get(parser, "cascade", "m_ladder", _int_list),
            n_ladder=_get(parser, "cascade", "n_ladder", _int_list),
            cascade_tol_coeff=_get(parser, "cascade", "tol_coeff", float),
            output_dir=_get(parser, "output", "directory", str),
            raw_text=text,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.kernel_family not in ("fractional", "tempered", "ultraslow"):
            raise ConfigurationError(
                f"kernel.family: unknown family {self.kernel_family!r}")
        if self.kernel_family != "ultraslow" and not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(
                f"kernel.alpha: must lie strictly in (0,1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ConfigurationError(f"kernel.gamma: must be >= 0, got {self.gamma}")
        if self.nonlinearity_kind not in ("identity", "porous_medium", "custom"):
            raise ConfigurationError(
                f"nonlinearity.kind: unknown kind {self.nonlinearity_kind!r}")
        if self.nonlinearity_kind == "porous_medium" and self.exponent <= 1.0:
            raise ConfigurationError(
                f"nonlinearity.exponent: must exceed 1, got {self.exponent}")
        if self.nonlinearity_kind == "custom":
            if not self.table:
                raise ConfigurationError(
                    "nonlinearity.table: custom kind needs a CSV path")
            if self.mu <= 0.0:
                raise ConfigurationError(
                    "nonlinearity.mu: custom kind needs a positive slope bound")
        if self.dim not in (1, 2):
            raise ConfigurationError(f"mesh.dim: must be 1 or 2, got {self.dim}")
        if len(self.cells) != self.dim:
            raise ConfigurationError(
                f"mesh.cells: need {self.dim} entries, got {list(self.cells)}")
        if len(self.lengths) != self.dim:
            raise ConfigurationError(
                f"mesh.lengths: need {self.dim} entries, got {list(self.lengths)}")
        if any(c < 2 for c in self.cells):
            raise ConfigurationError(f"mesh.cells: each >= 2, got {list(self.cells)}")
        if self.nu <= 0.0:
            raise ConfigurationError(f"mesh.nu: must be positive, got {self.nu}")
        if self.horizon <= 0.0:
            raise ConfigurationError(f"time.horizon: must be positive, got {self.horizon}")
        if self.steps < 1:
            raise ConfigurationError(f"time.steps: must be >= 1, got {self.steps}")
        if self.grading < 1.0:
            raise ConfigurationError(f"time.grading: must be >= 1, got {self.grading}")
        if self.u0_name not in INITIAL_PROFILES:
            raise ConfigurationError(
                f"data.u0: unknown profile {self.u0_name!r}, choose from "
                f"{INITIAL_PROFILES}")
        if self.f_name not in FORCING_PROFILES:
            raise ConfigurationError(
                f"data.f: unknown profile {self.f_name!r}, choose from "
                f"{FORCING_PROFILES}")
        if self.newton_tol <= 0.0:
            raise ConfigurationError(f"newton.tol: must be positive, got {self.newton_tol}")
        if self.memory_path not in ("naive", "soe"):
            raise ConfigurationError(
                f"memory.path: must be naive or soe, got {self.memory_path!r}")
        if self.soe_tol <= 0.0:
            raise ConfigurationError(f"memory.soe_tol: must be positive")
        for name, ladder in (("cascade.m_ladder", self.m_ladder),
                             ("cascade.n_ladder", self.n_ladder)):
            if not ladder or any(v < 1 for v in ladder) \
                    or any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ConfigurationError(
                    f"{name}: must be a strictly increasing ladder of "
                    f"positive integers, got {ladder}")
        if not self.delta_fractions or any(not 0.0 < d < 1.0
                                           for d in self.delta_fractions):
            raise ConfigurationError(
                "verify.delta_fractions: fractions of the horizon in (0,1)")

    # -- builders -------------------------------------------------------------

    def build_pair(self) -> KernelPair:
        if self.kernel_family == "fractional":
            return KernelPair.fractional(self.alpha, horizon=self.horizon)
        if self.kernel_family == "tempered":
            return KernelPair.tempered(self.alpha, self.gamma, horizon=self.horizon)
        return KernelPair.ultraslow(horizon=self.horizon)

    def build_profile(self) -> NonlinearityProfile:
        if self.nonlinearity_kind == "identity":
            return NonlinearityProfile.identity()
        if self.nonlinearity_kind == "custom":
            return NonlinearityProfile.from_csv(
                self.table, mu=self.mu, slope_threshold=self.slope_threshold)
        return NonlinearityProfile.porous_medium(
            self.exponent, slope_threshold=self.slope_threshold)

    def build_mesh(self):
        return build_mesh(self.dim, self.cells, self.lengths, nu=self.nu)

    def build_grid(self) -> TimeGrid:
        if self.grading == 1.0:
            return TimeGrid.uniform(self.horizon, self.steps)
        return TimeGrid.graded(self.horizon, self.steps, self.grading)

    def build_newton(self) -> NewtonOptions:
        return NewtonOptions(tol=self.newton_tol, max_iter=self.newton_max_iter)

    def build_data(self, problem):
        u0 = self.u0_amplitude * initial_field(problem, self.u0_name) \
            if self.u0_name != "zero" else np.zeros(problem.n_interior)
        f = forcing_function(problem, self.f_name, amplitude=self.f_amplitude)
        return u0, f

    def canonical_text(self) -> str:
        """Round-trippable echo of the effective configuration."""
        parser = configparser.ConfigParser()
        parser.read_string(DEFAULT_CONFIG)
        if self.raw_text:
            parser.read_string(self.raw_text)
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()
