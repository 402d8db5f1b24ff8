"""Experiment configuration: a flat ``key = value`` file plus CLI overrides.

Lists are comma separated, booleans accept true/false/yes/no/1/0, and ``#``
starts a comment.  Unknown keys are rejected.  Custom channel error
distributions are given as ``profile_<NAME> = n(-1), n(0), n(+1), n(+2)``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import NB_IOT_FS, ChannelProfile, named_profile
from .dataset import digest_of
from .errors import ConfigError, DomainError
from .geometry import VALID_N_BS
from .mlp import TrainConfig
from .solver import SolverOptions

EXPERIMENTS = ("fig4", "fig5", "fig6", "fig7", "fig8")

# Namespaces keep training and test streams disjoint whatever the base seed.
TRAIN_NS, TEST_NS, INIT_NS, ALPHABET_NS = 0, 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: tuple[str, ...] = EXPERIMENTS
    d_cell: tuple[float, ...] = (500.0, 750.0, 1000.0)
    fs: float = NB_IOT_FS
    channel: str = "AWGN"
    n_bs: int = 7
    include_los: bool = False
    n_train: int = 100_000
    n_test: int = 1000
    seed: int = 2019

    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    validation_fraction: float = 0.1

    solver_max_iter: int = 50
    solver_step_tol: float = 1e-3
    # search-disk radius for Gauss-Newton, in units of d_cell; 0 = unbounded
    solver_radius_cells: float = 2.0

    los_channel: str = "AWGN"
    nlos_channel: str = "EVA"
    mismatch_train_d_cell: float = 500.0
    generalize_d_cell: float = 10_000.0
    sweep_d_cell: float = 500.0
    n_bs_sweep: tuple[int, ...] = (4, 5, 6, 7)
    nlos_d_cell: float = 500.0
    alphabet_d_cell: tuple[float, ...] = (500.0, 750.0, 1000.0, 10_000.0)
    alphabet_draws: int = 10_000

    profiles: dict = field(default_factory=dict)
    out: str = "runs/default"

    def __post_init__(self):
        for e in self.experiment:
            if e not in EXPERIMENTS:
                raise ConfigError(f"unknown experiment {e!r}; choose from {EXPERIMENTS}")
        for d in (*self.d_cell, *self.alphabet_d_cell, self.generalize_d_cell,
                  self.mismatch_train_d_cell, self.sweep_d_cell, self.nlos_d_cell):
            if not d > 0:
                raise ConfigError(f"inter-site distances must be positive, got {d}")
        for n in (self.n_bs, *self.n_bs_sweep):
            if n not in VALID_N_BS:
                raise ConfigError(f"n_bs must be in {VALID_N_BS}, got {n}")
        if not self.fs > 0:
            raise ConfigError("fs must be positive")
        if self.n_train < 1 or self.n_test < 1 or self.alphabet_draws < 1:
            raise ConfigError("sample counts must be >= 1")
        if self.solver_radius_cells < 0:
            raise ConfigError("solver_radius_cells must be >= 0")
        try:
            self.train_config(0)
            self.solver_options(1.0)
            for ch in {self.channel, self.los_channel, self.nlos_channel}:
                self.profile(ch)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived objects -----------------------------------------------------

    def profile(self, name: str) -> ChannelProfile:
        return named_profile(name, self.profiles)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.batch_size, self.epochs, self.learning_rate, seed, self.validation_fraction)

    def solver_options(self, d_cell: float) -> SolverOptions:
        radius = self.solver_radius_cells * d_cell if self.solver_radius_cells > 0 else None
        return SolverOptions(max_iter=self.solver_max_iter, step_tol=self.solver_step_tol, max_radius=radius)

    def stream(self, namespace: int, *key: int) -> list[int]:
        """Seed entropy for one stream; distinct namespaces never collide."""
        return [self.seed, namespace, *key]

    def int_seed(self, namespace: int, *key: int) -> int:
        return int(np.random.SeedSequence(self.stream(namespace, *key)).generate_state(1)[0])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @property
    def digest(self) -> str:
        """Digest of everything that affects outputs (the output path does not)."""
        d = self.to_dict()
        d.pop("out")
        return digest_of(d)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _list(conv):
    def parse(v: str):
        items = [x.strip() for x in v.split(",") if x.strip()]
        return tuple(conv(x) for x in items)
    return parse


_FIELD_PARSERS = {
    "experiment": _list(str.lower),
    "d_cell": _list(float),
    "alphabet_d_cell": _list(float),
    "n_bs_sweep": _list(int),
    "include_los": _parse_bool,
    "channel": str.upper,
    "los_channel": str.upper,
    "nlos_channel": str.upper,
    "out": str,
}


def _parser_for(name: str):
    if name in _FIELD_PARSERS:
        return _FIELD_PARSERS[name]
    f = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    return int if f.type in ("int", int) else float


def parse_config_text(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable configuration: {exc}") from exc
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"profiles"}
    values: dict = {}
    profiles: dict = {}
    for key, raw in cp["experiment"].items():
        k = key.strip()
        if k.lower().startswith("profile_"):
            counts = _list(float)(raw)
            if len(counts) != 4:
                raise ConfigError(f"{k}: expected four counts, got {raw!r}")
            profiles[k[len("profile_"):].upper()] = counts
            continue
        k = k.lower()
        if k not in known:
            raise ConfigError(f"unknown configuration key {k!r}")
        try:
            values[k] = _parser_for(k)(raw)
        except ValueError as exc:
            raise ConfigError(f"{k}: bad value {raw!r}") from exc
    if profiles:
        values["profiles"] = profiles
    return values


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then non-None ``overrides``."""
    values: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        values.update(parse_config_text(text))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
