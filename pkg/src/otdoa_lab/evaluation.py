"""Error CDFs, the quantized RSTD alphabet, and paired method comparisons."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import SPEED_OF_LIGHT, ChannelProfile, named_profile, round_half_away
from .dataset import FeatureSchema, build_features, simulate
from .errors import ConfigError, DomainError, FormatError
from .geometry import BsLayout, build_layout
from .mlp import MlpModel
from .solver import SolverOptions, solve_many

REPORT_QUANTILES = (0.5, 0.67, 0.8, 0.9, 0.95)
GAUSS_NEWTON = "gauss_newton"


@dataclass(frozen=True)
class ErrorCdf:
    errors: np.ndarray  # sorted ascending

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def n(self) -> int:
        return len(self.errors)

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.errors, q))

    def cdf(self, x: float) -> float:
        """Fraction of errors <= x."""
        return np.searchsorted(self.errors, x, side="right") / self.n

    def distinct(self) -> np.ndarray:
        return np.unique(self.errors)


def error_cdf(errors) -> ErrorCdf:
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise DomainError("error_cdf needs at least one value")
    return ErrorCdf(np.sort(e))


def alphabet_bounds(d_cell: float, fs: float) -> tuple[int, int]:
    """Sample-index range of the quantized RSTD grid for a given spacing."""
    if not (d_cell > 0 and fs > 0):
        raise DomainError("d_cell and fs must be positive")
    ratio = fs * d_cell / SPEED_OF_LIGHT
    return -int(round_half_away(ratio)), int(round_half_away(ratio / 3.0))


def rstd_alphabet(d_cell: float, fs: float) -> np.ndarray:
    """Normalized quantized RSTD values ``k * c / (fs * d_cell)`` over the grid range."""
    lo, hi = alphabet_bounds(d_cell, fs)
    return np.arange(lo, hi + 1) * (SPEED_OF_LIGHT / (fs * d_cell))


def normalized_diff_cdf(
    layout: BsLayout, fs: float, n_draws: int, seed, profile: ChannelProfile | None = None
) -> ErrorCdf:
    """Empirical CDF of every normalized RSTD ``c * RSTD / d_cell`` over random UEs.

    Defaults to the error-free channel, i.e. quantization only.
    """
    if n_draws < 1:
        raise DomainError("n_draws must be >= 1")
    profile = profile or named_profile("IDEAL")
    _, m = simulate(layout, profile, fs, n_draws, seed)
    return error_cdf(SPEED_OF_LIGHT * m.rstd / layout.d_cell)


# -- paired comparisons --------------------------------------------------------


@dataclass(frozen=True)
class EvalCondition:
    d_cell: float
    n_bs: int = 7
    channel: ChannelProfile = field(default_factory=lambda: named_profile("AWGN"))
    fs: float = 1.92e6
    n_test: int = 1000
    seed: object = 0

    def echo(self) -> dict:
        return {"d_cell": self.d_cell, "n_bs": self.n_bs, "channel": self.channel.name,
                "fs": self.fs, "n_test": self.n_test,
                "seed": self.seed if isinstance(self.seed, int) else list(self.seed)}


@dataclass
class ComparisonReport:
    label: str
    condition: dict
    cdfs: dict[str, ErrorCdf]
    methods: dict[str, dict]

    def mean(self, method: str) -> float:
        return self.cdfs[method].mean

    def improvement(self, method: str, baseline: str = GAUSS_NEWTON) -> float:
        """``1 - mean(method) / mean(baseline)``."""
        return 1.0 - self.mean(method) / self.mean(baseline)

    def improvements(self) -> dict[tuple[str, str], float]:
        """Improvement of every DNN over Gauss-Newton and over its ``compare_to`` method."""
        out = {}
        for name, info in self.methods.items():
            if info["kind"] != "dnn":
                continue
            if GAUSS_NEWTON in self.cdfs:
                out[(name, GAUSS_NEWTON)] = self.improvement(name)
            if "compare_to" in info:
                out[(name, info["compare_to"])] = self.improvement(name, info["compare_to"])
        return out


def run_comparison(
    condition: EvalCondition,
    models: dict[str, MlpModel | None],
    solver_opts: SolverOptions | None = None,
    label: str = "",
    compare_to: dict[str, str] | None = None,
) -> ComparisonReport:
    """Evaluate Gauss-Newton and each DNN on one shared set of measurements.

    ``models`` maps method names to trained models; the special name
    ``gauss_newton`` (value ignored) selects the solver.  Each DNN gets features
    built from the same realizations, with or without LOS flags according to
    its own schema.
    """
    layout = build_layout(condition.d_cell, condition.n_bs)
    points, m = simulate(layout, condition.channel, condition.fs, condition.n_test, condition.seed)
    cdfs, methods = {}, {}
    compare_to = compare_to or {}
    for name, model in models.items():
        if name == GAUSS_NEWTON:
            est = solve_many(m.rstd_m, layout, solver_opts)
            methods[name] = {"kind": "gauss_newton"}
        else:
            if model is None:
                raise ConfigError(f"method {name!r} has no model")
            schema = FeatureSchema.from_dict(model.feature_schema)
            if schema.n_bs != layout.n_bs:
                raise FormatError(f"model for {name!r} expects n_bs={schema.n_bs}, test uses {layout.n_bs}")
            feats = build_features(m, layout, schema.include_los)
            est = model.predict_positions(feats, layout.d_cell)
            methods[name] = {"kind": "dnn", "train_d_cell": model.train_d_cell,
                             "include_los": schema.include_los}
        if name in compare_to:
            methods[name]["compare_to"] = compare_to[name]
        cdfs[name] = error_cdf(np.linalg.norm(est - points, axis=1))
    return ComparisonReport(label, condition.echo(), cdfs, methods)
