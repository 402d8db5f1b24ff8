"""Experiment pipeline: datasets -> models -> figure reports.

Output directory layout::

    datasets/train_<CH>_d<D>_n<N>_<los|nolos>.tsv (+ .tsv.json sidecar)
    models/model_<CH>_d<D>_n<N>_<los|nolos>.json
    logs/train_<CH>_d<D>_n<N>_<los|nolos>.tsv
    reports/fig4_alphabet.tsv, fig4_cdf.tsv
    reports/figN_cdf.tsv, figN_summary.tsv, figN_improvement.tsv  (N = 5..8)

Every text output starts with ``#`` header lines carrying the config digest.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ALPHABET_NS, INIT_NS, TEST_NS, TRAIN_NS, ExperimentConfig
from .dataset import Dataset, FeatureSchema, generate_dataset, load_dataset, save_dataset
from .errors import ConfigError
from .evaluation import (
    GAUSS_NEWTON,
    REPORT_QUANTILES,
    ComparisonReport,
    EvalCondition,
    alphabet_bounds,
    normalized_diff_cdf,
    rstd_alphabet,
    run_comparison,
)
from .geometry import build_layout
from .mlp import MlpModel, MlpSpec, TrainLog, load_model, save_model, train

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class DataKey:
    """Identifies one training condition (and thus one dataset and one model)."""

    channel: str
    d_cell: float
    n_bs: int = 7
    include_los: bool = False

    @property
    def stem(self) -> str:
        return f"{self.channel}_d{self.d_cell:g}_n{self.n_bs}_{'los' if self.include_los else 'nolos'}"

    @property
    def stream_key(self) -> tuple[int, int]:
        # channel and LOS flags are left out on purpose: conditions that differ
        # only there share UE positions
        return (int(round(self.d_cell * 1000)), self.n_bs)


def _fmt(x) -> str:
    return f"{x:g}"


# -- paths ---------------------------------------------------------------------


def dataset_path(out, key: DataKey) -> Path:
    return Path(out) / "datasets" / f"train_{key.stem}.tsv"


def model_path(out, key: DataKey) -> Path:
    return Path(out) / "models" / f"model_{key.stem}.json"


def log_path(out, key: DataKey) -> Path:
    return Path(out) / "logs" / f"train_{key.stem}.tsv"


def reports_dir(out) -> Path:
    return Path(out) / "reports"


# -- generation and training ---------------------------------------------------


def make_dataset(cfg: ExperimentConfig, key: DataKey) -> Dataset:
    layout = build_layout(key.d_cell, key.n_bs)
    return generate_dataset(layout, cfg.profile(key.channel), cfg.fs, cfg.n_train, key.include_los,
                            cfg.stream(TRAIN_NS, *key.stream_key))


def write_dataset(cfg: ExperimentConfig, key: DataKey, out) -> Path:
    path = dataset_path(out, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = make_dataset(cfg, key)
    save_dataset(path, ds)
    log.info("wrote %s (%d samples)", path, len(ds))
    return path


def train_model(cfg: ExperimentConfig, ds: Dataset, init_key=()) -> tuple[MlpModel, TrainLog]:
    spec = MlpSpec.standard(ds.schema.width)
    seed = cfg.int_seed(INIT_NS, *init_key)

    def progress(epoch, tl, vl):
        if epoch % 10 == 0 or epoch == cfg.epochs:
            log.info("  epoch %d/%d  train %.6g  val %.6g", epoch, cfg.epochs, tl, vl)

    params, tlog = train(spec, cfg.train_config(seed), ds.features, ds.targets, progress)
    model = MlpModel(params, ds.schema.to_dict(), float(ds.meta["d_cell"]))
    return model, tlog


def write_train_log(path, tlog: TrainLog, cfg: ExperimentConfig) -> None:
    lines = [
        "# otdoa-lab training log",
        f"# config_digest: {cfg.digest}",
        f"# initial_val_loss: {tlog.initial_val_loss!r}",
        f"# best_epoch: {tlog.best_epoch}",
        "epoch\ttrain_loss\tval_loss",
    ]
    lines += [f"{i}\t{t!r}\t{v!r}" for i, (t, v) in enumerate(zip(tlog.train_loss, tlog.val_loss), 1)]
    Path(path).write_text("\n".join(lines) + "\n")


def train_from_file(cfg: ExperimentConfig, dataset_file, out, key: DataKey | None = None,
                    expected: FeatureSchema | None = None) -> tuple[Path, TrainLog]:
    ds = load_dataset(dataset_file)
    if expected is not None and ds.schema != expected:
        raise ConfigError(
            f"dataset has {ds.schema.width} features ({ds.schema}); requested network expects "
            f"{expected.width} ({expected})"
        )
    if key is None:
        key = DataKey(ds.meta["channel"], float(ds.meta["d_cell"]), ds.schema.n_bs, ds.schema.include_los)
    init_key = (*key.stream_key, int(key.include_los))
    log.info("training %s on %s", key.stem, dataset_file)
    model, tlog = train_model(cfg, ds, init_key)
    mpath = model_path(out, key)
    mpath.parent.mkdir(parents=True, exist_ok=True)
    save_model(mpath, model)
    lpath = log_path(out, key)
    lpath.parent.mkdir(parents=True, exist_ok=True)
    write_train_log(lpath, tlog, cfg)
    return mpath, tlog


# -- figure definitions ----------------------------------------------------------


@dataclass(frozen=True)
class Series:
    label: str
    condition: EvalCondition
    models: dict  # method name -> DataKey or None (Gauss-Newton)
    compare_to: dict


def _condition(cfg: ExperimentConfig, channel: str, d_cell: float, n_bs: int = 7) -> EvalCondition:
    key = DataKey(channel, d_cell, n_bs)
    return EvalCondition(d_cell, n_bs, cfg.profile(channel), cfg.fs, cfg.n_test,
                         cfg.stream(TEST_NS, *key.stream_key))


def figure_series(cfg: ExperimentConfig, fig: str) -> list[Series]:
    ch = cfg.los_channel
    out = []
    if fig == "fig5":
        mis = cfg.mismatch_train_d_cell
        for d in cfg.d_cell:
            models = {GAUSS_NEWTON: None, "dnn": DataKey(ch, d)}
            cmp = {}
            if d != mis:
                name = f"dnn_train{_fmt(mis)}"
                models[name] = DataKey(ch, mis)
                cmp[name] = "dnn"
            out.append(Series(f"{ch}_d{_fmt(d)}", _condition(cfg, ch, d), models, cmp))
    elif fig == "fig6":
        d = cfg.sweep_d_cell
        for n in cfg.n_bs_sweep:
            out.append(Series(f"{ch}_d{_fmt(d)}_n{n}", _condition(cfg, ch, d, n),
                              {GAUSS_NEWTON: None, "dnn": DataKey(ch, d, n)}, {}))
    elif fig == "fig7":
        g = cfg.generalize_d_cell
        for d in cfg.d_cell:
            models = {GAUSS_NEWTON: None, f"dnn_train{_fmt(g)}": DataKey(ch, g), "dnn_matched": DataKey(ch, d)}
            out.append(Series(f"{ch}_d{_fmt(d)}", _condition(cfg, ch, d), models,
                              {f"dnn_train{_fmt(g)}": "dnn_matched"}))
    elif fig == "fig8":
        d, nl = cfg.nlos_d_cell, cfg.nlos_channel
        out.append(Series(f"{ch}_d{_fmt(d)}", _condition(cfg, ch, d),
                          {GAUSS_NEWTON: None, "dnn": DataKey(ch, d)}, {}))
        out.append(Series(f"{nl}_d{_fmt(d)}", _condition(cfg, nl, d),
                          {GAUSS_NEWTON: None, "dnn": DataKey(nl, d),
                           "dnn_los": DataKey(nl, d, include_los=True)},
                          {"dnn_los": "dnn"}))
    else:
        raise ConfigError(f"no comparison experiment named {fig!r}")
    return out


def required_keys(cfg: ExperimentConfig) -> list[DataKey]:
    keys = set()
    for fig in cfg.experiment:
        if fig == "fig4":
            continue
        for s in figure_series(cfg, fig):
            keys.update(k for k in s.models.values() if k is not None)
    return sorted(keys)


# -- evaluation and reports --------------------------------------------------------


def evaluate_figure(cfg: ExperimentConfig, fig: str, model_dir=None, out=None,
                    models: dict[DataKey, Path] | None = None) -> list[ComparisonReport]:
    """Run every series of ``fig``; models are looked up in ``model_dir`` unless given."""
    models = dict(models or {})
    model_dir = Path(model_dir) if model_dir is not None else Path(out or cfg.out) / "models"
    cache: dict[DataKey, MlpModel] = {}
    reports = []
    for s in figure_series(cfg, fig):
        loaded = {}
        for name, key in s.models.items():
            if key is None:
                loaded[name] = None
                continue
            if key not in cache:
                path = models.get(key, model_dir / model_path("", key).name)
                if not Path(path).exists():
                    raise ConfigError(f"{fig}: missing model for {key.stem} (looked for {path})")
                cache[key] = load_model(path)
            loaded[name] = cache[key]
        rep = run_comparison(s.condition, loaded, cfg.solver_options(s.condition.d_cell), s.label, s.compare_to)
        for name, key in s.models.items():
            if key is not None:
                rep.methods[name]["model"] = key.stem
        reports.append(rep)
        log.info("%s %s: %s", fig, s.label,
                 ", ".join(f"{m}={c.mean:.1f}m" for m, c in rep.cdfs.items()))
    if out is not None:
        write_figure_reports(reports_dir(out), fig, reports, cfg)
    return reports


def _header(kind: str, cfg: ExperimentConfig, columns: list[str]) -> list[str]:
    return [f"# otdoa-lab {kind}", f"# config_digest: {cfg.digest}", "\t".join(columns)]


def write_figure_reports(rdir, fig: str, reports: list[ComparisonReport], cfg: ExperimentConfig) -> None:
    rdir = Path(rdir)
    rdir.mkdir(parents=True, exist_ok=True)
    qcols = [f"q{int(round(q * 100))}_m" for q in REPORT_QUANTILES]
    cdf_lines = _header(f"{fig} error CDF", cfg, ["series", "method", "rank", "error_m", "cdf"])
    sum_lines = _header(f"{fig} summary", cfg, ["series", "method", "d_cell", "n_bs", "channel", "model",
                                                "n", "mean_m", *qcols])
    imp_lines = _header(f"{fig} improvement", cfg, ["series", "method", "baseline", "mean_m",
                                                    "baseline_mean_m", "improvement"])
    for rep in reports:
        c = rep.condition
        for name, cdf in rep.cdfs.items():
            n = cdf.n
            cdf_lines += [f"{rep.label}\t{name}\t{i}\t{e:.6f}\t{i / n:.6f}" for i, e in enumerate(cdf.errors, 1)]
            qs = "\t".join(f"{cdf.quantile(q):.6f}" for q in REPORT_QUANTILES)
            sum_lines.append(
                f"{rep.label}\t{name}\t{_fmt(c['d_cell'])}\t{c['n_bs']}\t{c['channel']}\t"
                f"{rep.methods[name].get('model', '-')}\t{n}\t{cdf.mean:.6f}\t{qs}"
            )
        for (m, base), ratio in rep.improvements().items():
            imp_lines.append(f"{rep.label}\t{m}\t{base}\t{rep.mean(m):.6f}\t{rep.mean(base):.6f}\t{ratio:.6f}")
    (rdir / f"{fig}_cdf.tsv").write_text("\n".join(cdf_lines) + "\n")
    (rdir / f"{fig}_summary.tsv").write_text("\n".join(sum_lines) + "\n")
    (rdir / f"{fig}_improvement.tsv").write_text("\n".join(imp_lines) + "\n")


def run_alphabet(cfg: ExperimentConfig, d_cells, out=None, profile=None) -> dict:
    """Quantized grid and empirical normalized-RSTD CDF per inter-site distance."""
    d_cells = list(d_cells)
    if not d_cells:
        raise ConfigError("alphabet needs at least one inter-site distance")
    result = {}
    for d in d_cells:
        layout = build_layout(d, 7)
        grid = rstd_alphabet(d, cfg.fs)
        cdf = normalized_diff_cdf(layout, cfg.fs, cfg.alphabet_draws,
                                  cfg.stream(ALPHABET_NS, int(round(d * 1000))), profile)
        result[d] = (grid, cdf)
    if out is not None:
        rdir = reports_dir(out)
        rdir.mkdir(parents=True, exist_ok=True)
        a_lines = _header("fig4 RSTD alphabet", cfg, ["d_cell", "k", "normalized_rstd"])
        c_lines = _header("fig4 normalized RSTD CDF", cfg, ["d_cell", "value", "cdf", "count"])
        for d, (grid, cdf) in result.items():
            lo, _ = alphabet_bounds(d, cfg.fs)
            a_lines += [f"{_fmt(d)}\t{lo + i}\t{v:.12g}" for i, v in enumerate(grid)]
            vals, counts = np.unique(np.round(cdf.errors, 12), return_counts=True)
            cum = np.cumsum(counts) / cdf.n
            c_lines += [f"{_fmt(d)}\t{v:.12g}\t{p:.6f}\t{k}" for v, p, k in zip(vals, cum, counts)]
        (rdir / "fig4_alphabet.tsv").write_text("\n".join(a_lines) + "\n")
        (rdir / "fig4_cdf.tsv").write_text("\n".join(c_lines) + "\n")
    return result


def reproduce_all(cfg: ExperimentConfig, out=None) -> dict[str, list]:
    """Generate every dataset, train every model, then write all figure reports."""
    out = Path(out or cfg.out)
    results: dict[str, list] = {}
    for key in required_keys(cfg):
        dpath = write_dataset(cfg, key, out)
        train_from_file(cfg, dpath, out, key)
    for fig in cfg.experiment:
        if fig == "fig4":
            results[fig] = [run_alphabet(cfg, cfg.alphabet_d_cell, out)]
        else:
            results[fig] = evaluate_figure(cfg, fig, out=out)
    return results
