"""Command line entry point: ``otdoa-lab <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .dataset import FeatureSchema
from .errors import ConfigError, DomainError, FormatError, SingularGeometryError, TrainingDivergedError
from . import experiments as ex

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("otdoa_lab")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--d-cell", type=_float_list, help="inter-site distance(s) in meters, comma separated")
    p.add_argument("--channel", type=str.upper, help="AWGN, EPA, EVA, IDEAL or a configured profile")
    p.add_argument("--n-bs", type=int)
    p.add_argument("--include-los", action="store_const", const=True, default=None,
                   help="append per-neighbour LOS flags to the features")
    p.add_argument("--fs", type=float, help="sampling rate in Hz")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otdoa-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate training datasets")
    _add_common(p)

    p = sub.add_parser("train", help="train the positioning network on a dataset file")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)

    p = sub.add_parser("evaluate", help="run figure experiments against trained models")
    _add_common(p)
    p.add_argument("--experiment", type=str.lower, action="append",
                   help="fig5, fig6, fig7 or fig8 (repeatable; default from config)")
    p.add_argument("--models", type=Path, help="model directory (default <out>/models)")

    p = sub.add_parser("alphabet", help="quantized RSTD grid and normalized-RSTD CDFs")
    _add_common(p)

    p = sub.add_parser("reproduce-all", help="generate, train and evaluate every experiment")
    _add_common(p)
    return parser


def _config(args):
    cfg = load_config(
        args.config,
        seed=args.seed,
        out=str(args.out) if args.out is not None else None,
        d_cell=args.d_cell,
        channel=args.channel,
        n_bs=args.n_bs,
        include_los=args.include_los,
        fs=args.fs,
        n_train=args.n_train,
        n_test=args.n_test,
        epochs=args.epochs,
    )
    return cfg, Path(cfg.out)


def _cmd_generate(args) -> int:
    cfg, out = _config(args)
    for d in cfg.d_cell:
        path = ex.write_dataset(cfg, ex.DataKey(cfg.channel, d, cfg.n_bs, cfg.include_los), out)
        print(path)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg, out = _config(args)
    expected = FeatureSchema(cfg.n_bs, cfg.include_los)
    mpath, tlog = ex.train_from_file(cfg, args.dataset, out, expected=expected)
    print(mpath)
    log.info("best epoch %d of %d", tlog.best_epoch, tlog.epochs)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg, out = _config(args)
    figs = args.experiment or [f for f in cfg.experiment if f != "fig4"]
    for fig in figs:
        reports = ex.evaluate_figure(cfg, fig, model_dir=args.models, out=out)
        for rep in reports:
            means = "  ".join(f"{m}={c.mean:.1f}m" for m, c in rep.cdfs.items())
            print(f"{fig} {rep.label}: {means}")
    return EXIT_OK


def _cmd_alphabet(args) -> int:
    cfg, out = _config(args)
    d_cells = args.d_cell if args.d_cell is not None else cfg.alphabet_d_cell
    result = ex.run_alphabet(cfg, d_cells, out)
    for d, (grid, cdf) in result.items():
        print(f"d_cell={d:g}: {len(grid)} grid values, {len(cdf.distinct())} distinct empirical values")
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    cfg, out = _config(args)
    ex.reproduce_all(cfg, out)
    print(ex.reports_dir(out))
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "alphabet": _cmd_alphabet,
    "reproduce-all": _cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDivergedError, SingularGeometryError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
