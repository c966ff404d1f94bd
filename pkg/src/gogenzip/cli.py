"""Command-line interface: ``gogenzip <verb> [options]``.

Every experiment flag mirrors a key of the flat ``key=value`` config file
(``--batch-size`` is ``batch_size``); flags override ``--config``, which
overrides the defaults. ``GGZ_SEED`` supplies the default seed.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from .config import ExperimentConfig, default_seed, parse_kv
from .exceptions import (
    CompatibilityError,
    ContainerFormatError,
    CorruptPayloadError,
    DataValidationError,
    InvalidArgumentError,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
VERBS = ("train", "eval", "sweep", "export-masks", "compare-go", "synth", "calibrate")
FLAG_HELP = {
    "mode": "recon or go",
    "policy": "adaptive or fixed",
    "codec": "hybrid, generative-only or lossless-only",
    "sr": "sampling-ratio budget in (0, 1]",
    "cr": "target compression ratio (sets the rate budget)",
    "rate": "normalised rate budget (alternative to --cr)",
    "latent_dim": "latent size; 0 picks it automatically",
    "data": "CSV path, or 'synth' for the seeded generator",
    "seed": "model/training seed (default: $GGZ_SEED or 0)",
    "jobs": "worker processes for independent runs",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ parsing

def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    g = p.add_argument_group("experiment settings (config-file keys)")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            g.add_argument(flag, dest=f.name, action="store_const", const="true", default=None,
                           help=FLAG_HELP.get(f.name))
        else:
            g.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper(),
                           help=FLAG_HELP.get(f.name))
    g.add_argument("--synth", dest="data", action="store_const", const="synth",
                   help="use the seeded synthetic dataset")


def _list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _seed_list(text):
    """``0,1,2`` or a range ``0-4``."""
    if "-" in text.strip("-") and "," not in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return _list(int)(text)


def build_parser():
    parser = _Parser(prog="gogenzip", description="Goal-oriented sampling and hybrid "
                     "generative/LZMA compression of multi-KPI telemetry.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train and write checkpoint + metrics log")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint through the wire path")
    p.add_argument("checkpoint", help="run directory or checkpoint prefix")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="train + eval every cell of a budget grid")
    p.add_argument("--srs", type=_list(float), default=[0.2, 0.4, 1.0])
    p.add_argument("--crs", type=_list(float), default=[2.9])
    p.add_argument("--codecs", type=_list(str), default=["hybrid", "generative-only"])
    p.add_argument("--policies", type=_list(str), default=["adaptive"])
    p.add_argument("--seeds", type=_seed_list, default=None)
    p.add_argument("--x-axis", choices=("cr", "sr"), default="cr")
    _add_config_flags(p)

    p = sub.add_parser("export-masks", help="write per (task, class) mask grids")
    p.add_argument("checkpoint", help="run directory or checkpoint prefix")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tasks", type=_list(int), default=None)
    p.add_argument("--classes", type=_list(int), default=None)
    p.add_argument("--hours", type=_list(int), default=None)

    p = sub.add_parser("compare-go", help="Recon-Based vs GO-E2E over paired seeds")
    p.add_argument("--seeds", type=_seed_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--out", help="also write the table (and per-seed JSON) here")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV + manifest")
    p.add_argument("--out", required=True, help="CSV path; the manifest goes next to it")
    p.add_argument("--synth-seed", type=int, default=None)
    p.add_argument("--n-bs", type=int, default=64)
    p.add_argument("--n-days", type=int, default=10)
    p.add_argument("--n-classes", type=int, default=4)

    p = sub.add_parser("calibrate", help="fit the rate model on the training windows")
    p.add_argument("--out", help="write the rate model JSON here")
    _add_config_flags(p)
    return parser


def config_from_args(args):
    base = ExperimentConfig(seed=default_seed())
    items = parse_kv(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            items[f.name] = value
    return ExperimentConfig.from_items(items, base=base)


# ----------------------------------------------------------------- commands

def _checkpoint_prefix(path):
    if os.path.isdir(path):
        path = os.path.join(path, "model")
    if path.endswith(".ggnz") or path.endswith(".json"):
        path = path.rsplit(".", 1)[0]
    for ext in (".ggnz", ".json"):
        if not os.path.exists(path + ext):
            raise FileNotFoundError(f"checkpoint file {path + ext} not found")
    return path


def _emit(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_train(args):
    from .experiments import run_path, train_run

    cfg = config_from_args(args)
    run = train_run(cfg)
    last = run.history[-1]
    _emit({"run_dir": run_path(cfg), "fingerprint": cfg.fingerprint(), "sr": last.sr,
           "rate": last.rate, "beta_s": last.beta_s, "beta_c": last.beta_c})


def cmd_eval(args):
    from .experiments import evaluate_run, write_result
    from .model import GenZipModel

    prefix = _checkpoint_prefix(args.checkpoint)
    run_cfg = os.path.join(os.path.dirname(prefix), "config.txt")
    if args.config is None and os.path.exists(run_cfg):
        args.config = run_cfg
    cfg = config_from_args(args)
    model = GenZipModel.load(prefix)
    row = evaluate_run(model, cfg, split=args.split)
    suffix = "" if args.split == "test" else f"_{args.split}"
    tag = "_det" if cfg.deterministic else ""
    write_result(row, os.path.join(os.path.dirname(prefix), f"result{suffix}{tag}.json"))
    _emit(row.to_dict())


def cmd_sweep(args):
    from .experiments import sweep

    cfg = config_from_args(args)
    seeds = args.seeds if args.seeds is not None else [cfg.seed]
    out_dir, cells, results, dats = sweep(cfg, args.srs, args.crs, args.codecs, args.policies,
                                          seeds, x_axis=args.x_axis, jobs=cfg.jobs)
    failed = sum(1 for row, _ in results if row is None)
    with open(os.path.join(out_dir, "summary.tsv")) as fh:
        sys.stdout.write(fh.read())
    print(f"# {len(cells)} cells, {failed} failed; outputs in {out_dir}")
    if failed == len(cells):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_export_masks(args):
    from .experiments import export_masks
    from .model import GenZipModel

    model = GenZipModel.load(_checkpoint_prefix(args.checkpoint))
    for path in export_masks(model, args.out, args.tasks, args.classes, args.hours):
        print(path)


def cmd_compare_go(args):
    from .experiments import compare_go

    cfg = config_from_args(args).replace(mode="go")
    per_seed, table = compare_go(cfg, args.seeds, jobs=cfg.jobs)
    sys.stdout.write(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare_go.tsv"), "w") as fh:
            fh.write(table)
        with open(os.path.join(args.out, "compare_go.json"), "w") as fh:
            json.dump([{k: r.to_dict() for k, r in rows.items()} for rows in per_seed], fh,
                      indent=1)


def cmd_synth(args):
    from .data import save_manifest, synth_generate, write_csv

    seed = default_seed() if args.synth_seed is None else args.synth_seed
    ds = synth_generate(seed=seed, n_bs=args.n_bs, n_days=args.n_days,
                        n_classes=args.n_classes)
    write_csv(ds, args.out)
    manifest = os.path.splitext(args.out)[0] + ".manifest.json"
    save_manifest(ds, manifest)
    print(args.out)
    print(manifest)


def cmd_calibrate(args):
    from .codec import calibrate_rate_model
    from .experiments import load_dataset, training_windows

    cfg = config_from_args(args)
    windows = training_windows(cfg, load_dataset(cfg))
    model = calibrate_rate_model(windows.flat, cfg.effective_latent(windows.flat.shape[1]))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(model.to_dict(), fh, indent=1)
    _emit(model.to_dict())


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
    "export-masks": cmd_export_masks, "compare-go": cmd_compare_go, "synth": cmd_synth,
    "calibrate": cmd_calibrate,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = COMMANDS[args.verb](args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, CompatibilityError, ContainerFormatError, CorruptPayloadError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
