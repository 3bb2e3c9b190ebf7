"""Command-line front door: ``dividemix {run,ablate,sweep,export-plots,validate-config}``.

Exit status is 0 on success, 2 for configuration or input errors and 3 when
training hits a numerical failure.
"""
import argparse
import csv
import glob
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace

from . import config as config_mod
from .errors import ConfigError, FormatError, NumericalError
from .gmm import read_division_csv
from .metrics import histogram_counts
from .trainer import check_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SWEEP_RATIOS = (0.2, 0.5, 0.8, 0.9)

# name -> ablation flags; "full" is the unmodified method
ABLATION_MATRIX = {
    "full": "",
    "single-model-test": "single-model-test",
    "no-co-training": "self-divide",
    "no-refinement": "no-refinement",
    "no-augmentation": "no-augmentation",
    "divide-and-mixmatch": "plain-mixmatch",
}


def _parse_seeds(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        seeds = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--seed: expected two integers, got {text!r}", field="train.seeds") from None
    if len(seeds) != 2 or min(seeds) < 0:
        raise ConfigError(f"--seed: expected two non-negative integers, got {text!r}", field="train.seeds")
    return seeds


def _merge_flags(base, extra):
    on = {f.name: getattr(base, f.name) or getattr(extra, f.name) for f in fields(base)}
    return replace(base, **on)


def build_config(args):
    """Config file (or defaults) with command-line overrides applied, validated."""
    cfg = config_mod.load(args.config) if getattr(args, "config", None) else config_mod.TrainConfig()
    if getattr(args, "seed", None):
        cfg = replace(cfg, train=replace(cfg.train, seeds=_parse_seeds(args.seed)))
    if getattr(args, "noise_ratio", None) is not None:
        cfg = replace(cfg, noise=replace(cfg.noise, ratio=args.noise_ratio))
    if getattr(args, "noise_kind", None):
        cfg = replace(cfg, noise=replace(cfg.noise, kind=args.noise_kind))
    if getattr(args, "method", None):
        cfg = replace(cfg, train=replace(cfg.train, method=args.method))
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if getattr(args, "ablation", None):
        cfg = replace(cfg, ablation=_merge_flags(cfg.ablation, config_mod.parse_ablation(args.ablation)))
    if getattr(args, "name", None):
        cfg = replace(cfg, run_name=args.name)
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    config_mod.validate(cfg)
    return cfg


def _run_one(cfg, run_dir):
    history = run_experiment(cfg, run_dir=run_dir)
    return run_dir, history.summary()


def _workers():
    try:
        return max(1, int(os.environ.get("DIVIDEMIX_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def _run_many(jobs, parallel):
    """Run ``(cfg, run_dir)`` jobs; each writes to its own directory."""
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(_workers(), len(jobs))) as pool:
            futures = [pool.submit(_run_one, cfg, d) for cfg, d in jobs]
            return [f.result() for f in futures]
    return [_run_one(cfg, d) for cfg, d in jobs]


def _report(results, out=sys.stdout):
    for run_dir, summary in results:
        print(f"{run_dir}: best {summary['best']:.4f} last10 {summary['last10']:.4f}", file=out)


def cmd_run(args):
    cfg = build_config(args)
    run_dir = os.path.join(cfg.out_dir, cfg.run_name)
    _report([_run_one(cfg, run_dir)])
    return EXIT_OK


def cmd_ablate(args):
    base = build_config(args)
    jobs = []
    for name, flags in ABLATION_MATRIX.items():
        cfg = replace(base, run_name=f"{base.run_name}_{name}",
                      ablation=_merge_flags(base.ablation, config_mod.parse_ablation(flags)))
        jobs.append((cfg, os.path.join(base.out_dir, cfg.run_name)))
    _report(_run_many(jobs, args.parallel))
    return EXIT_OK


def cmd_sweep(args):
    base = build_config(args)
    try:
        ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    except ValueError:
        raise ConfigError(f"--ratios: not a list of numbers: {args.ratios!r}", field="noise.ratio") from None
    jobs = []
    for r in ratios:
        cfg = replace(base, run_name=f"{base.run_name}_r{r:.2f}", noise=replace(base.noise, ratio=r))
        config_mod.validate(cfg)
        jobs.append((cfg, os.path.join(base.out_dir, cfg.run_name)))
    _report(_run_many(jobs, args.parallel))
    return EXIT_OK


def _read_log(run_dir):
    path = os.path.join(run_dir, "log.jsonl")
    if not os.path.exists(path):
        raise FormatError(f"{run_dir}: no log.jsonl")
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _cell(v):
    return "" if v is None else repr(v) if isinstance(v, float) else v


def export_plots(run_dir, out_dir=None, bins=50):
    """Write ``accuracy.csv``, ``auc.csv`` and ``loss_hist_epoch_<e>.csv`` files.

    Histograms need the per-epoch division dumps of the run.  Returns the
    paths written.
    """
    out_dir = out_dir or os.path.join(run_dir, "plots")
    os.makedirs(out_dir, exist_ok=True)
    records = _read_log(run_dir)
    written = []

    acc_keys = ["acc", "acc_ensemble", "acc_net1", "acc_net2"]
    path = os.path.join(out_dir, "accuracy.csv")
    _write_csv(path, ["epoch", "phase"] + acc_keys,
               [[r["epoch"], r["phase"]] + [_cell(r.get(k)) for k in acc_keys] for r in records])
    written.append(path)

    path = os.path.join(out_dir, "auc.csv")
    _write_csv(path, ["epoch", "auc_net1", "auc_net2"],
               [[r["epoch"], _cell(r.get("auc_net1")), _cell(r.get("auc_net2"))] for r in records])
    written.append(path)

    dumps = {}
    for p in glob.glob(os.path.join(run_dir, "divisions", "epoch_*_net*.csv")):
        m = re.search(r"epoch_(\d+)_net(\d)\.csv$", p)
        if m:
            dumps.setdefault(int(m.group(1)), {})[int(m.group(2))] = p
    for epoch in sorted(dumps):
        header = ["bin_left", "bin_right"]
        columns = []
        for k in sorted(dumps[epoch]):
            d = read_division_csv(dumps[epoch][k])
            edges, clean, noisy = histogram_counts(d["normalized_loss"], d["is_noise"], bins)
            header += [f"clean_net{k}", f"noisy_net{k}"]
            columns += [clean, noisy]
        rows = [[repr(float(edges[i])), repr(float(edges[i + 1]))] + [int(c[i]) for c in columns]
                for i in range(bins)]
        path = os.path.join(out_dir, f"loss_hist_epoch_{epoch}.csv")
        _write_csv(path, header, rows)
        written.append(path)
    return written


def cmd_export_plots(args):
    paths = export_plots(args.run_dir, args.out)
    print(f"wrote {len(paths)} files to {os.path.dirname(paths[0])}")
    return EXIT_OK


def cmd_validate_config(args):
    cfg = check_config(build_config(args))
    print(f"{args.config or '<defaults>'}: ok")
    if args.show:
        print(config_mod.dumps(cfg), end="")
    return EXIT_OK


def _add_common(p, out=True):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", help="two network seeds, e.g. 1,2")
    p.add_argument("--noise-ratio", type=float)
    p.add_argument("--noise-kind", choices=["sym-all", "sym-excl", "asym"])
    p.add_argument("--ablation", help="comma-separated ablation flags")
    p.add_argument("--method", choices=["dividemix", "ce"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--name", help="run name (directory under --out)")
    if out:
        p.add_argument("--out", help="output directory")


def make_parser():
    parser = argparse.ArgumentParser(prog="dividemix", description="Noisy-label training experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="train every ablation variant")
    _add_common(p)
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="train over a list of noise ratios")
    _add_common(p)
    p.add_argument("--ratios", default=",".join(str(r) for r in SWEEP_RATIOS))
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-plots", help="convert a run's logs to plot-ready CSV")
    p.add_argument("run_dir")
    p.add_argument("--out", help="destination (default <run_dir>/plots)")
    p.set_defaults(func=cmd_export_plots)

    p = sub.add_parser("validate-config", help="check a config without running it")
    _add_common(p, out=False)
    p.add_argument("--show", action="store_true", help="print the resolved config")
    p.set_defaults(func=cmd_validate_config)
    return parser


def run_cli(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        msg = str(exc)
        if not re.match(r"^.+:\d+: ", msg):
            msg = f"{getattr(args, 'config', None) or '<command line>'}:{exc.line or 1}: {msg}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(run_cli())
