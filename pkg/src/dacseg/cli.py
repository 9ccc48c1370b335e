"""Command line entry point, ``dacseg <command>``.

Commands:

    gen-data   materialize a synthetic CD-SSDG benchmark (images, masks, manifest)
    train      train one or more seeded runs on a manifest
    eval       score a checkpoint on a manifest's target split
    ablate     train and score several variants over several seeds
    report     aggregate result CSVs into mean±std tables and bar charts

Outputs go to ``--out`` or, if omitted, under ``$DACSEG_OUT`` (default
``./runs``). Exit codes: 0 success, 2 usage, 3 data error, 4 numeric
divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .datagen import DatasetManifest, SceneSpec, build_cdssdg_split, load_sample, materialize
from .errors import ConfigError, DACError, DataError
from .evaluate import (evaluate_domain, format_summary_table, plot_domain_bars, read_results_csv,
                       result_rows, summarize, write_results_csv)
from .model import VARIANT_HEADS
from .trainer import (PRESETS, VARIANTS, TrainConfig, load_checkpoint, model_from_checkpoint, preset,
                      provenance, record_key, run_training, supervised_baseline)

log = logging.getLogger("dacseg")

ENV_OUT = "DACSEG_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

BENCHMARK_DEFAULTS = {
    "source_domains": ["A", "B", "C"],
    "target_domain": "D",
    "labeled_domain": "A",
    "labeled_ratio": 0.2,
    "per_domain_count": 80,
    "image_side": 64,
    "num_classes": 2,
    "seed": 0,
}


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def _read_json(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object at top level")
    return data


def _out_dir(args, name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(ENV_OUT, "runs")) / name


def _load_manifest(path) -> DatasetManifest:
    if path is None:
        raise ConfigError("--manifest is required")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def _class_names(k: int) -> list[str]:
    return ["disc", "cup"] if k == 2 else [f"class{i + 1}" for i in range(k)]


# -- gen-data --------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = {**BENCHMARK_DEFAULTS, **_read_json(args.config)}
    unknown = set(cfg) - set(BENCHMARK_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown benchmark keys: {sorted(unknown)}")
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = _out_dir(args, "benchmark")
    out.mkdir(parents=True, exist_ok=True)
    scene = SceneSpec(image_side=int(cfg["image_side"]), num_classes=int(cfg["num_classes"]))
    man = build_cdssdg_split(cfg["source_domains"], int(cfg["per_domain_count"]), cfg["labeled_domain"],
                             float(cfg["labeled_ratio"]), cfg["target_domain"], seed=int(cfg["seed"]),
                             scene=scene)
    if not args.synthetic_only:
        man = materialize(man, out)
        man.root = "."
    magic, rest = man.to_text().split("\n", 1)
    prov = f"dacseg {__version__} seed={cfg['seed']} config_hash={_hash(cfg)}"
    (out / "manifest.tsv").write_text(f"{magic}\n# provenance\t{prov}\n{rest}")
    print(f"wrote {len(man.records)} records ({len(man.labeled)} labeled, {len(man.unlabeled)} unlabeled, "
          f"{len(man.target)} target) to {out / 'manifest.tsv'}")
    return EXIT_OK


# -- train ------------------------------------------------------------------------

def train_config(args) -> TrainConfig:
    """Preset, then JSON overrides, then command-line flags."""
    d = preset(args.preset).to_dict()
    d.update(_read_json(args.config))
    if getattr(args, "variant", None):
        d["variant"] = args.variant
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        d["epochs"] = args.epochs
    cfg = TrainConfig.from_dict(d)
    if cfg.variant == "supervised":
        cfg = supervised_baseline(cfg)
    return cfg


def _write_config(cfg: TrainConfig, path: Path) -> None:
    heads = VARIANT_HEADS[cfg.variant]
    doc = {"provenance": provenance(cfg), "config": cfg.to_dict(), "uses_cfs": cfg.uses_cfs,
           "aux_heads": [f"{t}{k}" for t in ("loc", "rot") for k in heads[t]]}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _train_runs(cfg: TrainConfig, man: DatasetManifest, out: Path, runs: int):
    """Train ``runs`` seeds; returns ``[(run_dir, config), ...]``."""
    if runs < 1:
        raise ConfigError("--runs must be >= 1")
    done = []
    for k in range(runs):
        c = replace(cfg, seed=cfg.seed + k)
        run_dir = out / f"seed_{c.seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_config(c, run_dir / "config.json")
        log.info("training %s seed %d -> %s", c.variant, c.seed, run_dir)
        _, metrics = run_training(c, man, out_dir=run_dir)
        summary = {"provenance": provenance(c), "epochs": len(metrics), "final": metrics[-1] if metrics else {}}
        (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        done.append((run_dir, c))
    return done


def cmd_train(args) -> int:
    man = _load_manifest(args.manifest)
    cfg = train_config(args)
    out = _out_dir(args, f"train_{cfg.variant}")
    for d, _ in _train_runs(cfg, man, out, args.runs):
        final = json.loads((d / "summary.json").read_text())["final"]
        val = final.get("val_dsc")
        print(f"{d}: epochs={final.get('epoch')} total={final.get('total', float('nan')):.4f}"
              + (f" val_dsc={val:.2f}" if val is not None else ""))
    return EXIT_OK


# -- eval -------------------------------------------------------------------------

def check_no_leak(meta: dict, man: DatasetManifest) -> None:
    """Refuse to score a target the checkpoint trained on."""
    td = man.target_domain
    if td is None:
        raise DataError("manifest has no target domain to evaluate")
    if td in meta.get("source_domains", []):
        raise DataError(f"target domain {td!r} was a source domain of the checkpoint's training manifest")
    seen = set(meta.get("train_records", []))
    leaked = [record_key(r) for r in man.target if record_key(r) in seen]
    if leaked:
        raise DataError(f"{len(leaked)} target records were used in training (first: {leaked[0]})")


def evaluate_checkpoint(ckpt_path, man: DatasetManifest):
    rec = load_checkpoint(ckpt_path)
    check_no_leak(rec.model_meta, man)
    net, cfg = model_from_checkpoint(rec)
    samples = [load_sample(man, r, cfg.crop_size) for r in man.target if r.has_label]
    if not samples:
        raise DataError(f"target domain {man.target_domain!r} has no labeled records")
    result = evaluate_domain(net.sub1, net.sub2, samples, man.target_domain, cfg.sigma)
    labeled = rec.model_meta.get("labeled_domain") or man.labeled_domain or ""
    rows = result_rows(result, cfg.seed, man.target_domain, labeled, _class_names(len(result.per_class_dsc)))
    return rows, cfg


def cmd_eval(args) -> int:
    man = _load_manifest(args.manifest)
    rows, cfg = evaluate_checkpoint(args.checkpoint, man)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(out / "results.csv", rows, [provenance(cfg)])
    for r in rows:
        print(f"{r['target_domain']}\t{r['class']}\tDSC {float(r['dsc']):.2f}\tIoU {float(r['iou']):.2f}")
    return EXIT_OK


# -- ablate -----------------------------------------------------------------------

ABLATION_COLUMNS = ["variant", "class", "runs", "dsc_mean", "dsc_std", "iou_mean", "iou_std"]


def cmd_ablate(args) -> int:
    man = _load_manifest(args.manifest)
    variants = args.variants.split(",") if args.variants else ["supervised"] + [v for v in VARIANTS if v != "supervised"]
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}; choose from {VARIANTS}")
    out = _out_dir(args, "ablation")
    table = []
    for v in variants:
        args.variant = v
        cfg = train_config(args)
        rows = []
        for d, c in _train_runs(cfg, man, out / v, args.runs):
            run_rows, _ = evaluate_checkpoint(d / "last.pt", man)
            write_results_csv(d / "results.csv", run_rows, [provenance(c)])
            rows += run_rows
        write_results_csv(out / v / "results.csv", rows, [provenance(cfg) + f" runs={args.runs}"])
        for s in summarize(rows):
            table.append({"variant": v, "class": s["class"], "runs": s["runs"],
                          **{k: f"{s[k]:.4f}" for k in ABLATION_COLUMNS[3:]}})
    with (out / "ablation.csv").open("w", newline="") as fh:
        fh.write(f"# dacseg {__version__} seed={args.seed if args.seed is not None else 'preset'} "
                 f"config_hash={_hash([args.preset, args.config, variants, args.runs])}\n")
        w = csv.DictWriter(fh, fieldnames=ABLATION_COLUMNS)
        w.writeheader()
        w.writerows(table)
    for row in table:
        print(f"{row['variant']:<14}{row['class']:<8}DSC {float(row['dsc_mean']):6.2f} ± {float(row['dsc_std']):.2f}")
    return EXIT_OK


# -- report -----------------------------------------------------------------------

SUMMARY_COLUMNS = ["target_domain", "labeled_domain", "class", "runs", "dsc_mean", "dsc_std", "iou_mean", "iou_std"]


def _result_files(inputs) -> list[Path]:
    files = []
    for p in map(Path, inputs):
        if p.is_dir():
            files += sorted(p.rglob("results.csv"))
        elif p.exists():
            files.append(p)
        else:
            raise ConfigError(f"no such results file or directory: {p}")
    if not files:
        raise DataError(f"no results.csv found under {list(inputs)}")
    return files


def cmd_report(args) -> int:
    files = _result_files(args.inputs)
    rows = []
    for f in files:
        try:
            rows += read_results_csv(f)
        except (KeyError, csv.Error) as e:
            raise DataError(f"{f}: malformed results file ({e})") from e
    # the same run may appear in a per-run and a merged file
    uniq = {(r["run_seed"], r["target_domain"], r["labeled_domain"], r["class"]): r for r in rows}
    summary = summarize(list(uniq.values()))
    out = _out_dir(args, "report")
    out.mkdir(parents=True, exist_ok=True)
    prov = (f"dacseg {__version__} seed={','.join(sorted({r['run_seed'] for r in uniq.values()}))} "
            f"config_hash={_hash(sorted(str(f) for f in files))}")
    with (out / "summary.csv").open("w", newline="") as fh:
        fh.write(f"# {prov}\n")
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for s in summary:
            w.writerow({k: f"{s[k]:.4f}" if isinstance(s[k], float) else s[k] for k in SUMMARY_COLUMNS})
    table = format_summary_table(summary)
    (out / "summary.txt").write_text(f"# {prov}\n{table}\n")
    plots = plot_domain_bars(summary, out, provenance=prov)
    print(table)
    print(f"wrote {out / 'summary.csv'} and {len(plots)} plot(s)")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dacseg", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"dacseg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_help="base seed (run k uses seed + k)"):
        sp.add_argument("--config", help="JSON file with overrides")
        sp.add_argument("--out", help=f"output directory (default: ${ENV_OUT}/<command>)")
        sp.add_argument("--seed", type=int, help=seed_help)

    g = sub.add_parser("gen-data", help="write a synthetic benchmark")
    common(g, "benchmark seed")
    g.add_argument("--synthetic-only", action="store_true",
                   help="write only the seed-based manifest, no image files")
    g.set_defaults(func=cmd_gen_data)

    for name, func, helptext in (("train", cmd_train, "train seeded runs"),
                                 ("ablate", cmd_ablate, "train and score variants")):
        t = sub.add_parser(name, help=helptext)
        common(t)
        t.add_argument("--manifest", required=True)
        t.add_argument("--preset", default="desk", choices=sorted(PRESETS))
        t.add_argument("--runs", type=int, default=1 if name == "train" else 3)
        t.add_argument("--epochs", type=int, help="override the preset's epoch count")
        if name == "train":
            t.add_argument("--variant", choices=VARIANTS)
        else:
            t.add_argument("--variants", help="comma-separated list (default: all)")
        t.set_defaults(func=func)

    e = sub.add_parser("eval", help="score a checkpoint on the target split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", help="output directory (default: next to the checkpoint)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="aggregate results.csv files")
    r.add_argument("inputs", nargs="+", help="results CSV files or directories to search")
    r.add_argument("--out", help=f"output directory (default: ${ENV_OUT}/report)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DACError as e:
        print(f"dacseg: error: {e}", file=sys.stderr)
        return e.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"dacseg: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
