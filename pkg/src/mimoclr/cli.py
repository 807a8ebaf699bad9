"""Operator entry point.

    mimoclr generate  --config desk --out data/desk
    mimoclr pretrain  data/desk --config desk --out runs/pre
    mimoclr finetune  data/desk --config desk --task positioning \\
                      --init pretrained --checkpoint runs/pre/pretrain.ckpt \\
                      --labels 200 --seeds 5 --out runs/ft
    mimoclr report    runs/ft/*.json

Every command prints an effective-config echo; re-running with the echoed
config and seed reproduces outputs bit-identically.  Exit codes: 0 success,
2 configuration problems, 3 data problems, 4 training divergence.
"""

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys

import numpy as np
import yaml

from . import chanmodel, config as cfgmod, datapipe, finetune as ft, pretrain as pt
from .errors import (ConfigError, ContractError, DataError, DegenerateDataError,
                     GenerationError, MimoclrError, TrainingDivergenceError)
from .nncore import checkpoint as ckpt

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _echo(command: str, payload: dict) -> None:
    text = yaml.safe_dump({"command": command, **payload}, sort_keys=False).rstrip()
    for line in text.splitlines():
        print(f"# {line}")


def cmd_generate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    ds_params = cfgmod.dataset_params(cfg)
    seed = ds_params["seed"] if args.seed is None else args.seed
    scen_cfgs = cfgmod.scenario_configs(cfg)
    _echo("generate", {"seed": seed, "out": args.out,
                       "dataset": {**ds_params, "seed": seed,
                                   "scenarios": [dataclasses.asdict(c) for c in scen_cfgs]}})

    scenarios = [(c, chanmodel.generate_scenario(c, seed)) for c in scen_cfgs]
    if ds_params["cap"] is not None:
        keep = datapipe.stratified_cap([len(s) for _, s in scenarios], ds_params["cap"], seed)
        scenarios = [(c, [s[i] for i in idx]) for (c, s), idx in zip(scenarios, keep)]

    os.makedirs(args.out, exist_ok=True)
    manifest_path = os.path.join(args.out, "manifest.json")
    records_path = os.path.join(args.out, "samples.bin")
    manifest = datapipe.write_dataset(scenarios, manifest_path, records_path, seed)
    datapipe.split_dataset(manifest, ds_params["train_fraction"], seed)
    datapipe.save_manifest(manifest, manifest_path)
    dataset = datapipe.open_dataset(manifest_path)
    datapipe.attach_norm_stats(manifest, dataset)
    datapipe.save_manifest(manifest, manifest_path)

    n_train = int(np.sum(np.asarray(manifest["split"]) == 1))
    print(f"wrote {manifest['n_records']} records -> {records_path}")
    for c, samples in scenarios:
        print(f"  scenario {c.scenario_id}: {len(samples)} samples")
    print(f"split: {n_train} train / {manifest['n_records'] - n_train} val")
    print(f"records sha256: {manifest['records_sha256']}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = cfgmod.load_config(args.config)
    pcfg = cfgmod.pretrain_config(cfg, seed=args.seed)
    _echo("pretrain", {"data": args.data, "out": args.out, "resume": bool(args.resume),
                       "epochs_cap": args.epochs, "pretrain": dataclasses.asdict(pcfg)})
    dataset = datapipe.open_dataset(os.path.join(args.data, "manifest.json"))
    state, rows = pt.run_pretraining(dataset, pcfg, args.out, resume=args.resume,
                                     max_epochs=args.epochs)
    last = rows[-1] if rows else {}
    print(f"pretraining finished at epoch {state.epoch} "
          f"(best val loss {state.best_val_loss:.4f}, tau {state.tau():.4f})")
    if last:
        print(f"last epoch: train {last['train_loss']:.4f}, val {last['val_loss']:.4f}, "
              f"retrieval {last['retrieval']:.3f}")
    print(f"checkpoint: {os.path.join(args.out, 'pretrain.ckpt')}")
    print(f"metrics:    {os.path.join(args.out, 'pretrain_metrics.jsonl')}")
    return 0


def _finetune_one(payload: dict) -> dict:
    """One (seed, init) fine-tuning run; safe to call in a worker process."""
    dataset = datapipe.open_dataset(os.path.join(payload["data"], "manifest.json"))
    fcfg = ft.FinetuneConfig.from_dict(payload["fcfg"])
    init_mode = "pretrained" if payload["init"] == "probe" else payload["init"]
    run = ft.init_finetune_run(dataset, payload["task"], init_mode, payload["seed"], fcfg,
                               checkpoint_path=payload["checkpoint"],
                               freeze_encoder=payload["init"] == "probe")
    ft.finetune(run, dataset, payload["epochs"])
    summary = ft.finetune_summary(run, dataset)
    summary["init"] = payload["init"]

    stem = f"{run.task.kind}_{payload['init']}_seed{payload['seed']}"
    os.makedirs(payload["out"], exist_ok=True)
    tensors = {f"encoder.{k}": p.data for k, p in run.encoder.params.items()}
    tensors.update({f"head.{k}": p.data for k, p in run.head.params.items()})
    if run.target_mean is not None:
        tensors["target_mean"] = run.target_mean
        tensors["target_std"] = run.target_std
    ckpt.save_checkpoint(os.path.join(payload["out"], stem + ".ckpt"),
                         {"kind": "finetune", **summary}, tensors)
    art_path = os.path.join(payload["out"], stem + ".json")
    with open(art_path + ".tmp", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=1)
        f.write("\n")
    os.replace(art_path + ".tmp", art_path)
    summary["artifact"] = art_path
    return summary


def cmd_finetune(args) -> int:
    cfg = cfgmod.load_config(args.config)
    fcfg = cfgmod.finetune_config(cfg, label_budget=args.labels, epochs=args.epochs)
    if args.init in ("pretrained", "probe") and not args.checkpoint:
        raise ConfigError(f"--init {args.init} needs --checkpoint")
    seeds = list(range(args.seed, args.seed + args.seeds))
    _echo("finetune", {"data": args.data, "out": args.out, "task": args.task,
                       "init": args.init, "checkpoint": args.checkpoint, "seeds": seeds,
                       "finetune": dataclasses.asdict(fcfg)})
    payloads = [{"data": args.data, "task": args.task, "init": args.init,
                 "checkpoint": args.checkpoint, "seed": s, "out": args.out,
                 "epochs": None, "fcfg": dataclasses.asdict(fcfg)} for s in seeds]
    if args.jobs > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_finetune_one, payloads))
    else:
        summaries = [_finetune_one(p) for p in payloads]
    for s in summaries:
        print(f"{s['task']} {s['init']} seed {s['seed']}: "
              f"{s['metric_name']} {s['val_metric']:.4f} "
              f"(best epoch {s['best_epoch']}) -> {s['artifact']}")
    return 0


def _fmt(value, metric_name: str) -> str:
    if value is None:
        return "-"
    return f"{value:.2f}" if metric_name == "mean_error_m" else f"{value:.4f}"


def cmd_report(args) -> int:
    artifacts = []
    for path in args.artifacts:
        try:
            with open(path, "r", encoding="utf-8") as f:
                artifacts.append(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read run artifact {path}: {e}") from e
    _echo("report", {"n_artifacts": len(artifacts)})

    by_task = {}
    for a in artifacts:
        if a.get("kind") != "finetune":
            raise DataError(f"not a fine-tuning artifact: {a.get('kind')!r}")
        by_task.setdefault(a["task"], []).append(a)

    report = {"tasks": {}}
    lines = []
    for task in sorted(by_task):
        runs = by_task[task]
        metric_name = runs[0]["metric_name"]
        seeds = sorted({r["seed"] for r in runs})
        cols = {}
        for r in runs:
            cols.setdefault(r["init"], {})[r["seed"]] = r["val_metric"]
        rows = []
        for seed in seeds:
            pre = cols.get("pretrained", {}).get(seed)
            scr = cols.get("scratch", {}).get(seed)
            probe = cols.get("probe", {}).get(seed)
            if pre is not None and scr is not None:
                imp = ft.improvement_report(pre, scr, task)
                rel, absd = imp["relative_pct"], imp["absolute_delta"]
            else:
                rel, absd = None, None
            rows.append({"seed": seed, "scratch": scr, "pretrained": pre, "probe": probe,
                         "relative_pct": rel, "absolute_delta": absd})
        med = {}
        for init in ("scratch", "pretrained", "probe"):
            vals = [v for v in cols.get(init, {}).values() if v is not None]
            med[init] = float(np.median(vals)) if vals else None
        if med["pretrained"] is not None and med["scratch"] is not None:
            imp = ft.improvement_report(med["pretrained"], med["scratch"], task)
            med["relative_pct"], med["absolute_delta"] = imp["relative_pct"], imp["absolute_delta"]
        else:
            med["relative_pct"], med["absolute_delta"] = None, None
        report["tasks"][task] = {"metric": metric_name, "rows": rows, "median": med}

        direction = "lower is better" if metric_name == "mean_error_m" else "higher is better"
        lines.append(f"== {task} ({metric_name}; {direction}) ==")
        header = f"{'seed':>6} {'scratch':>12} {'pretrained':>12} {'probe':>12} {'improvement':>12}"
        lines.append(header)
        for row in rows:
            imp_s = "-" if row["relative_pct"] is None else f"{row['relative_pct']:+.2f}%"
            lines.append(f"{row['seed']:>6} {_fmt(row['scratch'], metric_name):>12} "
                         f"{_fmt(row['pretrained'], metric_name):>12} "
                         f"{_fmt(row['probe'], metric_name):>12} {imp_s:>12}")
        imp_s = "-" if med["relative_pct"] is None else f"{med['relative_pct']:+.2f}%"
        lines.append(f"{'median':>6} {_fmt(med['scratch'], metric_name):>12} "
                     f"{_fmt(med['pretrained'], metric_name):>12} "
                     f"{_fmt(med['probe'], metric_name):>12} {imp_s:>12}")
        lines.append("")

    text = "\n".join(lines).rstrip()
    if text:
        print(text)
    else:
        print("no artifacts to report")
    if args.json:
        with open(args.json + ".tmp", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=1)
            f.write("\n")
        os.replace(args.json + ".tmp", args.json)
        print(f"json report: {args.json}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mimoclr",
        description="Synthetic MIMO channel workbench: dataset generation, "
                    "contrastive CSI/CIR pretraining, and downstream evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset from a scenario config")
    g.add_argument("--config", required=True, help="config file path or preset name "
                   f"({', '.join(cfgmod.builtin_presets())})")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--seed", type=int, help="override dataset.seed")
    g.set_defaults(fn=cmd_generate)

    q = sub.add_parser("pretrain", help="contrastive pretraining on a dataset")
    q.add_argument("data", help="dataset directory (from generate)")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True, help="run directory for checkpoint + metrics")
    q.add_argument("--seed", type=int, help="override pretrain.seed")
    q.add_argument("--epochs", type=int, help="cap the epoch count")
    q.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    q.set_defaults(fn=cmd_pretrain)

    f = sub.add_parser("finetune", help="supervised adaptation, pretrained or scratch")
    f.add_argument("data", help="dataset directory")
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True, help="directory for run artifacts")
    f.add_argument("--task", required=True,
                   help="positioning | beam | los (aliases accepted)")
    f.add_argument("--init", required=True, choices=["pretrained", "scratch", "probe"],
                   help="probe = frozen pretrained encoder, head-only training")
    f.add_argument("--checkpoint", help="pretraining checkpoint (for pretrained/probe)")
    f.add_argument("--labels", type=int, help="label budget (0 = full training split)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--seeds", type=int, default=1, help="run this many consecutive seeds")
    f.add_argument("--jobs", type=int, default=1, help="parallel workers across seeds")
    f.add_argument("--epochs", type=int)
    f.set_defaults(fn=cmd_finetune)

    r = sub.add_parser("report", help="comparison tables from run artifacts")
    r.add_argument("artifacts", nargs="+", help="run artifact JSON files")
    r.add_argument("--json", help="also write the report as JSON to this path")
    r.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateDataError, GenerationError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except ContractError as e:
        print(f"internal contract violation: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
