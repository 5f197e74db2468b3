"""Command line entry point: train, evaluate, gradcheck, landscape, beta-sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from multirobust import __version__
from multirobust.checkpoint import load_checkpoint
from multirobust.config import (
    apply_override,
    config_from_dict,
    fingerprint,
    load_config,
    parse_override,
)
from multirobust.evaluation import (
    beta_sweep,
    evaluate,
    landscape_directions,
    loss_landscape_grid,
    write_correctness_csv,
    write_grid_csv,
)
from multirobust.experiment import build_attacks, build_dataset, build_state, train_experiment


def _load_config_with_overrides(args):
    with open(args.config) as fh:
        data = json.load(fh)
    for raw in args.set or []:
        key, value = parse_override(raw)
        apply_override(data, key, value)
    return config_from_dict(data)


def _restore(config, checkpoint_path):
    dataset = build_dataset(config)
    state = build_state(config, dataset)
    meta = load_checkpoint(checkpoint_path, state)
    expected = fingerprint(config)
    if meta["config_fingerprint"] and meta["config_fingerprint"] != expected:
        raise ValueError(
            "checkpoint was produced by a different config "
            f"({meta['config_fingerprint'][:12]} != {expected[:12]})"
        )
    return dataset, state


def cmd_train(args) -> int:
    config = _load_config_with_overrides(args)
    _, report = train_experiment(config, resume_from=args.resume)
    print(report.table())
    print(f"artifacts written to {config.output_dir}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config_with_overrides(args)
    dataset, state = _restore(config, args.checkpoint)
    if args.attacks:
        names = [n.strip() for n in args.attacks.split(",") if n.strip()]
        from multirobust.attacks import make_attack

        suite = [make_attack(n, dataset.input_dim, for_eval=True) for n in names]
    else:
        suite = build_attacks(config, dataset.input_dim, for_eval=True)
    report, correctness = evaluate(
        state.model, dataset.test_x, dataset.test_y, suite,
        seed=config.seeds.attack + 7919, config_fingerprint=fingerprint(config),
    )
    out = Path(args.output or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    (out / "metrics.txt").write_text(report.table() + "\n")
    write_correctness_csv(out / "correctness.csv", correctness, suite)
    print(report.table())
    return 0


def cmd_gradcheck(args) -> int:
    from multirobust.gradcheck import run_gradcheck_suite

    reports = run_gradcheck_suite(seed=args.seed, tolerance=args.tolerance)
    payload = [json.loads(r.to_json()) for r in reports]
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return 0 if all(r.passed for r in reports) else 1


def cmd_landscape(args) -> int:
    config = _load_config_with_overrides(args)
    dataset, state = _restore(config, args.checkpoint)
    example = dataset.test_x[args.index]
    label = dataset.test_y[args.index]
    dir1, dir2 = landscape_directions(state.model, example, label, seed=config.seeds.attack)
    grid = loss_landscape_grid(
        state.model, example, label, dir1, dir2, extent=args.extent, resolution=args.resolution
    )
    out = Path(args.output or Path(config.output_dir) / f"landscape_{args.index}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid_csv(out, grid)
    print(f"{grid.shape[0]}x{grid.shape[1]} landscape grid written to {out}")
    return 0


def cmd_beta_sweep(args) -> int:
    config = _load_config_with_overrides(args)
    betas = [float(b) for b in args.betas.split(",")]
    reports = beta_sweep(config, betas)
    rows = []
    for beta, report in zip(betas, reports):
        rows.append(
            {
                "beta": beta,
                "acc_clean": report.acc_clean,
                "acc_union": report.acc_union,
                "acc_avg": report.acc_avg,
                "per_attack": report.per_attack,
            }
        )
    text = json.dumps(rows, indent=2, sort_keys=True)
    out = Path(args.output or Path(config.output_dir) / "beta_sweep.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multirobust",
        description="Train and evaluate classifiers robust to multiple lp perturbations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="dotted-path config override, e.g. trainer.beta=12",
        )

    p = sub.add_parser("train", help="train a model and write artifacts")
    add_config(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint against attacks")
    add_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attacks", help="comma-separated attack names (default: config eval suite)")
    p.add_argument("--output", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--output", help="write the JSON report here")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("landscape", help="export a loss-landscape grid as CSV")
    add_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", type=int, default=0, help="test example index")
    p.add_argument("--extent", type=float, default=0.1)
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--output")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("beta-sweep", help="train once per beta and compare")
    add_config(p)
    p.add_argument("--betas", default="0,4,12", help="comma-separated beta values")
    p.add_argument("--output", help="write the JSON summary here")
    p.set_defaults(func=cmd_beta_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # surface a diagnostic, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
