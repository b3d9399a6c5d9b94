"""Command-line harness: dataset generation, robustness sweeps, loss assembly.

Exit codes: 0 success, 2 configuration error, 3 estimator failures exceeded
the allowed threshold.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .augmentation import KINDS, sweep_grid
from .body_model import TemplateError, load_template, make_synthetic_template, save_template

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATOR = 3


class ConfigError(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robomesh")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tpl = sub.add_parser("make-template", help="write a synthetic test template")
    p_tpl.add_argument("--out", required=True)
    p_tpl.add_argument("--joints", type=int, default=6)
    p_tpl.add_argument("--ring", type=int, default=8, help="vertices per joint ring")
    p_tpl.add_argument("--shapes", type=int, default=4)
    p_tpl.add_argument("--seed", type=int, default=0)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    p_gen.add_argument("--template", required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--pose-scale", type=float, default=0.3)
    p_gen.add_argument("--image-size", type=int, default=64)

    p_sweep = sub.add_parser("sweep", help="run a robustness sweep")
    p_sweep.add_argument("--dataset", required=True)
    p_sweep.add_argument("--estimator", default="passthrough")
    p_sweep.add_argument("--kinds", default="all", help="comma list or 'all'")
    p_sweep.add_argument("--steps", type=int, default=7)
    p_sweep.add_argument("--metrics", default="mpjpe,pa_mpjpe,pve,pa_pve,pvE2d,iou")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--max-failures", type=int, default=0)
    p_sweep.add_argument("--format", choices=["csv", "json"], default=None)

    p_loss = sub.add_parser("losses", help="assemble the weighted total loss")
    p_loss.add_argument("--config", help="JSON file of lambda_* weights")
    p_loss.add_argument("--inputs", required=True, help="JSON file of per-term values")
    return parser


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def cmd_make_template(args) -> int:
    template = make_synthetic_template(
        joint_count=args.joints,
        ring_size=args.ring,
        shape_count=args.shapes,
        seed=args.seed,
    )
    save_template(template, args.out)
    print(f"wrote template: {args.out} (V={template.vertex_count}, J={template.joint_count})")
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        template = load_template(args.template)
    except (FileNotFoundError, TemplateError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    samples = harness.gen_dataset(
        template,
        args.n,
        rng_seed=args.seed,
        pose_scale=args.pose_scale,
        image_size=args.image_size,
    )
    harness.save_dataset(args.out, samples, template, args.seed)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        dataset, template, _ = harness.load_dataset(args.dataset)
    except (FileNotFoundError, json.JSONDecodeError, TemplateError, KeyError) as exc:
        raise ConfigError(f"cannot load dataset {args.dataset}: {exc}") from exc
    try:
        estimator = harness.make_estimator(args.estimator)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    kinds = KINDS if args.kinds == "all" else tuple(k.strip() for k in args.kinds.split(","))
    for kind in kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown augmentation kind '{kind}'")
    if args.steps < 2:
        raise ConfigError("--steps must be >= 2")
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for m in metric_names:
        if m not in harness.SWEEP_METRICS:
            raise ConfigError(f"unknown metric '{m}'")
    grids = {kind: sweep_grid(kind, args.steps) for kind in kinds}
    report = harness.run_sweep(
        estimator, dataset, grids, metric_names, template, seed=args.seed, jobs=args.jobs
    )
    fmt = args.format or ("json" if args.out.endswith(".json") else "csv")
    harness.emit_report(report, fmt, args.out)
    failures = report.metadata.get("failures", 0)
    print(f"wrote report to {args.out} ({len(report.rows)} rows, {failures} failures)")
    if failures > args.max_failures:
        print(
            f"error: {failures} estimator failures exceed --max-failures={args.max_failures}",
            file=sys.stderr,
        )
        return EXIT_ESTIMATOR
    return EXIT_OK


def cmd_losses(args) -> int:
    weights_payload = _read_json(args.config) if args.config else {}
    terms = _read_json(args.inputs)
    try:
        weights = harness.LossWeights.from_dict(weights_payload)
        total, breakdown = harness.total_loss(terms, weights)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps({"total": total, "breakdown": breakdown}, indent=1))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "make-template": cmd_make_template,
        "gen": cmd_gen,
        "sweep": cmd_sweep,
        "losses": cmd_losses,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
