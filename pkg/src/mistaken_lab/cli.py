"""Command-line entry point.

Exit status: 0 success, 1 bad input (usage, config, scene or dataset
validation), 2 file-system errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config, save_manifest
from .evaluation import (
    ABLATIONS,
    TABLE1_METHODS,
    EvalReport,
    FeatureBank,
    TaskKind,
    balance,
    fit_method,
    method_by_name,
    run_methods,
    run_task,
    score_pairs,
    split_dataset,
    task_examples,
)
from .features import Variant
from .generator import (
    InfeasibleTargetsError,
    dataset_stats,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .model import load_model, save_model
from .scene import interpolate_frame, loads_scene, render_svg

MANIFEST = "run-manifest.json"
_INPUT_ERRORS = (ValueError, InfeasibleTargetsError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _default_jobs() -> int:
    raw = os.environ.get("MISTAKEN_LAB_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_report(report: EvalReport, out: Path, title: str) -> dict:
    from .plotting import plot_results

    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "results.md").write_text(report.to_markdown(title), encoding="utf-8")
    plot_results(report, out / "results.svg", title)
    return {"medians": {f"{m}/{t}": report.median(m, t) for (m, t) in report.values}}


# ----------------------------------------------------------------- commands

def cmd_generate(args, cfg: RunConfig) -> dict:
    count = args.count if args.count is not None else cfg.count
    seed = args.seed if args.seed is not None else cfg.gen_seed
    try:
        ds = generate_dataset(count, seed, cfg.targets)
    except InfeasibleTargetsError as exc:
        save_dataset(exc.dataset, args.out)
        raise
    save_dataset(ds, args.out)
    return {"count": count, "seed": seed, "realized": ds.manifest["realized"]}


def cmd_stats(args, cfg: RunConfig) -> dict:
    from .plotting import plot_stats

    report = dataset_stats(load_dataset(args.data))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.csv").write_text(report.to_csv(), encoding="utf-8")
    plot_stats(report, out)
    return {"rows": len(report.rows)}


def cmd_train(args, cfg: RunConfig) -> dict:
    ds = load_dataset(args.data)
    variant = Variant(args.variant or cfg.variant).value
    method = method_by_name(cfg.methods[0])
    if variant != Variant.STANDARD.value:
        method = replace(method, train_variant=variant)
    seed = cfg.base_seed
    tr, va, _ = split_dataset(len(ds.scenes), seed)
    train_cells = balance(task_examples(ds.scenes, tr, TaskKind.JOINT), seed)
    val_cells = balance(task_examples(ds.scenes, va, TaskKind.JOINT), seed + 1)
    params, history = fit_method(FeatureBank(ds.scenes), method, train_cells, val_cells, cfg.train, seed)
    if params is None:
        raise ValueError(f"method {method.name!r} has no trainable parameters")
    train_cfg = replace(cfg.train, kernel_width=method.kernel_width, seed=seed,
                        learning_rate=method.learning_rate or cfg.train.learning_rate)
    model = Path(args.model)
    model.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, params, train_cfg, history,
               {"method": cfg.methods[0], "variant": variant, "split_seed": seed,
                "dataset_count": len(ds.scenes)})
    best = max((h["val_accuracy"] for h in history), default=None)
    return {"epochs": len(history), "best_val_accuracy": best, "model": str(model)}


def cmd_eval(args, cfg: RunConfig) -> dict:
    ds = load_dataset(args.data)
    params, doc = load_model(args.model)
    method = method_by_name(doc.get("method", "multiple_image"))
    if doc.get("dataset_count") not in (None, len(ds.scenes)):
        raise ValueError(f"model was trained on {doc['dataset_count']} scenes, dataset has {len(ds.scenes)}")
    # the model's own held-out scenes; repetitions re-draw the balanced subsets
    _, _, te = split_dataset(len(ds.scenes), int(doc.get("split_seed", 0)))
    bank = FeatureBank(ds.scenes)
    scores = score_pairs(bank, method, params, te)
    tasks = list(TaskKind) if args.task == "all" else [TaskKind(args.task)]
    reps = args.reps if args.reps is not None else cfg.repetitions
    seed = args.seed if args.seed is not None else cfg.base_seed
    label = method.name if doc.get("variant", "standard") == "standard" else f"{method.name} ({doc['variant']})"
    report = EvalReport()
    candidates = {t: task_examples(ds.scenes, te, t) for t in tasks}
    for r in range(reps):
        for t in sorted(tasks, key=lambda t: ["joint", "who", "when"].index(t.value)):
            report.add(label, t, run_task(scores, balance(candidates[t], seed + r), t, ds.scenes))
    return _write_report(report, Path(args.out), "Evaluation")


def _run_suite(args, cfg: RunConfig, methods, title: str) -> dict:
    ds = load_dataset(args.data)
    reps = args.reps if args.reps is not None else cfg.repetitions
    report = run_methods(ds, methods, reps, cfg.base_seed, cfg.train, jobs=args.jobs)
    return _write_report(report, Path(args.out), title)


def cmd_ablate(args, cfg: RunConfig) -> dict:
    methods = [TABLE1_METHODS["multiple_image"]] + list(ABLATIONS.values())
    return _run_suite(args, cfg, methods, "Ablations")


def cmd_baselines(args, cfg: RunConfig) -> dict:
    return _run_suite(args, cfg, list(TABLE1_METHODS.values()), "Baselines")


def _highlight(scene, t, requested):
    if requested is not None:
        return requested if scene.frames[t].characters[requested].present else None
    hits = [c for c in range(len(scene.labels.matrix)) if scene.labels.at(c, t)]
    return hits[0] if hits else None


def cmd_render(args, cfg: RunConfig) -> dict:
    scene = loads_scene(Path(args.scene).read_text(encoding="utf-8"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, f in enumerate(scene.frames):
        (out / f"frame-{t:03d}.svg").write_text(render_svg(f, _highlight(scene, t, args.highlight)),
                                                encoding="utf-8")
    return {"frames": len(scene.frames)}


def cmd_animate(args, cfg: RunConfig) -> dict:
    if args.steps < 1:
        raise ValueError("--steps must be at least 1")
    scene = loads_scene(Path(args.scene).read_text(encoding="utf-8"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    last = len(scene.frames) - 1
    for t in range(last):
        for j in range(args.steps):
            alpha = j / args.steps
            f = interpolate_frame(scene, t, alpha)
            mark = _highlight(scene, t if alpha < 0.5 else t + 1, args.highlight)
            (out / f"frame-{n:03d}.svg").write_text(render_svg(f, mark), encoding="utf-8")
            n += 1
    (out / f"frame-{n:03d}.svg").write_text(
        render_svg(scene.frames[last], _highlight(scene, last, args.highlight)), encoding="utf-8")
    return {"frames": n + 1, "steps": args.steps}


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--jobs", type=int, default=_default_jobs(),
                        help="worker threads (default: $MISTAKEN_LAB_JOBS or 1)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = _Parser(prog="mistaken-lab", description="Mistaken-belief scenes: generate, train, evaluate.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate a dataset")
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate, manifest_dir="out")

    s = sub.add_parser("stats", parents=[common], help="bias statistics and charts")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stats, manifest_dir="out")

    t = sub.add_parser("train", parents=[common], help="train one model")
    t.add_argument("--data", required=True)
    t.add_argument("--model", required=True)
    t.add_argument("--variant", choices=[v.value for v in Variant])
    t.set_defaults(func=cmd_train, manifest_dir=None)

    e = sub.add_parser("eval", parents=[common], help="evaluate a trained model")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--task", default="all", choices=["who", "when", "joint", "all"])
    e.add_argument("--reps", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval, manifest_dir="out")

    for name, func, help_ in (("ablate", cmd_ablate, "full model against its ablations"),
                              ("baselines", cmd_baselines, "every row of the baseline table")):
        a = sub.add_parser(name, parents=[common], help=help_)
        a.add_argument("--data", required=True)
        a.add_argument("--reps", type=int)
        a.add_argument("--out", required=True)
        a.set_defaults(func=func, manifest_dir="out")

    for name, func in (("render", cmd_render), ("animate", cmd_animate)):
        r = sub.add_parser(name, parents=[common], help=f"{name} a scene file as SVG frames")
        r.add_argument("--scene", required=True)
        r.add_argument("--out", required=True)
        r.add_argument("--highlight", type=int, help="character to mark (default: first mistaken)")
        if name == "animate":
            r.add_argument("--steps", type=int, required=True, help="frames per interval")
        r.set_defaults(func=func, manifest_dir="out")
    return p


def _recorded_args(args) -> dict:
    # runtime knobs that cannot change output bytes stay out of the manifest
    skip = {"func", "manifest_dir", "jobs", "log_level"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        outcome = args.func(args, cfg)
        if args.manifest_dir:
            target = Path(getattr(args, args.manifest_dir)) / MANIFEST
        else:
            target = Path(args.model).with_suffix(".run-manifest.json")
        save_manifest(cfg, outcome, target, _recorded_args(args))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
