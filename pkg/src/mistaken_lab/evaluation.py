"""Who / when / joint evaluation, repeated-split experiments, baselines and ablations."""
from __future__ import annotations

import csv
import enum
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .features import BaselineKind, Variant, featurize_many
from .model import THRESHOLD, ExampleSet, ModelParams, TrainConfig, scores_in_chunks, train
from .scene import NUM_FRAMES, Scene

log = logging.getLogger(__name__)

SVM_NOTE = ("Time, Pose and Time+Pose are fit with the convolutional logistic learner "
            "(K=1, threshold 0.5) instead of an RBF-kernel SVM.")


class TaskKind(str, enum.Enum):
    WHO = "who"
    WHEN = "when"
    JOINT = "joint"


TASK_ORDER = (TaskKind.JOINT, TaskKind.WHO, TaskKind.WHEN)


@dataclass(frozen=True)
class EvalExample:
    task: TaskKind
    scene: int
    character: int | None
    frame: int | None
    label: bool


def task_examples(scenes: Sequence[Scene], indices: Sequence[int], task: TaskKind) -> list[EvalExample]:
    """All candidate units of a task in the given scenes.

    Joint: present (character, frame) cells.  Who: characters appearing in the
    scene.  When: frames with at least one present character.
    """
    task = TaskKind(task)
    out = []
    for si in indices:
        s = scenes[si]
        m = s.labels.matrix
        if task is TaskKind.WHO:
            for c in s.characters_in_scene():
                row = [m[c][t] for t in range(NUM_FRAMES) if s.frames[t].characters[c].present]
                assert s.labels.any_frame[c] == any(row)
                out.append(EvalExample(task, si, c, None, s.labels.any_frame[c]))
        elif task is TaskKind.WHEN:
            for t, f in enumerate(s.frames):
                present = [ch.id for ch in f.characters if ch.present]
                if present:
                    out.append(EvalExample(task, si, None, t, any(m[c][t] for c in present)))
        else:
            for t, f in enumerate(s.frames):
                for ch in f.characters:
                    if ch.present:
                        out.append(EvalExample(task, si, ch.id, t, m[ch.id][t]))
    return out


def split_dataset(dataset, seed: int) -> tuple[list[int], list[int], list[int]]:
    """80/10/10 split of scene indices: floor(0.8n), floor(0.1n), remainder."""
    n = dataset if isinstance(dataset, int) else len(dataset)
    if n < 10:
        raise ValueError(f"need at least 10 scenes to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    a, b = (8 * n) // 10, n // 10
    return (sorted(int(i) for i in perm[:a]), sorted(int(i) for i in perm[a:a + b]),
            sorted(int(i) for i in perm[a + b:]))


def balance(examples: Sequence, seed: int, label: Callable = lambda e: e.label) -> list:
    """Undersample the majority class to the minority count, then shuffle."""
    pos = [e for e in examples if label(e)]
    neg = [e for e in examples if not label(e)]
    if not pos:
        raise ValueError("no positive examples")
    if not neg:
        raise ValueError("no negative examples")
    rng = np.random.default_rng(seed)
    n = min(len(pos), len(neg))
    if len(pos) > n:
        pos = [pos[i] for i in sorted(rng.choice(len(pos), size=n, replace=False))]
    if len(neg) > n:
        neg = [neg[i] for i in sorted(rng.choice(len(neg), size=n, replace=False))]
    both = pos + neg
    return [both[i] for i in rng.permutation(len(both))]


def aggregate(scores: Sequence[float], rule: str = "max") -> float:
    if rule != "max":
        raise ValueError(f"unknown aggregation rule {rule!r}")
    if len(scores) == 0:
        raise ValueError("cannot aggregate an empty score list")
    return float(max(scores))


def run_task(scores: Mapping[tuple[int, int], np.ndarray], examples: Sequence[EvalExample],
             task: TaskKind, scenes: Sequence[Scene]) -> float:
    """Accuracy (percent) of per-frame ``scores[(scene, character)]`` on a
    balanced set of task examples; a score at the threshold counts positive.

    Who takes the max over the frames where the character is present, When
    the max over the characters present in the frame.
    """
    task = TaskKind(task)
    n_pos = sum(e.label for e in examples)
    if not examples or 2 * n_pos != len(examples):
        raise ValueError(f"evaluation set must be 50% positive, got {n_pos}/{len(examples)}")
    correct = 0
    for e in examples:
        if task is TaskKind.WHO:
            frames = scenes[e.scene].frames
            s = aggregate([scores[(e.scene, e.character)][t] for t, f in enumerate(frames)
                           if f.characters[e.character].present])
        elif task is TaskKind.WHEN:
            f = scenes[e.scene].frames[e.frame]
            s = aggregate([scores[(e.scene, ch.id)][e.frame] for ch in f.characters if ch.present])
        else:
            s = float(scores[(e.scene, e.character)][e.frame])
        correct += (s >= THRESHOLD) == bool(e.label)
    return 100.0 * correct / len(examples)


# ------------------------------------------------------------------- methods

@dataclass(frozen=True)
class MethodSpec:
    """How a row of the results table is produced.

    ``features`` is an image Variant, a BaselineKind, or one of "constant" and
    "shuffled" (label-free null models).
    """
    name: str
    features: str
    kernel_width: int = 7
    train_variant: str = Variant.STANDARD.value
    eval_variant: str = Variant.STANDARD.value
    learning_rate: float | None = None


TABLE1_METHODS = {
    "chance": MethodSpec("Chance", "constant", 1),
    "shuffled": MethodSpec("Label-shuffled", "shuffled", 1),
    "time": MethodSpec("Time", BaselineKind.TIME.value, 1, learning_rate=1e-2),
    "pose": MethodSpec("Pose", BaselineKind.POSE.value, 1, learning_rate=1e-2),
    "time_pose": MethodSpec("Time+Pose", BaselineKind.TIME_POSE.value, 1, learning_rate=1e-2),
    "expression": MethodSpec("Facial Expression", BaselineKind.EXPRESSION.value, 7, learning_rate=1e-2),
    "character_id": MethodSpec("Character ID", BaselineKind.CHARACTER_ID.value, 7, learning_rate=1e-2),
    "present": MethodSpec("Present", BaselineKind.PRESENT.value, 7, learning_rate=1e-2),
    "single_image": MethodSpec("Single Image", "image", 1),
    "multiple_image": MethodSpec("Multiple Image", "image", 7),
}

ABLATIONS = {
    Variant.FLIPPED.value: MethodSpec("Flipped", "image", 7, train_variant=Variant.FLIPPED.value),
    Variant.CENTERED.value: MethodSpec("Centered", "image", 7, train_variant=Variant.CENTERED.value),
    Variant.REWIND.value: MethodSpec("Rewind", "image", 7, train_variant=Variant.REWIND.value),
}


def method_by_name(name: str) -> MethodSpec:
    key = name.lower().replace("+", "_").replace("-", "_").replace(" ", "_")
    if key in TABLE1_METHODS:
        return TABLE1_METHODS[key]
    if key in ABLATIONS:
        return ABLATIONS[key]
    raise ValueError(f"unknown method {name!r}")


class FeatureBank:
    """Features for every (scene, character) pair of a dataset, built lazily
    per feature kind and kept as float32."""

    def __init__(self, scenes: Sequence[Scene]):
        self.scenes = scenes
        self.pairs = [(si, c) for si, s in enumerate(scenes) for c in s.characters_in_scene()]
        self.row = {p: i for i, p in enumerate(self.pairs)}
        self._arrays: dict[str, np.ndarray] = {}

    def array(self, kind: str) -> np.ndarray:
        # rewind is standard read backwards; no separate copy
        base = Variant.STANDARD.value if kind == Variant.REWIND.value else kind
        if base not in self._arrays:
            log.info("featurising %d pairs (%s)", len(self.pairs), base)
            self._arrays[base] = featurize_many(self.scenes, self.pairs, base)
        return self._arrays[base]

    def drop(self, kind: str) -> None:
        self._arrays.pop(kind, None)

    def rows(self, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
        return np.array([self.row[p] for p in pairs], dtype=np.int64)


def _feature_kind(method: MethodSpec, variant: str) -> str:
    return variant if method.features == "image" else method.features


def _pad_for(method: MethodSpec) -> np.ndarray | None:
    return np.array([0.0, 1.0]) if method.features == BaselineKind.PRESENT.value else None


def build_example_set(bank: FeatureBank, cells: Sequence[EvalExample], method: MethodSpec,
                      variant: str) -> ExampleSet:
    """One training example per joint-task cell: the character's whole
    sequence, with the loss restricted to that cell's frame."""
    n = len(cells)
    Y = np.zeros((n, NUM_FRAMES))
    M = np.zeros((n, NUM_FRAMES))
    frames = np.array([e.frame for e in cells], dtype=np.int64)
    if variant == Variant.REWIND.value:
        frames = NUM_FRAMES - 1 - frames
    Y[np.arange(n), frames] = [float(e.label) for e in cells]
    M[np.arange(n), frames] = 1.0
    pairs = [(e.scene, e.character) for e in cells]
    if method.features in ("constant", "shuffled"):
        return ExampleSet(np.zeros((1, NUM_FRAMES, 1), dtype=np.float32), Y, M, None, pairs,
                          np.zeros(n, dtype=np.int64))
    X = bank.array(_feature_kind(method, variant))
    if variant == Variant.REWIND.value:
        X = X[:, ::-1]
    return ExampleSet(X, Y, M, _pad_for(method), pairs, bank.rows(pairs))


def fit_method(bank: FeatureBank, method: MethodSpec, train_cells, val_cells,
               config: TrainConfig, seed: int):
    """Train ``method``; returns (params or None for the constant model, history)."""
    if method.features == "constant":
        return None, []
    cfg = replace(config, kernel_width=method.kernel_width, seed=seed,
                  learning_rate=method.learning_rate or config.learning_rate)
    tr = build_example_set(bank, train_cells, method, method.train_variant)
    va = build_example_set(bank, val_cells, method, method.train_variant)
    if method.features == "shuffled":
        rng = np.random.default_rng(seed)
        flat = tr.Y[tr.M > 0]
        tr.Y[tr.M > 0] = flat[rng.permutation(flat.size)]
    return train(tr, va, cfg)


def score_pairs(bank: FeatureBank, method: MethodSpec, params: ModelParams | None,
                scene_indices: Sequence[int]) -> dict[tuple[int, int], np.ndarray]:
    """Per-frame scores for every character of the given scenes."""
    pairs = [(si, c) for si in scene_indices for c in bank.scenes[si].characters_in_scene()]
    if params is None:
        return {p: np.full(NUM_FRAMES, 0.5) for p in pairs}
    if method.features == "shuffled":
        X = np.zeros((len(pairs), NUM_FRAMES, 1))
    else:
        X = bank.array(_feature_kind(method, method.eval_variant))[bank.rows(pairs)]
    rev = method.eval_variant == Variant.REWIND.value
    if rev:
        X = X[:, ::-1]
    data = ExampleSet(X, np.zeros((len(pairs), NUM_FRAMES)), np.ones((len(pairs), NUM_FRAMES)),
                      _pad_for(method))
    S = scores_in_chunks(params, data)
    if rev:
        S = S[:, ::-1]
    return {p: S[i].copy() for i, p in enumerate(pairs)}


# -------------------------------------------------------------------- report

@dataclass
class EvalReport:
    """Per (method, task) accuracies in percent, one value per repetition."""
    values: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, method: str, task: str, acc: float) -> None:
        self.values.setdefault((method, TaskKind(task).value), []).append(acc)

    def merge(self, other: "EvalReport") -> "EvalReport":
        for key, vals in other.values.items():
            self.values.setdefault(key, []).extend(vals)
        for n in other.notes:
            if n not in self.notes:
                self.notes.append(n)
        return self

    def methods(self) -> list[str]:
        seen = []
        for m, _ in self.values:
            if m not in seen:
                seen.append(m)
        return seen

    def mean(self, method: str, task: str) -> float:
        return float(np.mean(self.values[(method, TaskKind(task).value)]))

    def std(self, method: str, task: str) -> float:
        v = self.values[(method, TaskKind(task).value)]
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def median(self, method: str, task: str) -> float:
        return float(np.median(self.values[(method, TaskKind(task).value)]))

    def repetitions(self, method: str, task: str) -> int:
        return len(self.values[(method, TaskKind(task).value)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "task", "repetition", "accuracy"])
        for (m, t), vals in self.values.items():
            for r, v in enumerate(vals):
                w.writerow([m, t, r, f"{v:.6f}"])
        return buf.getvalue()

    def to_markdown(self, title: str = "Results") -> str:
        lines = [f"# {title}", ""]
        lines += [f"> {n}" for n in self.notes]
        if self.notes:
            lines.append("")
        lines.append("| Method | Who+When | Who | When |")
        lines.append("|---|---|---|---|")
        for m in self.methods():
            cells = []
            for t in TASK_ORDER:
                if (m, t.value) in self.values:
                    cells.append(f"{self.mean(m, t):.1f} ({self.std(m, t):.1f})")
                else:
                    cells.append("-")
            lines.append(f"| {m} | " + " | ".join(cells) + " |")
        reps = sorted({len(v) for v in self.values.values()})
        lines += ["", f"Accuracy in percent, mean (sample std) over {', '.join(map(str, reps))} repetitions."]
        return "\n".join(lines) + "\n"


def _one_repetition(dataset_scenes, bank: FeatureBank, methods: Sequence[MethodSpec],
                    config: TrainConfig, seed: int, rep: int) -> EvalReport:
    scenes = dataset_scenes
    tr_idx, va_idx, te_idx = split_dataset(len(scenes), seed)
    train_cells = balance(task_examples(scenes, tr_idx, TaskKind.JOINT), seed)
    val_cells = balance(task_examples(scenes, va_idx, TaskKind.JOINT), seed + 1)
    test_sets = {t: balance(task_examples(scenes, te_idx, t), seed + 2) for t in TaskKind}
    report = EvalReport()
    for method in methods:
        try:
            params, _ = fit_method(bank, method, train_cells, val_cells, config, seed)
            scores = score_pairs(bank, method, params, te_idx)
            for t in TASK_ORDER:
                report.add(method.name, t, run_task(scores, test_sets[t], t, scenes))
        except Exception as exc:
            raise RuntimeError(f"repetition {rep} ({method.name}): {exc}") from exc
    return report


def run_methods(dataset, methods: Sequence[MethodSpec], repetitions: int = 20, base_seed: int = 0,
                config: TrainConfig | None = None, jobs: int = 1,
                bank: FeatureBank | None = None) -> EvalReport:
    """Repeat split -> balance -> fit -> evaluate for several methods sharing splits."""
    if repetitions < 2:
        raise ValueError("need at least 2 repetitions")
    config = config or TrainConfig()
    scenes = dataset.scenes if hasattr(dataset, "scenes") else dataset
    bank = bank or FeatureBank(scenes)
    # featurise up front so worker threads only read
    for m in methods:
        if m.features not in ("constant", "shuffled"):
            for v in {m.train_variant, m.eval_variant}:
                bank.array(_feature_kind(m, v))

    def rep(r):
        return _one_repetition(scenes, bank, methods, config, base_seed + r, r)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(rep, range(repetitions)))
    else:
        parts = [rep(r) for r in range(repetitions)]
    report = EvalReport()
    for p in parts:
        report.merge(p)
    if any(m.features in (BaselineKind.TIME.value, BaselineKind.POSE.value, BaselineKind.TIME_POSE.value)
           for m in methods):
        report.notes.append(SVM_NOTE)
    return report


def run_experiment(dataset, method: MethodSpec, repetitions: int = 20, base_seed: int = 0,
                   config: TrainConfig | None = None, jobs: int = 1,
                   bank: FeatureBank | None = None) -> EvalReport:
    return run_methods(dataset, [method], repetitions, base_seed, config, jobs, bank)


def run_ablation(dataset, variant: Variant | str, repetitions: int = 6, base_seed: int = 0,
                 config: TrainConfig | None = None, jobs: int = 1,
                 bank: FeatureBank | None = None) -> EvalReport:
    """Train on variant-transformed features, evaluate on standard ones."""
    variant = Variant(variant)
    if variant is Variant.STANDARD:
        raise ValueError("ablation variant must be flipped, centered or rewind")
    return run_experiment(dataset, ABLATIONS[variant.value], repetitions, base_seed, config, jobs, bank)
