"""Dataset ingestion, splitting, normalization and the synthetic generator.

Series files are headerless UTF-8 text, one series per line:
``label,v1,...,vT`` with '\n' line endings. A dataset manifest is a JSON
object {name, train_file, test_file, num_classes, length}.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .core import LabeledSeries, SampledTimeline
from .errors import DataError, SplitError


@dataclass(frozen=True)
class Dataset:
    name: str
    train: Tuple[LabeledSeries, ...]
    test: Tuple[LabeledSeries, ...]
    num_classes: int
    length: int

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        if self.num_classes < 2:
            raise DataError(f"dataset {self.name!r}: need K >= 2 classes")
        for s in self.train + self.test:
            if s.length != self.length:
                raise DataError(
                    f"dataset {self.name!r}: series {s.id!r} has length {s.length}, expected {self.length}"
                )
            if s.label >= self.num_classes:
                raise DataError(f"dataset {self.name!r}: series {s.id!r} label {s.label} >= K")
        train_labels = {s.label for s in self.train}
        if train_labels != set(range(self.num_classes)):
            missing = sorted(set(range(self.num_classes)) - train_labels)
            raise DataError(f"dataset {self.name!r}: classes {missing} absent from train")


@dataclass(frozen=True)
class SplitSpec:
    """Fractions of the three-way protocol split: 40% of train for the
    classifiers, 30% of that part for calibration; the rest trains the
    trigger."""

    classifier_fraction: float = 0.4
    calibration_fraction_of_classifier_part: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for f in (self.classifier_fraction, self.calibration_fraction_of_classifier_part):
            if not 0.0 < f < 1.0:
                raise DataError(f"split fraction {f} must be in (0, 1)")


def _parse_series_file(path: str, id_prefix: str) -> List[Tuple[int, List[float]]]:
    rows: List[Tuple[int, List[float]]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) < 3:
                raise DataError(f"{path}:{lineno}: expected 'label,v1,...,vT' with T >= 2")
            try:
                label = int(fields[0])
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric field ({exc})") from None
            rows.append((label, values))
    if not rows:
        raise DataError(f"{path}: no series")
    length = len(rows[0][1])
    for lineno, (_, values) in enumerate(rows, start=1):
        if len(values) != length:
            raise DataError(
                f"{path}:{lineno}: ragged row with {len(values)} values, expected {length}"
            )
    return rows


def load_dataset(train_path: str, test_path: str, name: str = "") -> Dataset:
    """Load a dataset from a pair of series files.

    Raw labels are remapped to 0..K-1 preserving their sort order; a test
    label never seen in train is an error.
    """
    train_rows = _parse_series_file(train_path, "train")
    test_rows = _parse_series_file(test_path, "test")
    raw_labels = sorted({label for label, _ in train_rows})
    remap = {raw: i for i, raw in enumerate(raw_labels)}
    for label, _ in test_rows:
        if label not in remap:
            raise DataError(f"{test_path}: test label {label} unseen in train")
    if len(train_rows[0][1]) != len(test_rows[0][1]):
        raise DataError(f"train length {len(train_rows[0][1])} != test length {len(test_rows[0][1])}")
    train = tuple(
        LabeledSeries(f"train-{i}", values, remap[label])
        for i, (label, values) in enumerate(train_rows)
    )
    test = tuple(
        LabeledSeries(f"test-{i}", values, remap[label])
        for i, (label, values) in enumerate(test_rows)
    )
    if not name:
        name = os.path.splitext(os.path.basename(train_path))[0]
    return Dataset(name, train, test, len(raw_labels), len(train_rows[0][1]))


def save_series_file(series: Sequence[LabeledSeries], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in series:
            fh.write(",".join([str(s.label)] + [repr(v) for v in s.values]) + "\n")


def save_dataset(dataset: Dataset, out_dir: str) -> Dict[str, object]:
    """Write train/test files plus a manifest; returns the manifest object."""
    os.makedirs(out_dir, exist_ok=True)
    train_file = os.path.join(out_dir, "train.csv")
    test_file = os.path.join(out_dir, "test.csv")
    save_series_file(dataset.train, train_file)
    save_series_file(dataset.test, test_file)
    manifest = {
        "name": dataset.name,
        "train_file": train_file,
        "test_file": test_file,
        "num_classes": dataset.num_classes,
        "length": dataset.length,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)
    ds = load_dataset(
        resolve(manifest["train_file"]), resolve(manifest["test_file"]), manifest.get("name", "")
    )
    if "num_classes" in manifest and manifest["num_classes"] != ds.num_classes:
        raise DataError(f"{path}: manifest says K={manifest['num_classes']}, files have K={ds.num_classes}")
    if "length" in manifest and manifest["length"] != ds.length:
        raise DataError(f"{path}: manifest says T={manifest['length']}, files have T={ds.length}")
    return ds


def stratified_split(
    series: Sequence[LabeledSeries], fraction: float, seed: int
) -> Tuple[List[LabeledSeries], List[LabeledSeries]]:
    """Split per class: part_a gets round(fraction * count), at least 1 and at
    most count - 1. Deterministic given the seed."""
    by_class: Dict[int, List[LabeledSeries]] = {}
    for s in series:
        by_class.setdefault(s.label, []).append(s)
    for label, members in by_class.items():
        if len(members) < 2:
            raise SplitError(f"class {label} has a single member; cannot split")
    rng = np.random.default_rng(seed)
    part_a: List[LabeledSeries] = []
    part_b: List[LabeledSeries] = []
    for label in sorted(by_class):
        members = by_class[label]
        n = len(members)
        take = min(max(int(round(fraction * n)), 1), n - 1)
        order = rng.permutation(n)
        part_a.extend(members[i] for i in sorted(order[:take]))
        part_b.extend(members[i] for i in sorted(order[take:]))
    return part_a, part_b


def znormalize(values: Sequence[float]) -> np.ndarray:
    """Full-series z-normalization (population std); constant input maps to zeros."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise ValueError("need at least 2 values")
    std = arr.std()
    if std < 1e-12:
        return np.zeros_like(arr)
    return (arr - arr.mean()) / std


def znormalize_dataset(dataset: Dataset) -> Dataset:
    def norm(part):
        return tuple(
            LabeledSeries(s.id, tuple(znormalize(s.values)), s.label) for s in part
        )
    return Dataset(dataset.name, norm(dataset.train), norm(dataset.test),
                   dataset.num_classes, dataset.length)


def _subsample_minority(
    series: Sequence[LabeledSeries], minority_class: int, minority_fraction: float,
    rng: np.random.Generator,
) -> List[LabeledSeries]:
    minority = [s for s in series if s.label == minority_class]
    majority = [s for s in series if s.label != minority_class]
    n_maj = len(majority)
    n_min = len(minority)
    if n_min / (n_min + n_maj) <= minority_fraction:
        raise DataError(
            f"minority class {minority_class} already at or below fraction {minority_fraction}"
        )
    # Pick the kept count minimizing the distance to the target share.
    best_m = min(
        range(1, n_min + 1), key=lambda m: (abs(m / (n_maj + m) - minority_fraction), m)
    )
    keep = sorted(rng.permutation(n_min)[:best_m])
    out = list(majority) + [minority[i] for i in keep]
    out.sort(key=lambda s: s.id)
    return out


def make_imbalanced(
    dataset: Dataset, minority_class: int, minority_fraction: float, seed: int
) -> Dataset:
    """Subsample the minority class of a binary dataset toward the target share.

    Train and test parts are subsampled independently; majority members are
    never touched."""
    if dataset.num_classes != 2:
        raise DataError("make_imbalanced requires a binary dataset")
    if not 0.0 < minority_fraction < 1.0:
        raise DataError("minority_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train = _subsample_minority(dataset.train, minority_class, minority_fraction, rng)
    test = _subsample_minority(dataset.test, minority_class, minority_fraction, rng)
    return Dataset(dataset.name, tuple(train), tuple(test), 2, dataset.length)


def discretize_regression_target(values: Sequence[float], quantile: float) -> List[int]:
    """Binary labels from a numeric target: 1 iff value > interpolated quantile."""
    if not 0.0 < quantile < 1.0:
        raise DataError("quantile must be in (0, 1)")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or np.ptp(arr) == 0.0:
        raise DataError("degenerate target: all values equal")
    threshold = float(np.quantile(arr, quantile))
    return [1 if v > threshold else 0 for v in arr]


def generate_synthetic(
    length: int,
    per_class_train: int,
    per_class_test: int,
    noise_std: float,
    seed: int,
    name: str = "synthetic",
) -> Dataset:
    """Three-class generator: class c carries a +1 mean level on its own third
    of the timeline, zero elsewhere, plus Gaussian noise."""
    if per_class_train < 1 or per_class_test < 1:
        raise DataError("per-class counts must be >= 1")
    if noise_std < 0:
        raise DataError("noise_std must be >= 0")
    classes = 3
    rng = np.random.default_rng(seed)
    templates = np.zeros((classes, length))
    for c in range(classes):
        lo = c * length // 3
        hi = (c + 1) * length // 3
        templates[c, lo:hi] = 1.0

    def make(part: str, per_class: int) -> Tuple[LabeledSeries, ...]:
        out = []
        for c in range(classes):
            noise = rng.normal(0.0, noise_std, size=(per_class, length)) if noise_std > 0 else np.zeros((per_class, length))
            for i in range(per_class):
                out.append(
                    LabeledSeries(f"{part}-c{c}-{i}", tuple(templates[c] + noise[i]), c)
                )
        return tuple(out)

    train = make("train", per_class_train)
    test = make("test", per_class_test)
    return Dataset(name, train, test, classes, length)


# Prefix percentage windows for the information-gain screen.
SCREEN_EARLY = (5, 10, 15, 20, 25)
SCREEN_HALF = (40, 45, 50, 55, 60)
SCREEN_FULL = (75, 80, 85, 90, 95, 100)


def _macro_ovr_auc(proba: np.ndarray, labels: np.ndarray, num_classes: int) -> float:
    """Macro one-vs-rest AUC from probability scores, rank-based with ties."""
    aucs = []
    for c in range(num_classes):
        pos = labels == c
        n_pos = int(pos.sum())
        n_neg = len(labels) - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        scores = proba[:, c]
        order = np.argsort(scores, kind="mergesort")
        ranks = np.empty(len(scores))
        sorted_scores = scores[order]
        i = 0
        while i < len(scores):
            j = i
            while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
                j += 1
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        rank_sum = ranks[pos].sum()
        aucs.append((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
    if not aucs:
        raise DataError("no class with both positives and negatives")
    return float(np.mean(aucs))


def information_gain_screen(dataset: Dataset, classifier_config=None, seed: int = 0):
    """Screen a dataset for information gain over time.

    Fits the per-timestamp classifier pipeline at the early / half / full
    prefix windows and compares mean one-vs-rest train AUC. Accepted iff both
    the half-window and full-window gains over the early window are strictly
    positive. Returns (auc_gain_half, auc_gain_full, accepted).
    """
    from .classify import ClassifierHyper, fit_collection

    hyper = classifier_config or ClassifierHyper()
    T = dataset.length
    percents = sorted(set(SCREEN_EARLY) | set(SCREEN_HALF) | set(SCREEN_FULL))
    ts_of = {p: min(max(int(round(p / 100.0 * T)), 1), T) for p in percents}
    timestamps = sorted(set(ts_of.values()))
    timeline = SampledTimeline(tuple(timestamps), T)
    calib, fit_part = stratified_split(dataset.train, 0.3, seed)
    collection = fit_collection(fit_part, timeline, hyper, calib, seed)
    labels = np.array([s.label for s in dataset.train])
    auc_at = {}
    for t in timestamps:
        proba = np.stack([collection.predict_proba(s.values, t) for s in dataset.train])
        auc_at[t] = _macro_ovr_auc(proba, labels, dataset.num_classes)

    def window_mean(window):
        return float(np.mean([auc_at[ts_of[p]] for p in window]))

    early = window_mean(SCREEN_EARLY)
    gain_half = window_mean(SCREEN_HALF) - early
    gain_full = window_mean(SCREEN_FULL) - early
    return gain_half, gain_full, (gain_half > 0.0 and gain_full > 0.0)
