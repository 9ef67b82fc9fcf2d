"""End-to-end benchmark orchestration: configuration, the split / fit /
simulate / score pipeline, and report emission.

The pipeline per dataset: stratified split of the train set (40% classifier
part, 60% trigger part; 30% of the classifier part held out for calibration),
one classifier collection fitted once, trigger-train probability traces
computed once, then one fitted trigger per (method, alpha) simulated online
on the test set. Datasets that cannot satisfy the split are skipped with a
recorded reason. Seeds are derived by hashing (master seed, dataset, method,
alpha) so results do not depend on scheduling order.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import classify, metrics, stats, trigger
from .core import (
    CostModel,
    EvalRecord,
    SampledTimeline,
    anomaly_cost_model,
    delay_cost,
    misclassification_cost,
    standard_cost_model,
    weighted_loss,
)
from .data import Dataset, SplitSpec, load_manifest, stratified_split
from .errors import ConfigError, DataError

VALID_METHODS = (
    "asap",
    "alap",
    "proba_threshold",
    "stopping_rule",
    "economy",
    "ecec",
    "calimera",
    "economy_myopic",
    "calimera_myopic",
)
DEFAULT_ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class BenchConfig:
    datasets: Tuple[object, ...]  # manifest paths or inline manifest dicts
    methods: Tuple[str, ...]
    cost_setting: str = "standard"
    alpha_grid: Tuple[float, ...] = DEFAULT_ALPHA_GRID
    classifier: classify.ClassifierHyper = classify.ClassifierHyper()
    split: SplitSpec = SplitSpec()
    seed: int = 0
    output_dir: str = "bench-out"

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ConfigError(f"unknown method {m!r}; valid: {', '.join(VALID_METHODS)}")
        if self.cost_setting not in ("standard", "anomaly"):
            raise ConfigError(f"unknown cost_setting {self.cost_setting!r}")
        for a in self.alpha_grid:
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"alpha {a} outside [0, 1]")
        if not self.datasets:
            raise ConfigError("datasets must be nonempty")


_CONFIG_KEYS = {
    "datasets", "methods", "cost_setting", "alpha_grid", "classifier", "split",
    "seed", "output_dir",
}


def parse_config(path: str) -> BenchConfig:
    """Load and validate a JSON config file; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs: Dict[str, object] = {}
    kwargs["datasets"] = tuple(doc.get("datasets", ()))
    kwargs["methods"] = tuple(doc.get("methods", ()))
    if "cost_setting" in doc:
        kwargs["cost_setting"] = doc["cost_setting"]
    if "alpha_grid" in doc:
        kwargs["alpha_grid"] = tuple(float(a) for a in doc["alpha_grid"])
    if "classifier" in doc:
        clf = dict(doc["classifier"])
        bad = sorted(set(clf) - {"l2", "iters", "lr"})
        if bad:
            raise ConfigError(f"unknown classifier keys: {', '.join(bad)}")
        kwargs["classifier"] = classify.ClassifierHyper(**clf)
    if "split" in doc:
        sp = dict(doc["split"])
        bad = sorted(set(sp) - {"classifier_fraction", "calibration_fraction_of_classifier_part", "seed"})
        if bad:
            raise ConfigError(f"unknown split keys: {', '.join(bad)}")
        kwargs["split"] = SplitSpec(**sp)
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    if "output_dir" in doc:
        kwargs["output_dir"] = str(doc["output_dir"])
    return BenchConfig(**kwargs)


@dataclass
class ReportBundle:
    records: List[EvalRecord] = field(default_factory=list)
    summaries: List[metrics.RunSummary] = field(default_factory=list)
    skipped: List[Tuple[str, str]] = field(default_factory=list)  # (dataset, reason)
    timelines: Dict[str, SampledTimeline] = field(default_factory=dict)


def derive_seed(master: int, *parts: object) -> int:
    digest = hashlib.sha256(repr((master,) + parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def cost_model_for(setting: str, num_classes: int, alpha: float) -> CostModel:
    if setting == "standard":
        return standard_cost_model(num_classes, alpha)
    if num_classes != 2:
        raise DataError("anomaly cost setting requires binary datasets")
    return anomaly_cost_model(alpha)


def _load_config_dataset(entry) -> Dataset:
    if isinstance(entry, str):
        return load_manifest(entry)
    if isinstance(entry, dict):
        from .data import load_dataset

        ds = load_dataset(entry["train_file"], entry["test_file"], entry.get("name", ""))
        return ds
    raise ConfigError(f"dataset entry must be a manifest path or object, got {type(entry).__name__}")


def _fit_trigger(
    method: str,
    train_set: trigger.TriggerTrainSet,
    cost: CostModel,
) -> trigger.TriggerModel:
    timeline = train_set.timeline
    if method == "asap":
        return trigger.AsapTrigger(timeline, cost)
    if method == "alap":
        return trigger.AlapTrigger(timeline, cost)
    if method == "proba_threshold":
        return trigger.fit_proba_threshold(train_set, cost)
    if method == "stopping_rule":
        return trigger.fit_stopping_rule(train_set, cost)
    if method == "economy":
        return trigger.fit_economy(train_set, cost)
    if method == "ecec":
        return trigger.fit_ecec(train_set, cost)
    if method == "calimera":
        return trigger.fit_calimera(train_set, cost)
    if method == "economy_myopic":
        return trigger.make_myopic(trigger.fit_economy(train_set, cost))
    if method == "calimera_myopic":
        return trigger.make_myopic(trigger.fit_calimera(train_set, cost))
    raise ConfigError(f"unknown method {method!r}")


def run_dataset(
    dataset: Dataset, config: BenchConfig
) -> Tuple[List[EvalRecord], SampledTimeline]:
    """All records for one dataset across methods and alphas."""
    split_seed = derive_seed(config.seed, dataset.name, "split")
    clf_part, trig_part = stratified_split(
        dataset.train, config.split.classifier_fraction, split_seed
    )
    calib_part, fit_part = stratified_split(
        clf_part,
        config.split.calibration_fraction_of_classifier_part,
        derive_seed(config.seed, dataset.name, "calibration"),
    )
    timeline = classify.default_timeline(dataset.length)
    collection = classify.fit_collection(
        fit_part, timeline, config.classifier, calib_part,
        derive_seed(config.seed, dataset.name, "classifier"),
    )
    trig_traces = tuple(collection.prob_trace(s) for s in trig_part)
    trig_labels = tuple(s.label for s in trig_part)
    train_set = trigger.TriggerTrainSet(trig_traces, trig_labels, timeline)
    test_traces = [collection.prob_trace(s) for s in dataset.test]

    records: List[EvalRecord] = []
    for alpha in config.alpha_grid:
        cost = cost_model_for(config.cost_setting, dataset.num_classes, alpha)
        for method in config.methods:
            model = _fit_trigger(method, train_set, cost)
            for series, trace in zip(dataset.test, test_traces):
                decision = trigger.simulate_online(model, trace)
                t_star, oracle_cost = metrics.optimal_time(trace, series.label, cost, timeline)
                c_m = misclassification_cost(cost, decision.predicted_label, series.label)
                c_d = delay_cost(cost, decision.trigger_time, dataset.length)
                w = alpha * c_m + (1.0 - alpha) * c_d
                records.append(
                    EvalRecord(
                        dataset=dataset.name,
                        method=method,
                        alpha=alpha,
                        series_id=series.id,
                        true_label=series.label,
                        predicted_label=decision.predicted_label,
                        trigger_time=decision.trigger_time,
                        weighted_cost=w,
                        misclassification_cost=c_m,
                        delay_cost=c_d,
                        oracle_time=t_star,
                        oracle_cost=oracle_cost,
                        regret=w - oracle_cost,
                    )
                )
    return records, timeline


def run_benchmark(config: BenchConfig) -> ReportBundle:
    bundle = ReportBundle()
    for entry in config.datasets:
        dataset = _load_config_dataset(entry)
        try:
            records, timeline = run_dataset(dataset, config)
        except DataError as exc:
            bundle.skipped.append((dataset.name, str(exc)))
            continue
        bundle.records.extend(records)
        bundle.timelines[dataset.name] = timeline
    bundle.records.sort(key=lambda r: (r.dataset, r.method, r.alpha, r.series_id))
    grouped: Dict[Tuple[str, str, float], List[EvalRecord]] = {}
    for r in bundle.records:
        grouped.setdefault((r.dataset, r.method, r.alpha), []).append(r)
    for key in sorted(grouped):
        bundle.summaries.append(metrics.summarize(grouped[key], bundle.timelines[key[0]]))
    return bundle


# ---------------------------------------------------------------------------
# Report emission.
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


RECORD_FIELDS = (
    "dataset", "method", "alpha", "series_id", "true_label", "predicted_label",
    "trigger_time", "weighted_cost", "misclassification_cost", "delay_cost",
    "oracle_time", "oracle_cost", "regret",
)


def load_records_csv(path: str) -> List[EvalRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != RECORD_FIELDS:
            raise DataError(f"{path}: unexpected records header")
        for line in fh:
            f = line.rstrip("\n").split(",")
            records.append(
                EvalRecord(
                    dataset=f[0], method=f[1], alpha=float(f[2]), series_id=f[3],
                    true_label=int(f[4]), predicted_label=int(f[5]), trigger_time=int(f[6]),
                    weighted_cost=float(f[7]), misclassification_cost=float(f[8]),
                    delay_cost=float(f[9]), oracle_time=int(f[10]), oracle_cost=float(f[11]),
                    regret=float(f[12]),
                )
            )
    return records


def _ranks_svg(rank_rows: List[Tuple[float, str, float, float, float]], methods: Sequence[str]) -> str:
    """Minimal line chart: mean rank (y, inverted) vs alpha (x), one polyline
    per method."""
    width, height, margin = 640, 400, 50
    alphas = sorted({row[0] for row in rank_rows})
    max_rank = max(len(methods), 2)
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
               "#e377c2", "#7f7f7f", "#bcbd22"]

    def x_of(a):
        return margin + a * (width - 2 * margin)

    def y_of(r):
        return margin + (r - 1) / (max_rank - 1) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" font-size="12">alpha</text>',
        f'<text x="10" y="{height // 2}" font-size="12" transform="rotate(-90 14 {height // 2})">mean rank</text>',
    ]
    for m_idx, method in enumerate(methods):
        pts = [
            (x_of(a), y_of(rank))
            for a, meth, rank, _, _ in sorted(rank_rows)
            if meth == method
        ]
        if not pts:
            continue
        path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        color = palette[m_idx % len(palette)]
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 14 * m_idx}" font-size="11" fill="{color}">{method}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_reports(bundle: ReportBundle, out_dir: str, emit_svg: bool = False) -> List[str]:
    """Emit records/summaries/ranks/pairwise/pareto CSVs (plus an optional
    rank chart); byte-deterministic for a given bundle."""
    os.makedirs(out_dir, exist_ok=True)
    written: List[str] = []

    timelines_path = os.path.join(out_dir, "timelines.json")
    with open(timelines_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {
                name: {"timestamps": list(tl.timestamps), "series_length": tl.series_length}
                for name, tl in sorted(bundle.timelines.items())
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    written.append(timelines_path)

    records_path = os.path.join(out_dir, "records.csv")
    _write_csv(
        records_path,
        RECORD_FIELDS,
        [
            (r.dataset, r.method, r.alpha, r.series_id, r.true_label, r.predicted_label,
             r.trigger_time, r.weighted_cost, r.misclassification_cost, r.delay_cost,
             r.oracle_time, r.oracle_cost, r.regret)
            for r in bundle.records
        ],
    )
    written.append(records_path)

    summaries_path = os.path.join(out_dir, "summaries.csv")
    _write_csv(
        summaries_path,
        ("dataset", "method", "alpha", "avg_cost", "accuracy", "earliness",
         "mean_regret", "mean_trigger_index"),
        [
            (s.dataset, s.method, s.alpha, s.avg_cost, s.accuracy, s.earliness,
             s.mean_regret, s.mean_trigger_index)
            for s in sorted(bundle.summaries, key=lambda s: (s.dataset, s.method, s.alpha))
        ],
    )
    written.append(summaries_path)

    # Mean ranks per alpha with bootstrap CIs over per-dataset rank values.
    by_alpha: Dict[float, Dict[str, Dict[str, float]]] = {}
    methods = sorted({s.method for s in bundle.summaries})
    for s in bundle.summaries:
        by_alpha.setdefault(s.alpha, {}).setdefault(s.dataset, {})[s.method] = s.avg_cost
    rank_rows: List[Tuple[float, str, float, float, float]] = []
    for alpha in sorted(by_alpha):
        costs = by_alpha[alpha]
        complete = {d: row for d, row in costs.items() if all(m in row for m in methods)}
        if not complete:
            continue
        ranks = stats.per_dataset_ranks(complete, methods)
        for method in methods:
            values = ranks[method]
            lo, hi = stats.bootstrap_mean_ci(
                values, seed=derive_seed(0, "rank-ci", alpha, method)
            )
            rank_rows.append((alpha, method, float(np.mean(values)), lo, hi))
    ranks_path = os.path.join(out_dir, "ranks.csv")
    _write_csv(ranks_path, ("alpha", "method", "mean_rank", "ci_low", "ci_high"), rank_rows)
    written.append(ranks_path)

    # Pairwise comparisons per alpha with Holm-adjusted Wilcoxon p-values.
    pair_rows = []
    for alpha in sorted(by_alpha):
        costs = by_alpha[alpha]
        datasets = sorted(d for d, row in costs.items() if all(m in row for m in methods))
        if not datasets:
            continue
        pairs = [(a, b) for i, a in enumerate(methods) for b in methods[i + 1:]]
        raw = []
        for a, b in pairs:
            ca = [costs[d][a] for d in datasets]
            cb = [costs[d][b] for d in datasets]
            raw.append(stats.pairwise_comparison(ca, cb))
        adjusted = stats.holm_adjust([r[3] for r in raw])
        for (a, b), (wins, ties, losses, p), p_adj in zip(pairs, raw, adjusted):
            pair_rows.append((alpha, a, b, wins, ties, losses, p, p_adj))
    pairwise_path = os.path.join(out_dir, "pairwise.csv")
    _write_csv(
        pairwise_path,
        ("alpha", "method_a", "method_b", "wins", "ties", "losses", "p_value", "p_holm"),
        pair_rows,
    )
    written.append(pairwise_path)

    # Pareto fronts per dataset over (earliness, accuracy) across (method, alpha).
    pareto_rows = []
    by_dataset: Dict[str, List[metrics.RunSummary]] = {}
    for s in bundle.summaries:
        by_dataset.setdefault(s.dataset, []).append(s)
    for dataset in sorted(by_dataset):
        group = sorted(by_dataset[dataset], key=lambda s: (s.method, s.alpha))
        points = [(s.earliness, s.accuracy) for s in group]
        front = set()
        front_points = metrics.pareto_front(points)
        for idx, p in enumerate(points):
            if p in front_points:
                front.add(idx)
        for idx, s in enumerate(group):
            pareto_rows.append(
                (dataset, s.method, s.alpha, s.earliness, s.accuracy, int(idx in front))
            )
    pareto_path = os.path.join(out_dir, "pareto.csv")
    _write_csv(
        pareto_path,
        ("dataset", "method", "alpha", "earliness", "accuracy", "on_front"),
        pareto_rows,
    )
    written.append(pareto_path)

    if bundle.skipped:
        skipped_path = os.path.join(out_dir, "skipped.csv")
        _write_csv(skipped_path, ("dataset", "reason"), sorted(bundle.skipped))
        written.append(skipped_path)

    if emit_svg:
        svg_path = os.path.join(out_dir, "ranks.svg")
        with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_ranks_svg(rank_rows, methods))
        written.append(svg_path)
    return written


def load_timelines_json(path: str) -> Dict[str, SampledTimeline]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return {
        name: SampledTimeline(tuple(entry["timestamps"]), entry["series_length"])
        for name, entry in doc.items()
    }


def bundle_from_records(records: List[EvalRecord], timelines: Dict[str, SampledTimeline]) -> ReportBundle:
    """Rebuild a full bundle (summaries included) from raw records."""
    bundle = ReportBundle(records=sorted(records, key=lambda r: (r.dataset, r.method, r.alpha, r.series_id)))
    bundle.timelines = timelines
    grouped: Dict[Tuple[str, str, float], List[EvalRecord]] = {}
    for r in bundle.records:
        grouped.setdefault((r.dataset, r.method, r.alpha), []).append(r)
    for key in sorted(grouped):
        bundle.summaries.append(metrics.summarize(grouped[key], timelines[key[0]]))
    return bundle
