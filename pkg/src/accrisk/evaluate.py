"""Classification metrics, multi-seed reports and feature-category ablations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyEval, EmptyFeatureSet, ShapeError
from .featurize import CATEGORIES, DatasetSplit, category_columns

CLASSES = ("accident", "non-accident")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionCounts":
        """Counts with the non-accident class treated as positive."""
        return ConfusionCounts(self.tn, self.fn, self.tp, self.fp)


def confusion(preds, labels) -> ConfusionCounts:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ShapeError(f"{preds.shape[0] if preds.ndim else 0} predictions for "
                         f"{labels.shape[0] if labels.ndim else 0} labels")
    return ConfusionCounts(int(np.sum((preds == 1) & (labels == 1))),
                           int(np.sum((preds == 1) & (labels == 0))),
                           int(np.sum((preds == 0) & (labels == 0))),
                           int(np.sum((preds == 0) & (labels == 1))))


@dataclass(frozen=True)
class ClassMetrics:
    """Exact rational precision/recall/F1; float views via properties."""

    precision_q: Fraction
    recall_q: Fraction
    f1_q: Fraction
    support: int

    @property
    def precision(self) -> float:
        return float(self.precision_q)

    @property
    def recall(self) -> float:
        return float(self.recall_q)

    @property
    def f1(self) -> float:
        return float(self.f1_q)


def _metrics(tp, fp, fn) -> ClassMetrics:
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f1 = 2 * p * r / (p + r) if p + r else Fraction(0)
    return ClassMetrics(p, r, f1, tp + fn)


def prf1(c: ConfusionCounts) -> dict:
    """Per-class metrics keyed ``accident`` / ``non-accident``.

    A zero denominator makes precision or recall 0, and F1 is 0 when both are.
    """
    return {"accident": _metrics(c.tp, c.fp, c.fn),
            "non-accident": _metrics(c.tn, c.fn, c.fp)}


def weighted_f1_exact(f1s: Sequence, supports: Sequence[int]) -> Fraction:
    """Support-weighted mean of per-class F1 as an exact fraction."""
    total = sum(supports)
    if total <= 0:
        raise EmptyEval("weighted F1 needs a positive total support")
    acc = sum((Fraction(f) * s for f, s in zip(f1s, supports)), Fraction(0))
    return acc / total


def weighted_f1(f1s: Sequence, supports: Sequence[int]) -> float:
    return float(weighted_f1_exact(f1s, supports))


def summarize(preds, labels) -> dict:
    """Metrics row for one run: per-class metrics plus the support-weighted F1."""
    per = prf1(confusion(preds, labels))
    w = weighted_f1([per[k].f1_q for k in CLASSES], [per[k].support for k in CLASSES])
    return {"classes": per, "weighted_f1": w}


@dataclass
class EvalReport:
    configuration: str
    seeds: list = field(default_factory=list)
    runs: list = field(default_factory=list)  # one summarize() dict per seed

    def add(self, seed, preds, labels):
        self.seeds.append(seed)
        self.runs.append(summarize(preds, labels))

    def _mean(self, getter) -> float:
        if not self.runs:
            raise EmptyEval("report has no runs")
        return float(np.mean([getter(r) for r in self.runs]))

    def mean(self, cls: str = "accident", metric: str = "f1") -> float:
        if cls == "weighted-avg":
            return self._mean(lambda r: r["weighted_f1"])
        return self._mean(lambda r: getattr(r["classes"][cls], metric))

    @property
    def accident_f1(self) -> float:
        return self.mean("accident", "f1")

    @property
    def weighted_avg_f1(self) -> float:
        return self.mean("weighted-avg")

    def rows(self) -> list[list]:
        out = []
        for seed, run in list(zip(self.seeds, self.runs)) + [("mean", None)]:
            for cls in CLASSES:
                if run is None:
                    vals = [self.mean(cls, m) for m in ("precision", "recall", "f1")]
                    sup = float(np.mean([r["classes"][cls].support for r in self.runs]))
                else:
                    m = run["classes"][cls]
                    vals, sup = [m.precision, m.recall, m.f1], m.support
                out.append([self.configuration, cls, *vals, sup, seed])
            w = self.mean("weighted-avg") if run is None else run["weighted_f1"]
            sup = (float(np.mean([sum(r["classes"][c].support for c in CLASSES) for r in self.runs]))
                   if run is None else sum(run["classes"][c].support for c in CLASSES))
            out.append([self.configuration, "weighted-avg", "", "", w, sup, seed])
        return out

    def table(self) -> str:
        lines = [f"{self.configuration}  (seeds: {', '.join(map(str, self.seeds))})",
                 f"{'class':<14}{'precision':>10}{'recall':>10}{'f1':>10}"]
        for cls in CLASSES:
            lines.append(f"{cls:<14}{self.mean(cls, 'precision'):>10.4f}"
                         f"{self.mean(cls, 'recall'):>10.4f}{self.mean(cls, 'f1'):>10.4f}")
        lines.append(f"{'weighted-avg':<14}{'':>10}{'':>10}{self.weighted_avg_f1:>10.4f}")
        return "\n".join(lines)


CSV_HEADER = ["configuration", "class", "precision", "recall", "f1", "support", "seed"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_reports(reports: Sequence[EvalReport], csv_path, table_path=None) -> None:
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rep in reports:
            for row in rep.rows():
                w.writerow([_fmt(v) for v in row])
    if table_path is not None:
        Path(table_path).write_text("\n\n".join(r.table() for r in reports) + "\n")


# ---------------------------------------------------------------------------
# multi-seed runs and ablation


def run_seeds(builder: Callable, split: DatasetSplit, tc, configuration: str,
              histories: dict | None = None) -> EvalReport:
    """Train one model per seed in ``tc.seeds`` and score each on the test split.

    ``builder(layout, seed)`` must return a fresh model for ``split.layout``.
    """
    from .models import predict_labels, train

    rep = EvalReport(configuration)
    for seed in tc.seeds:
        model = builder(split.layout, seed)
        model, hist = train(model, split, tc, seed)
        if histories is not None:
            histories[(configuration, seed)] = (model, hist)
        rep.add(seed, predict_labels(model, split.test), split.test.label)
    return rep


@dataclass(frozen=True)
class AblationSpec:
    scenario: str
    categories: tuple

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.scenario not in ("only-one", "all-but-one"):
            raise ValueError(f"unknown ablation scenario {self.scenario!r}")
        bad = set(self.categories) - set(CATEGORIES)
        if bad:
            raise ValueError(f"unknown feature categories {sorted(bad)}")
        if self.scenario == "only-one" and len(self.categories) != 1:
            raise ValueError("only-one keeps exactly one category")

    @property
    def kept(self) -> tuple:
        if self.scenario == "only-one":
            return self.categories
        return tuple(c for c in CATEGORIES if c not in self.categories)

    @property
    def label(self) -> str:
        if self.scenario == "all-but-one" and not self.categories:
            return "all"
        return f"{self.scenario}({'+'.join(self.categories)})"


def ablated_split(split: DatasetSplit, spec: AblationSpec) -> DatasetSplit:
    """The split with excluded categories' columns removed (not zero-filled)."""
    kept = spec.kept
    if not kept:
        raise EmptyFeatureSet(f"{spec.label} leaves no features")
    cols, layout = category_columns(kept)
    return split.restrict(cols, layout)


def ablate(split: DatasetSplit, spec: AblationSpec, builder: Callable, tc,
           prefix: str = "") -> EvalReport:
    """Retrain ``builder``'s model at the reduced width and evaluate it."""
    return run_seeds(builder, ablated_split(split, spec), tc, prefix + spec.label)


def ablation_study(split: DatasetSplit, builder: Callable, tc, scenarios=("only-one", "all-but-one"),
                   categories=CATEGORIES, prefix: str = "") -> list[EvalReport]:
    """One report per (scenario, category); configurations that leave no input are skipped."""
    reports = []
    for scenario in scenarios:
        for cat in categories:
            spec = AblationSpec(scenario, (cat,))
            try:
                reports.append(ablate(split, spec, builder, tc, prefix))
            except EmptyFeatureSet:
                continue
    return reports
