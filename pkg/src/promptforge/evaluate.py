"""Evaluation: de-verbalize predictions, score them, attach bootstrap CIs.

Predictions run through the template's postprocessor chain and become typed
values or ParseFailure records; references run through the same chain and must
all parse. Failed predictions never abort a run. Each metric substitutes its
documented fallback value so robustness degrades scores instead of crashing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .catalog import Artifact, ArtifactId, CatalogRoots
from .errors import ArtifactParseError, EvaluationError
from .pipeline import PreparedInstance
from .task_card import METRIC_OUTPUT_TYPES
from .template import ParseFailure, Postprocessor, parse_postprocessor, run_chain

METRIC_KINDS = tuple(METRIC_OUTPUT_TYPES)


@dataclass(frozen=True)
class MetricSpec:
    id: ArtifactId
    kind: str

    @property
    def prediction_type(self) -> str:
        return METRIC_OUTPUT_TYPES[self.kind]


def parse_metric(artifact: Artifact) -> MetricSpec:
    if artifact.kind != "metric":
        raise ArtifactParseError(f"{artifact.id} is a {artifact.kind}, not a metric")
    kind = artifact.body.get("metric")
    if kind not in METRIC_KINDS:
        raise ArtifactParseError(
            f"{artifact.id}: unknown metric kind {kind!r}; expected one of {METRIC_KINDS}"
        )
    return MetricSpec(id=artifact.id, kind=kind)


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 1000
    confidence_level: float = 0.95
    seed: int = 42

    def __post_init__(self) -> None:
        if self.n_resamples < 0:
            raise EvaluationError(f"n_resamples must be >= 0, got {self.n_resamples}")
        if not 0.0 < self.confidence_level < 1.0:
            raise EvaluationError(
                f"confidence_level must be in (0, 1), got {self.confidence_level}"
            )


def bootstrap_ci(
    stat: Callable[[np.ndarray], float], n: int, config: BootstrapConfig
) -> tuple[float, float]:
    """Percentile bootstrap over instance indices.

    Resample i draws its indices from ``np.random.default_rng([seed, i])``, so
    CIs are reproducible and adding resamples never reshuffles earlier ones.
    """
    if n < 2:
        raise EvaluationError(f"bootstrap needs at least 2 instances, got {n}")
    if config.n_resamples < 2:
        raise EvaluationError(f"bootstrap needs at least 2 resamples, got {config.n_resamples}")
    stats = np.empty(config.n_resamples, dtype=np.float64)
    for i in range(config.n_resamples):
        rng = np.random.default_rng([config.seed, i])
        idx = rng.integers(0, n, size=n)
        stats[i] = stat(idx)
    alpha = 1.0 - config.confidence_level
    low, high = np.quantile(stats, [alpha / 2.0, 1.0 - alpha / 2.0], method="linear")
    return float(low), float(high)


# --------------------------------------------------------------------------
# Metric implementations.


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; ties share the average of the positions they span."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < len(sorted_values):
        j = i
        while j + 1 < len(sorted_values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(preds: np.ndarray, refs: np.ndarray) -> tuple[float, bool]:
    """Spearman correlation via Pearson on average-tie ranks.

    Returns (score, degenerate). Constant inputs have no rank variance; the
    score is defined as 0.0 there rather than NaN.
    """
    if len(preds) != len(refs):
        raise EvaluationError("spearman needs equal-length vectors")
    if len(preds) < 2:
        return 0.0, True
    pred_ranks = average_ranks(preds)
    ref_ranks = average_ranks(refs)
    pred_std = float(pred_ranks.std())
    ref_std = float(ref_ranks.std())
    if pred_std == 0.0 or ref_std == 0.0:
        return 0.0, True
    cov = float(((pred_ranks - pred_ranks.mean()) * (ref_ranks - ref_ranks.mean())).mean())
    return cov / (pred_std * ref_std), False


def f1_micro_multi_label(
    preds: Sequence[set[str]], refs: Sequence[set[str]]
) -> tuple[float, bool]:
    """Micro-averaged F1 over label sets: 2TP / (2TP + FP + FN).

    Returns (score, empty_denominator). All-empty predictions and references
    count as a perfect match.
    """
    tp = fp = fn = 0
    for p, r in zip(preds, refs):
        tp += len(p & r)
        fp += len(p - r)
        fn += len(r - p)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0, True
    return 2 * tp / denom, False


def _per_instance_f1(pred: set[str], ref: set[str]) -> float:
    if not pred and not ref:
        return 1.0
    denom = len(pred) + len(ref)
    return 2 * len(pred & ref) / denom


# --------------------------------------------------------------------------
# Report structure.


@dataclass
class ScoreEntry:
    score: float
    ci_low: float | None
    ci_high: float | None
    flags: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "score": self.score,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "flags": list(self.flags),
        }


@dataclass
class EvaluationReport:
    n: int
    parse_failure_rate: float
    scores: dict[str, ScoreEntry]
    per_instance: list[dict]

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "parse_failure_rate": self.parse_failure_rate,
            "global": {name: entry.to_json_dict() for name, entry in sorted(self.scores.items())},
            "per_instance": self.per_instance,
        }


_PY_TYPES = {"real": float, "text": str, "list_of_text": list}


def _resolve_uniform_ids(
    instances: list[PreparedInstance], attr: str
) -> tuple[str, ...]:
    first = getattr(instances[0], attr)
    for i, inst in enumerate(instances):
        if getattr(inst, attr) != first:
            raise EvaluationError(
                f"instance {i} has different {attr} than instance 0; "
                "evaluate one prepared dataset at a time"
            )
    return first


def _parse_references(
    chain: list[Postprocessor], instance: PreparedInstance, position: int
) -> list[object]:
    typed: list[object] = []
    for ref in instance.references:
        value = run_chain(chain, ref)
        if isinstance(value, ParseFailure):
            raise EvaluationError(
                f"reference {ref!r} of instance {position} does not survive its own "
                f"postprocessor chain: {value.reason}"
            )
        typed.append(value)
    return typed


def _check_type(value: object, expected: str, what: str) -> None:
    py_type = _PY_TYPES[expected]
    ok = isinstance(value, py_type) and not isinstance(value, bool)
    if ok and expected == "list_of_text":
        ok = all(isinstance(item, str) for item in value)  # type: ignore[union-attr]
    if not ok:
        raise EvaluationError(f"{what} is {type(value).__name__}, but the metric scores {expected}")


def evaluate(
    instances: list[PreparedInstance],
    predictions: list[str],
    roots: CatalogRoots,
    bootstrap: BootstrapConfig | None = None,
) -> EvaluationReport:
    if bootstrap is None:
        bootstrap = BootstrapConfig()
    if not instances:
        raise EvaluationError("nothing to evaluate: no instances")
    if len(instances) != len(predictions):
        raise EvaluationError(
            f"got {len(predictions)} predictions for {len(instances)} instances"
        )

    processor_ids = _resolve_uniform_ids(instances, "postprocessor_ids")
    metric_ids = _resolve_uniform_ids(instances, "metric_ids")
    chain = [
        parse_postprocessor(roots.resolve(ArtifactId.parse(p))) for p in processor_ids
    ]
    metrics = [parse_metric(roots.resolve(ArtifactId.parse(m))) for m in metric_ids]
    types = {m.prediction_type for m in metrics}
    if len(types) > 1:
        raise EvaluationError(f"metrics disagree on prediction type: {sorted(types)}")

    typed_refs = [
        _parse_references(chain, inst, i) for i, inst in enumerate(instances)
    ]
    for i, refs in enumerate(typed_refs):
        for ref in refs:
            _check_type(ref, metrics[0].prediction_type, f"reference of instance {i}")

    typed_preds: list[object] = []
    failures: list[ParseFailure | None] = []
    for i, text in enumerate(predictions):
        value = run_chain(chain, text)
        if isinstance(value, ParseFailure):
            typed_preds.append(None)
            failures.append(value)
        else:
            _check_type(value, metrics[0].prediction_type, f"prediction {i}")
            typed_preds.append(value)
            failures.append(None)

    n = len(instances)
    failure_count = sum(1 for f in failures if f is not None)
    per_instance: list[dict] = [
        {
            "split": inst.split,
            "index": inst.index,
            "parse_failure": failures[i] is not None,
            "failure_reason": failures[i].reason if failures[i] else None,
            "scores": {},
        }
        for i, inst in enumerate(instances)
    ]

    scores: dict[str, ScoreEntry] = {}
    for metric in metrics:
        entry = _score_metric(metric, typed_preds, typed_refs, failures, per_instance, bootstrap)
        scores[str(metric.id)] = entry

    return EvaluationReport(
        n=n,
        parse_failure_rate=failure_count / n,
        scores=scores,
        per_instance=per_instance,
    )


def _score_metric(
    metric: MetricSpec,
    typed_preds: list[object],
    typed_refs: list[list[object]],
    failures: list[ParseFailure | None],
    per_instance: list[dict],
    bootstrap: BootstrapConfig,
) -> ScoreEntry:
    n = len(typed_preds)
    flags: list[str] = []
    metric_key = str(metric.id)

    if metric.kind == "spearman":
        ref_values = np.array([refs[0] for refs in typed_refs], dtype=np.float64)
        # Failed parses score as the midpoint of the observed reference range.
        fallback = float((ref_values.min() + ref_values.max()) / 2.0) if n else 0.0
        pred_values = np.array(
            [fallback if failures[i] is not None else typed_preds[i] for i in range(n)],
            dtype=np.float64,
        )
        score, degenerate = spearman(pred_values, ref_values)
        if degenerate:
            flags.append("degenerate_variance")
        for row in per_instance:
            row["scores"][metric_key] = None

        def stat(idx: np.ndarray) -> float:
            value, _ = spearman(pred_values[idx], ref_values[idx])
            return value

    elif metric.kind == "f1_micro_multi_label":
        pred_sets = [
            set() if failures[i] is not None else set(typed_preds[i])  # type: ignore[arg-type]
            for i in range(n)
        ]
        ref_sets = [set(refs[0]) for refs in typed_refs]
        score, empty = f1_micro_multi_label(pred_sets, ref_sets)
        if empty:
            flags.append("empty_label_sets")
        for i, row in enumerate(per_instance):
            row["scores"][metric_key] = _per_instance_f1(pred_sets[i], ref_sets[i])

        def stat(idx: np.ndarray) -> float:
            value, _ = f1_micro_multi_label(
                [pred_sets[i] for i in idx], [ref_sets[i] for i in idx]
            )
            return value

    elif metric.kind == "accuracy":
        # A failed parse can never equal a reference, so it scores 0.
        hits = np.array(
            [
                0.0
                if failures[i] is not None
                else float(typed_preds[i] in typed_refs[i])
                for i in range(n)
            ],
            dtype=np.float64,
        )
        score = float(hits.mean())
        for i, row in enumerate(per_instance):
            row["scores"][metric_key] = float(hits[i])

        def stat(idx: np.ndarray) -> float:
            return float(hits[idx].mean())

    else:  # pragma: no cover - parse_metric rejects unknown kinds
        raise EvaluationError(f"unknown metric kind {metric.kind!r}")

    ci_low: float | None = None
    ci_high: float | None = None
    if bootstrap.n_resamples >= 2 and n >= 2:
        ci_low, ci_high = bootstrap_ci(stat, n, bootstrap)
    elif n < 2:
        flags.append("ci_omitted_small_n")
    return ScoreEntry(score=float(score), ci_low=ci_low, ci_high=ci_high, flags=tuple(flags))
