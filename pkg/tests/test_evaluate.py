from __future__ import annotations

import dataclasses
import itertools
import math
import random

import numpy as np
import pytest

from promptforge.errors import EvaluationError
from promptforge.evaluate import (
    BootstrapConfig,
    average_ranks,
    bootstrap_ci,
    evaluate,
    f1_micro_multi_label,
    spearman,
)
from promptforge.pipeline import prepare_text
from tests.conftest import STSB_RECIPE


# ------------------------------------------------------------------- oracles
# Independent reimplementations in plain Python, used as ground truth.


def oracle_average_ranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def oracle_spearman(xs: list[float], ys: list[float]) -> float:
    rx, ry = oracle_average_ranks(xs), oracle_average_ranks(ys)
    n = len(xs)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    if vx == 0 or vy == 0:
        return 0.0
    return cov / math.sqrt(vx * vy)


def oracle_micro_f1(preds: list[set[str]], refs: list[set[str]]) -> float:
    tp = sum(len(p & r) for p, r in zip(preds, refs))
    fp = sum(len(p - r) for p, r in zip(preds, refs))
    fn = sum(len(r - p) for p, r in zip(preds, refs))
    if 2 * tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


# ------------------------------------------------------------------ spearman


def test_average_ranks_hand_case():
    ranks = average_ranks(np.array([1.0, 2.0, 2.0, 3.0]))
    assert list(ranks) == [1.0, 2.5, 2.5, 4.0]


def test_spearman_perfect_and_reversed():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert spearman(x, x * 10.0)[0] == pytest.approx(1.0, abs=1e-15)
    assert spearman(x, -x)[0] == pytest.approx(-1.0, abs=1e-15)


def test_spearman_hand_tie_case():
    # ranks x = [1, 2.5, 2.5, 4], ranks y = [1.5, 1.5, 3.5, 3.5]
    # Pearson over those ranks works out to 1/sqrt(2)
    score, degenerate = spearman(
        np.array([1.0, 2.0, 2.0, 3.0]), np.array([1.0, 1.0, 2.0, 2.0])
    )
    assert not degenerate
    assert score == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_spearman_matches_oracle_with_ties():
    rng = random.Random(8)
    for _ in range(300):
        n = rng.randint(2, 50)
        # draw from a small value set so ties are common
        xs = [float(rng.randint(0, 6)) for _ in range(n)]
        ys = [float(rng.randint(0, 6)) for _ in range(n)]
        expected = oracle_spearman(xs, ys)
        actual, degenerate = spearman(np.array(xs), np.array(ys))
        assert abs(actual - expected) <= 1e-12
        assert degenerate == (
            len(set(xs)) == 1 or len(set(ys)) == 1
        )


def test_spearman_degenerate_cases():
    assert spearman(np.array([1.0, 1.0, 1.0]), np.array([1.0, 2.0, 3.0])) == (0.0, True)
    assert spearman(np.array([2.0]), np.array([3.0])) == (0.0, True)


# ------------------------------------------------------------------ micro F1


def test_f1_worked_case():
    # TP=1, FP=1, FN=0 across the batch
    score, empty = f1_micro_multi_label([{"a", "b"}], [{"a"}])
    assert not empty
    assert score == pytest.approx(2 / 3, abs=1e-12)


def test_f1_all_empty_is_perfect_with_flag():
    score, empty = f1_micro_multi_label([set(), set()], [set(), set()])
    assert score == 1.0 and empty


def test_f1_exhaustive_small_cases():
    labels = ["a", "b"]
    subsets = [frozenset(c) for r in range(3) for c in itertools.combinations(labels, r)]
    for n in (1, 2):
        for preds in itertools.product(subsets, repeat=n):
            for refs in itertools.product(subsets, repeat=n):
                expected = oracle_micro_f1([set(p) for p in preds], [set(r) for r in refs])
                actual, _ = f1_micro_multi_label([set(p) for p in preds], [set(r) for r in refs])
                assert abs(actual - expected) <= 1e-12, (preds, refs)


# ----------------------------------------------------------------- bootstrap


def test_bootstrap_zero_width_on_constant_stat():
    low, high = bootstrap_ci(lambda idx: 0.7, 50, BootstrapConfig())
    assert (low, high) == (0.7, 0.7)


def test_bootstrap_deterministic_and_ordered():
    values = np.array([1.0, 3.0, 2.0, 5.0, 4.0, 0.5, 2.5, 3.5])

    def stat(idx: np.ndarray) -> float:
        return float(values[idx].mean())

    a = bootstrap_ci(stat, len(values), BootstrapConfig(seed=42))
    b = bootstrap_ci(stat, len(values), BootstrapConfig(seed=42))
    c = bootstrap_ci(stat, len(values), BootstrapConfig(seed=43))
    assert a == b
    assert a != c
    assert a[0] <= values.mean() <= a[1]


def test_bootstrap_prefix_stability():
    # resample i depends only on (seed, i): growing B refines, never reshuffles
    values = np.arange(10, dtype=np.float64)

    def stat(idx: np.ndarray) -> float:
        return float(values[idx].mean())

    small = bootstrap_ci(stat, 10, BootstrapConfig(n_resamples=100))
    big = bootstrap_ci(stat, 10, BootstrapConfig(n_resamples=1000))
    assert abs(small[0] - big[0]) < 0.5  # same family of draws, nearby quantiles


def test_bootstrap_input_validation():
    with pytest.raises(EvaluationError):
        bootstrap_ci(lambda idx: 0.0, 1, BootstrapConfig())
    with pytest.raises(EvaluationError):
        bootstrap_ci(lambda idx: 0.0, 5, BootstrapConfig(n_resamples=1))
    with pytest.raises(EvaluationError):
        BootstrapConfig(confidence_level=1.0)
    with pytest.raises(EvaluationError):
        BootstrapConfig(n_resamples=-1)


# ------------------------------------------------------------- evaluate(): e2e


@pytest.fixture(scope="module")
def stsb_test_instances(roots):
    return prepare_text(STSB_RECIPE, roots).instances["test"]


def test_evaluate_self_predictions_max_score(roots, stsb_test_instances):
    report = evaluate(stsb_test_instances, [i.target for i in stsb_test_instances], roots)
    entry = report.scores["metrics.spearman"]
    assert entry.score == pytest.approx(1.0, abs=1e-9)
    assert report.parse_failure_rate == 0.0
    assert report.n == 6
    assert entry.ci_low is not None and entry.ci_low <= entry.score


def test_evaluate_spearman_per_instance_scores_are_none(roots, stsb_test_instances):
    report = evaluate(stsb_test_instances, [i.target for i in stsb_test_instances], roots)
    assert all(row["scores"]["metrics.spearman"] is None for row in report.per_instance)
    assert [row["split"] for row in report.per_instance] == ["test"] * 6


def test_evaluate_parse_failure_uses_midpoint_fallback(roots, stsb_test_instances):
    preds = [i.target for i in stsb_test_instances]
    preds[2] = "no idea"
    report = evaluate(stsb_test_instances, preds, roots)
    assert report.parse_failure_rate == pytest.approx(1 / 6)
    failed = report.per_instance[2]
    assert failed["parse_failure"] is True and failed["failure_reason"]

    refs = [float(i.target) for i in stsb_test_instances]
    midpoint = (min(refs) + max(refs)) / 2
    substituted = refs.copy()
    substituted[2] = midpoint
    assert report.scores["metrics.spearman"].score == pytest.approx(
        oracle_spearman(substituted, refs), abs=1e-12
    )


def test_evaluate_chain_runs_on_predictions(roots, stsb_test_instances):
    # the chain strips whitespace and takes the first non-empty line
    preds = [f"\n  {i.target}  \njunk" for i in stsb_test_instances]
    report = evaluate(stsb_test_instances, preds, roots)
    assert report.scores["metrics.spearman"].score == pytest.approx(1.0, abs=1e-9)


def test_evaluate_word_number_predictions(roots, stsb_test_instances):
    # English phrasing parses through the same chain as digits
    refs = [float(i.target) for i in stsb_test_instances]
    preds = []
    for r in refs:
        whole = int(r)
        if r == whole + 0.5:
            preds.append(f"{['zero','one','two','three','four','five'][whole]} and a half")
        else:
            preds.append(str(r))
    report = evaluate(stsb_test_instances, preds, roots)
    assert report.scores["metrics.spearman"].score == pytest.approx(1.0, abs=1e-9)


def test_evaluate_unparseable_reference_is_hard_error(roots, stsb_test_instances):
    broken = [dataclasses.replace(stsb_test_instances[0], references=("not a number",))]
    broken += stsb_test_instances[1:]
    with pytest.raises(EvaluationError):
        evaluate(broken, [i.target for i in broken], roots)


def test_evaluate_rejects_mixed_datasets(roots, stsb_test_instances):
    mixed = list(stsb_test_instances)
    mixed[3] = dataclasses.replace(mixed[3], metric_ids=("metrics.accuracy",))
    with pytest.raises(EvaluationError):
        evaluate(mixed, ["1"] * len(mixed), roots)


def test_evaluate_rejects_length_mismatch_and_empty(roots, stsb_test_instances):
    with pytest.raises(EvaluationError):
        evaluate(stsb_test_instances, ["1"], roots)
    with pytest.raises(EvaluationError):
        evaluate([], [], roots)


def test_evaluate_accuracy_end_to_end(roots):
    instances = prepare_text("recipes.sentiment_few_shot", roots).instances["test"]
    targets = [i.target for i in instances]
    report = evaluate(instances, targets, roots)
    assert report.scores["metrics.accuracy"].score == 1.0
    assert report.scores["metrics.accuracy"].ci_low == 1.0
    assert report.scores["metrics.accuracy"].ci_high == 1.0

    # uppercase predictions still hit: the chain lowercases
    report2 = evaluate(instances, [t.upper() for t in targets], roots)
    assert report2.scores["metrics.accuracy"].score == 1.0

    wrong = ["positive" if t == "negative" else "negative" for t in targets]
    report3 = evaluate(instances, wrong, roots)
    assert report3.scores["metrics.accuracy"].score == 0.0
    per = [row["scores"]["metrics.accuracy"] for row in report3.per_instance]
    assert per == [0.0] * len(instances)


def test_evaluate_f1_end_to_end(roots):
    instances = prepare_text("recipes.unfair_tos", roots).instances["test"]
    report = evaluate(instances, [i.target for i in instances], roots)
    assert report.scores["metrics.f1_micro_multi_label"].score == 1.0
    # the last fixture row has an empty label set; identical empty prediction
    # scores 1.0 per-instance
    assert report.per_instance[-1]["scores"]["metrics.f1_micro_multi_label"] == 1.0

    # shuffled label order inside the set is irrelevant
    def shuffle_labels(target: str) -> str:
        parts = target.split(", ")
        return ", ".join(reversed(parts))

    report2 = evaluate(instances, [shuffle_labels(i.target) for i in instances], roots)
    assert report2.scores["metrics.f1_micro_multi_label"].score == 1.0


def test_evaluate_report_json_shape(roots, stsb_test_instances):
    report = evaluate(stsb_test_instances, [i.target for i in stsb_test_instances], roots)
    obj = report.to_json_dict()
    assert set(obj) == {"n", "parse_failure_rate", "global", "per_instance"}
    assert list(obj["global"]) == sorted(obj["global"])
    entry = obj["global"]["metrics.spearman"]
    assert set(entry) == {"score", "ci_low", "ci_high", "flags"}
    assert isinstance(entry["score"], float)


def test_evaluate_small_n_omits_ci(roots, stsb_test_instances):
    report = evaluate(stsb_test_instances[:1], [stsb_test_instances[0].target], roots)
    entry = report.scores["metrics.spearman"]
    assert entry.ci_low is None and entry.ci_high is None
    assert "ci_omitted_small_n" in entry.flags
    assert "degenerate_variance" in entry.flags  # n=1 has no rank variance


def test_evaluate_custom_bootstrap_config(roots, stsb_test_instances):
    report = evaluate(
        stsb_test_instances,
        [i.target for i in stsb_test_instances],
        roots,
        bootstrap=BootstrapConfig(n_resamples=0),
    )
    entry = report.scores["metrics.spearman"]
    assert entry.ci_low is None and entry.ci_high is None
