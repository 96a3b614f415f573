"""End-to-end acceptance checks.

One test per shipped guarantee; each prints a single PASS line on success so
a verbose run reads as a checklist. Tolerances and time budgets are asserted
inline.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from promptforge.catalog import ArtifactId, load_roots
from promptforge.evaluate import BootstrapConfig, bootstrap_ci, evaluate, f1_micro_multi_label, spearman
from promptforge.pipeline import prepare_text
from promptforge.recipe import RecipeSpec, parse_recipe, render_recipe
from promptforge.service import create_app
from promptforge.template import instance_fingerprint, parse_postprocessor, run_chain
from tests.conftest import CATALOG_ROOT, FIXTURES, GOLDEN_PROMPT, REPO_ROOT, STSB_RECIPE
from tests.test_evaluate import oracle_micro_f1, oracle_spearman


def ok(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


# ---------------------------------------------------------------------------


def test_golden_prompt_byte_exact(roots):
    started = time.perf_counter()
    prepared = prepare_text(STSB_RECIPE, roots)
    elapsed = time.perf_counter() - started
    instance = prepared.instances["test"][0]
    assert instance.source == GOLDEN_PROMPT, "rendered prompt differs from the golden bytes"
    assert instance.source.encode("utf-8") == GOLDEN_PROMPT.encode("utf-8")
    assert elapsed < 1.0, f"prepare took {elapsed:.2f}s, budget is 1s"
    ok("golden prompt byte-exact under 1s")


def test_deverbalization_examples(roots):
    template = roots.resolve("templates.text_similarity")
    chain = [
        parse_postprocessor(roots.resolve(p)) for p in template.body["postprocessors"]
    ]
    assert run_chain(chain, "2.43") == 2.43
    assert run_chain(chain, "two and a half") == 2.5
    ok('de-verbalization "2.43" -> 2.43 and "two and a half" -> 2.5')


def test_prepare_determinism(roots):
    started = time.perf_counter()
    first = prepare_text(STSB_RECIPE, roots)
    second = prepare_text(STSB_RECIPE, roots)
    elapsed = time.perf_counter() - started

    def jsonl(ds) -> bytes:
        return "".join(
            json.dumps(i.to_json_dict(), ensure_ascii=False, separators=(",", ":")) + "\n"
            for i in ds.all_instances()
        ).encode("utf-8")

    assert jsonl(first) == jsonl(second), "same recipe+seed must be byte-identical"

    reseeded = prepare_text(STSB_RECIPE, roots, seed=7)
    demo_of = lambda ds: ds.instances["test"][0].source.split("[Agent]:")[0]
    assert demo_of(reseeded) != demo_of(first), "new seed must redraw demos"
    assert elapsed < 5.0, f"two prepare runs took {elapsed:.2f}s, budget is 5s"
    ok("determinism: byte-identical reruns, seed changes demos, under 5s")


def test_no_leakage_over_random_recipes(roots):
    card_setups = {
        "cards.stsb": (120, 1),
        "cards.sick": (30, 1),
        "cards.unfair_tos": (20, 1),
        "cards.toy_sentiment": (20, 2),
    }
    rng = random.Random(2024)
    checked = 0
    for _ in range(50):
        card, (train_size, n_templates) = rng.choice(list(card_setups.items()))
        parts = [
            f"card={card}",
            f"template_card_index={rng.randrange(n_templates)}",
            f"format={rng.choice(['formats.user_agent', 'formats.plain'])}",
        ]
        pool = rng.randint(2, min(train_size - 1, 20))
        parts.append(f"num_demos={rng.randint(1, min(pool, 3))}")
        parts.append(f"demos_pool_size={pool}")
        parts.append(f"seed={rng.randrange(10_000)}")
        if rng.random() < 0.3:
            parts.append("sys_prompt=prompts.helpful")
        if rng.random() < 0.3:
            parts.append("augmentors=augmentors.whitespace_noise")
        prepared = prepare_text(",".join(parts), roots)
        pool_prints = prepared.demo_pool.fingerprints()
        for split, items in prepared.instances.items():
            for inst in items:
                emitted = {k: v for k, v in inst.task_data.items() if k != "source"}
                assert instance_fingerprint(emitted) not in pool_prints, (
                    f"demo pool leaked into {split} for recipe: {','.join(parts)}"
                )
                checked += 1
    assert checked > 500  # sanity: the sweep actually exercised instances
    ok("no demo-pool leakage across 50 random recipes")


def test_spearman_against_rank_oracle():
    rng = random.Random(1337)
    for trial in range(1000):
        n = rng.randint(2, 50)
        xs = [float(rng.randint(0, 8)) for _ in range(n)]
        ys = [float(rng.randint(0, 8)) for _ in range(n)]
        expected = oracle_spearman(xs, ys)
        actual, _ = spearman(np.array(xs), np.array(ys))
        assert abs(actual - expected) <= 1e-12, (trial, xs, ys)
    ok("Spearman matches brute-force rank oracle on 1000 vectors within 1e-12")


def test_micro_f1_worked_case_and_exhaustive():
    score, _ = f1_micro_multi_label([{"a", "b"}, {"c"}], [{"a"}, {"c", "d"}])
    assert abs(score - 2 / 3) <= 1e-12

    labels = ["a", "b", "c"]
    subsets = [
        frozenset(combo)
        for r in range(len(labels) + 1)
        for combo in itertools.combinations(labels, r)
    ]
    for n_instances in (1, 2, 3):
        for preds in itertools.product(subsets, repeat=n_instances):
            for refs in itertools.product(subsets, repeat=n_instances):
                expected = oracle_micro_f1([set(p) for p in preds], [set(r) for r in refs])
                actual, _ = f1_micro_multi_label(
                    [set(p) for p in preds], [set(r) for r in refs]
                )
                assert abs(actual - expected) <= 1e-12, (preds, refs)
    ok("micro-F1 worked case 2/3 and exhaustive small-case equivalence")


def test_bootstrap_coverage():
    started = time.perf_counter()
    n, trials, target = 200, 200, 0.7
    covered = 0
    for trial in range(trials):
        data_rng = np.random.default_rng(trial)
        hits = (data_rng.random(n) < target).astype(np.float64)

        def stat(idx: np.ndarray) -> float:
            return float(hits[idx].mean())

        low, high = bootstrap_ci(stat, n, BootstrapConfig(n_resamples=1000, seed=trial))
        if low <= target <= high:
            covered += 1
    elapsed = time.perf_counter() - started
    assert covered >= 0.90 * trials, f"CI covered the true mean in only {covered}/{trials} trials"

    constant = np.ones(50)
    low, high = bootstrap_ci(lambda idx: float(constant[idx].mean()), 50, BootstrapConfig())
    assert (low, high) == (1.0, 1.0), "constant scores must give a zero-width CI"
    assert elapsed < 60.0, f"coverage sweep took {elapsed:.1f}s, budget is 60s"
    ok(f"bootstrap 95% CI covered p=0.7 in {covered}/{trials} trials, zero-width on constants")


def test_self_consistency_on_every_fixture_recipe(roots):
    expectations = {
        "recipes.stsb_demo": ("metrics.spearman", 1.0),
        "recipes.sick_zero_shot": ("metrics.spearman", 1.0),
        "recipes.unfair_tos": ("metrics.f1_micro_multi_label", 1.0),
        "recipes.sentiment_few_shot": ("metrics.accuracy", 1.0),
    }
    recipe_ids = sorted(i for i in roots.ids() if i.startswith("recipes."))
    assert sorted(expectations) == recipe_ids, "every fixture recipe must be covered"
    for recipe_id, (metric, maximum) in sorted(expectations.items()):
        prepared = prepare_text(recipe_id, roots)
        instances = prepared.instances["test"]
        report = evaluate(instances, [i.target for i in instances], roots)
        entry = report.scores[metric]
        assert entry.score == pytest.approx(maximum, abs=1e-12), (recipe_id, entry)
        assert report.parse_failure_rate == 0.0, recipe_id
    ok("targets-as-predictions reach every metric's maximum on all fixture recipes")


def test_recipe_dsl_fixpoint_and_reference_string():
    listing = (
        "card=cards.stsb, # dataset info card\n"
        "template=templates.text_similarity,\n"
        "sys_prompt=prompts.helpful,\n"
        "format=formats.user_agent,\n"
        "num_demos=1"
    )
    spec = parse_recipe(listing)
    assert spec == RecipeSpec(
        card=ArtifactId.parse("cards.stsb"),
        template=ArtifactId.parse("templates.text_similarity"),
        system_prompt=ArtifactId.parse("prompts.helpful"),
        format=ArtifactId.parse("formats.user_agent"),
        num_demos=1,
    )
    assert render_recipe(spec) == STSB_RECIPE

    from tests.test_recipe import _random_spec

    rng = random.Random(99)
    for _ in range(200):
        generated = _random_spec(rng)
        text = render_recipe(generated)
        assert parse_recipe(text) == generated
        assert render_recipe(parse_recipe(text)) == text
    ok("recipe DSL: reference listing parses; 200-spec parse/render fixpoint")


def test_catalog_shadowing_changes_and_restores_golden():
    open_only = load_roots([CATALOG_ROOT])
    golden = prepare_text(STSB_RECIPE, open_only).instances["test"][0].source
    assert golden == GOLDEN_PROMPT

    layered = load_roots([CATALOG_ROOT, FIXTURES / "private_root"])
    shadowed = prepare_text(STSB_RECIPE, layered).instances["test"][0].source
    assert shadowed != golden
    assert "<user>" in shadowed and "<sys>" in shadowed
    assert "[User]:" not in shadowed

    restored = prepare_text(STSB_RECIPE, load_roots([CATALOG_ROOT])).instances["test"][0].source
    assert restored == GOLDEN_PROMPT
    ok("private catalog root shadows the format; removing it restores the golden")


PARITY_CASES = [
    {"recipe": STSB_RECIPE, "split": "test", "max_instances": 6},
    {"recipe": "recipes.stsb_demo", "split": "test", "max_instances": 5},
    {"recipe": STSB_RECIPE, "split": "test", "max_instances": 6, "seed": 7},
    {"recipe": "recipes.sick_zero_shot", "split": "test", "max_instances": 6},
    {"recipe": "recipes.sick_zero_shot", "split": "validation", "max_instances": 6},
    {"recipe": "recipes.unfair_tos", "split": "test", "max_instances": 10},
    {"recipe": "recipes.sentiment_few_shot", "split": "test", "max_instances": 8},
    {
        "recipe": "card=cards.stsb,template=templates.text_similarity,format=formats.plain",
        "split": "test",
        "max_instances": 6,
    },
    {
        "recipe": (
            "card=cards.toy_sentiment,template=templates.classification.sentiment_words,"
            "format=formats.plain,num_demos=2,demos_pool_size=6"
        ),
        "split": "test",
        "max_instances": 8,
    },
    {"recipe": "recipes.unfair_tos", "split": "test", "max_instances": 10, "seed": 3},
]


def _cli(*args: str) -> subprocess.CompletedProcess:
    env = dict(os.environ)
    env.pop("PROMPTFORGE_CATALOGS", None)
    result = subprocess.run(
        [sys.executable, "-m", "promptforge", *args, "--catalog", str(CATALOG_ROOT)],
        capture_output=True,
        text=True,
        cwd=REPO_ROOT,
        env=env,
    )
    assert result.returncode == 0, result.stderr
    return result


def test_service_cli_parity(tmp_path, roots):
    client = TestClient(create_app(roots))
    for i, case in enumerate(PARITY_CASES):
        body = client.post("/prepare", json=case)
        assert body.status_code == 200, body.text
        service_instances = body.json()["instances"]

        out = tmp_path / f"case{i}.jsonl"
        args = [
            "prepare", "--recipe", case["recipe"], "--out", str(out),
            "--split", case["split"], "--max-instances", str(case["max_instances"]),
        ]
        if "seed" in case:
            args += ["--seed", str(case["seed"])]
        _cli(*args)
        cli_instances = [
            json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()
        ]
        assert service_instances == cli_instances, f"prepare parity failed on case {i}"

        preds = tmp_path / f"case{i}_preds.jsonl"
        preds.write_text(
            "".join(
                json.dumps({"prediction": row["target"]}) + "\n" for row in cli_instances
            ),
            encoding="utf-8",
        )
        report_path = tmp_path / f"case{i}_report.json"
        _cli(
            "evaluate", "--dataset", str(out), "--predictions", str(preds),
            "--out", str(report_path),
        )
        cli_report = json.loads(report_path.read_text(encoding="utf-8"))

        eval_body = client.post("/evaluate", json={**case, "echo_target": True})
        assert eval_body.status_code == 200, eval_body.text
        service_report = eval_body.json()["report"]
        assert service_report == cli_report, f"evaluate parity failed on case {i}"
    ok(f"service and CLI agree on prepare+evaluate for {len(PARITY_CASES)} cases")
