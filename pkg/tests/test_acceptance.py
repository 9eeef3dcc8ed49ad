"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and measured runtimes.
"""

import json
import random
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from tablekit.cli import main as cli_main
from tablekit.geometry import BBox
from tablekit.htmlcodec import grid_to_html, serialize_html
from tablekit.ingest import clean
from tablekit.io import Sample, read_samples, write_samples
from tablekit.metrics import DetectionSet, ap50, tree_edit_distance
from tablekit.augment import AugmentConfig, augment_table
from tablekit.sgcl import LossWeights, combine_losses, make_toy_instance
from tablekit.sgcl.gradcheck import check_instance
from tablekit.sgcl.invariants import run_invariant_suite

from tests import corrupt
from tests.genann import random_annotation
from tests.oracles import brute_force_ted, reference_ap50
from tests.test_augment import check_subtable_constraints
from tests.treegen import tree_pool


def _report(criterion: int, description: str, ok: bool, note: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({note})" if note else ""
    print(f"[{status}] criterion {criterion}: {description}{suffix}")
    assert ok, f"criterion {criterion} failed: {description} {suffix}"


def test_criterion_1_ted_oracle_equivalence():
    start = time.monotonic()
    pool = tree_pool()
    pairs = 0
    worst = 0.0
    for a in pool:
        for b in pool:
            got = tree_edit_distance(a, b)
            want = brute_force_ted(a, b)
            worst = max(worst, abs(got - want))
            pairs += 1
    elapsed = time.monotonic() - start
    ok = pairs >= 5000 and worst <= 1e-9 and elapsed < 60
    _report(
        1,
        "tree edit distance equals brute-force oracle on exhaustive small-tree pairs",
        ok,
        f"{pairs} pairs, max dev {worst:.2e}, {elapsed:.1f}s",
    )


# Published benchmark rows: (structure score, full score, reported gap).
BENCHMARK_TRIPLES = [
    (96.82, 95.48, 1.34),
    (98.39, 97.97, 0.42),
    (96.70, 94.60, 2.10),
    (96.75, 93.60, 3.15),
    (96.43, 86.57, 9.86),
    (67.53, 54.67, 12.86),
    (90.45, 88.83, 1.62),
    (93.35, 91.30, 2.05),
    (93.76, 90.65, 3.11),
    (93.11, 89.07, 4.04),
    (91.62, 87.27, 4.35),
    (89.90, 88.30, 1.60),
    (96.27, 95.12, 1.15),
    (96.84, 96.10, 0.74),
]


def test_criterion_2_benchmark_triple_consistency():
    start = time.monotonic()
    worst = max(abs((s - t) - d) for s, t, d in BENCHMARK_TRIPLES)
    elapsed = time.monotonic() - start
    ok = worst <= 0.01 + 1e-12 and elapsed < 1
    _report(
        2,
        "structure-minus-full equals the reported delta for every benchmark row",
        ok,
        f"{len(BENCHMARK_TRIPLES)} rows, max dev {worst:.4f}",
    )


def test_criterion_3_ap50_oracle_equivalence():
    start = time.monotonic()
    rng = random.Random(1234)
    worst = 0.0
    for _ in range(500):
        n_images = rng.randint(1, 2)
        gts, dets, pb, ps = [], [], [], []
        for _ in range(n_images):
            gt = [_scene_box(rng) for _ in range(rng.randint(0, 6))]
            boxes = [_scene_jitter(rng, b) for b in gt if rng.random() < 0.75]
            boxes += [_scene_box(rng) for _ in range(rng.randint(0, 6 - min(6, len(boxes))))]
            scores = [round(rng.random(), 4) for _ in boxes]
            gts.append(gt)
            dets.append(DetectionSet(boxes=tuple(boxes), scores=tuple(scores)))
            pb.append(boxes)
            ps.append(scores)
        got = ap50(dets, gts)
        want = reference_ap50(pb, ps, gts)
        worst = max(worst, abs(got - want))
    elapsed = time.monotonic() - start
    ok = worst <= 1e-6 and elapsed < 30
    _report(
        3,
        "detection AP at 0.5 equals the exhaustive matcher + PR oracle on 500 scenes",
        ok,
        f"max dev {worst:.2e}, {elapsed:.1f}s",
    )


def _scene_box(rng: random.Random) -> BBox:
    x1, y1 = rng.uniform(0, 0.6), rng.uniform(0, 0.6)
    return BBox(x1, y1, x1 + rng.uniform(0.05, 0.38), y1 + rng.uniform(0.05, 0.38))


def _scene_jitter(rng: random.Random, box: BBox) -> BBox:
    dx, dy = rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)
    clamp = lambda v: min(max(v, 0.0), 1.0)
    return BBox(clamp(box.x1 + dx), clamp(box.y1 + dy), clamp(box.x2 + dx), clamp(box.y2 + dy))


def test_criterion_4_html_round_trip():
    from tablekit.htmlcodec import html_to_grid, parse_html_string

    start = time.monotonic()
    rng = random.Random(777)
    for _ in range(1000):
        ann = random_annotation(rng, max_rows=10, max_cols=10, span_fraction=0.3, with_boxes=False)
        back = html_to_grid(parse_html_string(serialize_html(grid_to_html(ann))))
        assert len(back.cells) == len(ann.cells)
        assert [c.logical for c in back.cells] == [c.logical for c in ann.cells]
        assert [c.content for c in back.cells] == [c.content for c in ann.cells]
    elapsed = time.monotonic() - start
    ok = elapsed < 10
    _report(
        4,
        "1000 random annotations round-trip through HTML with identical grids",
        ok,
        f"{elapsed:.1f}s",
    )


def test_criterion_5_cleaning_rule_fidelity():
    start = time.monotonic()
    rng = random.Random(555)
    anns, expected = corrupt.corpus(rng, size=300)
    result = clean(anns, [str(i) for i in range(len(anns))])
    decisions = corrupt.decisions_from_result(result, len(anns))
    mismatches = sum(1 for got, want in zip(decisions, expected) if got != want)

    second = clean(list(result.kept), list(result.kept_ids))
    idempotent = (
        len(second.kept) == len(result.kept)
        and second.dropped == ()
        and second.collapsed_ids == ()
    )
    elapsed = time.monotonic() - start
    ok = mismatches == 0 and idempotent
    _report(
        5,
        "cleaning decisions match the injected-corruption manifest and clean is idempotent",
        ok,
        f"300 samples, {mismatches} mismatches, {elapsed:.1f}s",
    )


def test_criterion_6_augmentation_constraints():
    start = time.monotonic()
    rng = random.Random(666)
    tables = []
    while len(tables) < 20:
        ann = random_annotation(rng, max_rows=10, max_cols=10, min_rows=7, min_cols=7)
        if ann.span_cells():
            tables.append(ann)

    def harvest() -> tuple[list, bytes]:
        collected = []
        payload = []
        for i, ann in enumerate(tables):
            cfg = AugmentConfig(samples_per_table=60, rng_seed=4242, wireless=i % 2 == 0)
            for sub in augment_table(ann, cfg, table_id=f"table{i}"):
                collected.append((sub, i % 2 == 0))
                payload.append(
                    json.dumps(
                        {
                            "region": list(sub.region),
                            "cells": [c.content for c in sub.ann.cells],
                            "boxes": [c.bbox.as_list() for c in sub.ann.cells],
                        },
                        sort_keys=True,
                    )
                )
                if len(collected) >= 1000:
                    return collected, "\n".join(payload).encode()
        return collected, "\n".join(payload).encode()

    first, bytes_a = harvest()
    _, bytes_b = harvest()
    violations = 0
    for sub, wireless in first:
        if check_subtable_constraints(sub.ann, sub.region, wireless):
            violations += 1
    elapsed = time.monotonic() - start
    ok = len(first) >= 1000 and violations == 0 and bytes_a == bytes_b
    _report(
        6,
        "1000 seeded sub-tables satisfy all constraints; same seed is byte-identical",
        ok,
        f"{len(first)} samples, {violations} violations, {elapsed:.1f}s",
    )


def test_criterion_7_gradient_checks():
    start = time.monotonic()
    inst = make_toy_instance(seed=2024)
    worst = {term: 0.0 for term in ("ce", "b", "iou", "m", "s", "total")}
    for point in range(100):
        for term in worst:
            err = check_instance(inst, term=term, seed=point, perturb=0.05)
            worst[term] = max(worst[term], err)
    elapsed = time.monotonic() - start
    ok = max(worst.values()) <= 1e-4 and elapsed < 60
    note = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    _report(
        7,
        "analytic gradients of all loss terms match central differences at 100 points",
        ok,
        f"{note}, {elapsed:.1f}s",
    )


def test_criterion_8_structural_invariants():
    start = time.monotonic()
    failures = []
    for seed in range(100):
        inst = make_toy_instance(seed=seed)
        for name, passed, detail in run_invariant_suite(inst):
            if not passed:
                failures.append((seed, name, detail))
    elapsed = time.monotonic() - start
    ok = not failures
    _report(
        8,
        "mask isolation, permutation equivariance, fixed point, adjacency properties on 100 instances",
        ok,
        f"{len(failures)} failures, {elapsed:.1f}s",
    )


def test_criterion_9_loss_composition():
    ones = {"ce": 1.0, "b": 1.0, "iou": 1.0, "m": 1.0, "s": 1.0}
    total = combine_losses(ones, LossWeights())
    _report(9, "unit component losses compose to exactly 1.16", total == 1.16, f"total={total!r}")


def test_criterion_10_end_to_end_smoke(tmp_path):
    start = time.monotonic()
    runner = CliRunner()
    rng = random.Random(31337)

    records = []
    for i in range(50):
        while True:
            ann = random_annotation(rng, max_rows=9, max_cols=9, min_rows=5, min_cols=5)
            if ann.span_cells():
                break
        w, h = ann.image_size
        records.append(
            {
                "id": f"tbl{i:03d}",
                "image_size": [w, h],
                "wireless": i % 3 == 0,
                "html": serialize_html(grid_to_html(ann)),
                "cell_boxes": [
                    [c.bbox.x1 * w, c.bbox.y1 * h, c.bbox.x2 * w, c.bbox.y2 * h]
                    for c in ann.cells
                ],
            }
        )
    raw = tmp_path / "raw.jsonl"
    raw.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))

    unified = tmp_path / "unified.jsonl"
    cleaned = tmp_path / "cleaned.jsonl"
    augmented = tmp_path / "augmented.jsonl"
    merged = tmp_path / "merged.jsonl"
    labels = tmp_path / "labels.jsonl"
    report = tmp_path / "clean_report.csv"

    steps = [
        ["convert", "--source-kind", "pubtabnet-like", "--in", str(raw), "--out", str(unified)],
        ["clean", "--in", str(unified), "--out", str(cleaned), "--report", str(report)],
        ["augment", "--in", str(cleaned), "--out", str(augmented), "--per-table", "1", "--seed", "5"],
    ]
    for step in steps:
        result = runner.invoke(cli_main, step)
        assert result.exit_code == 0, f"{step}: {result.output}"

    corpus = read_samples(cleaned) + read_samples(augmented)
    assert len(read_samples(cleaned)) == 50
    assert len(read_samples(augmented)) > 0
    write_samples(merged, sorted(corpus, key=lambda s: s.id))

    result = runner.invoke(
        cli_main, ["genlabels", "--task", "html_parse", "--in", str(merged), "--out", str(labels)]
    )
    assert result.exit_code == 0, result.output

    html_file = tmp_path / "html.jsonl"
    with open(labels) as fh, open(html_file, "w") as out:
        for line in fh:
            record = json.loads(line)
            out.write(json.dumps({"id": record["id"], "html": record["target"]}) + "\n")

    teds_report = tmp_path / "teds_report.csv"
    result = runner.invoke(
        cli_main,
        ["eval", "--metric", "teds", "--pred", str(html_file), "--gt", str(html_file),
         "--report", str(teds_report)],
    )
    assert result.exit_code == 0, result.output
    assert "mean_teds=1.000000" in result.output
    assert "mean_teds_s=1.000000" in result.output
    assert "mean_teds_delta=0.000000" in result.output

    result = runner.invoke(
        cli_main, ["eval", "--metric", "ap50", "--pred", str(merged), "--gt", str(merged)]
    )
    assert result.exit_code == 0, result.output
    assert "ap50=1.000000" in result.output

    elapsed = time.monotonic() - start
    ok = elapsed < 30
    _report(
        10,
        "convert -> clean -> augment -> genlabels -> eval yields perfect self-scores",
        ok,
        f"{len(corpus)} records, {elapsed:.1f}s",
    )
