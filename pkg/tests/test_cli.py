import json
import random
from pathlib import Path

import pytest
from click.testing import CliRunner

from tablekit.cli import main
from tablekit.geometry import DiscretizationConfig, discretize
from tablekit.htmlcodec import grid_to_html, serialize_html
from tablekit.io import Sample, read_samples, write_samples

from tests import corrupt
from tests.genann import random_annotation

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture()
def runner():
    return CliRunner()


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _pubtabnet_records(rng: random.Random, count: int) -> list[dict]:
    records = []
    for i in range(count):
        ann = random_annotation(rng, max_rows=5, max_cols=5)
        w, h = ann.image_size
        records.append(
            {
                "id": f"t{i:03d}",
                "image_size": [w, h],
                "html": serialize_html(grid_to_html(ann)),
                "cell_boxes": [
                    [c.bbox.x1 * w, c.bbox.y1 * h, c.bbox.x2 * w, c.bbox.y2 * h]
                    for c in ann.cells
                ],
            }
        )
    return records


class TestConvert:
    def test_empty_input_empty_output(self, runner, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text("")
        out = tmp_path / "out.jsonl"
        result = runner.invoke(
            main, ["convert", "--source-kind", "grid-like", "--in", str(src), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert out.read_text() == ""

    def test_unknown_source_kind_usage_error(self, runner, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text("")
        result = runner.invoke(
            main, ["convert", "--source-kind", "mystery", "--in", str(src), "--out", "x"]
        )
        assert result.exit_code == 2

    def test_golden_file_byte_identical(self, runner, tmp_path):
        out = tmp_path / "out.jsonl"
        result = runner.invoke(
            main,
            [
                "convert",
                "--source-kind",
                "pubtabnet-like",
                "--in",
                str(DATA_DIR / "convert_input.jsonl"),
                "--out",
                str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes() == (DATA_DIR / "convert_golden.jsonl").read_bytes()

    def test_output_sorted_by_id(self, runner, tmp_path):
        rng = random.Random(1)
        records = _pubtabnet_records(rng, 5)
        records.reverse()
        src = tmp_path / "in.jsonl"
        _write_jsonl(src, records)
        out = tmp_path / "out.jsonl"
        result = runner.invoke(
            main,
            ["convert", "--source-kind", "pubtabnet-like", "--in", str(src), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        ids = [s.id for s in read_samples(out)]
        assert ids == sorted(ids)


class TestCleanCmd:
    def test_already_clean_corpus_empty_report(self, runner, tmp_path):
        rng = random.Random(2)
        samples = [
            Sample(id=f"s{i}", ann=corrupt.clean_base(rng)) for i in range(8)
        ]
        src = tmp_path / "in.jsonl"
        write_samples(src, samples)
        out = tmp_path / "out.jsonl"
        report = tmp_path / "report.csv"
        result = runner.invoke(
            main, ["clean", "--in", str(src), "--out", str(out), "--report", str(report)]
        )
        assert result.exit_code == 0, result.output
        assert report.read_text() == ""
        assert len(read_samples(out)) == 8

    def test_corrupted_fixtures_match_manifest(self, runner, tmp_path):
        rng = random.Random(3)
        anns, expected = corrupt.corpus(rng, size=40)
        samples = [Sample(id=f"{i:03d}", ann=ann) for i, ann in enumerate(anns)]
        src = tmp_path / "in.jsonl"
        write_samples(src, samples)
        out = tmp_path / "out.jsonl"
        report = tmp_path / "report.csv"
        result = runner.invoke(
            main, ["clean", "--in", str(src), "--out", str(out), "--report", str(report)]
        )
        assert result.exit_code == 0, result.output
        decisions = {f"{i:03d}": e for i, e in enumerate(expected)}
        reported: dict[str, str] = {}
        for line in report.read_text().splitlines():
            sample_id, rule, _detail = line.split(",", 2)
            reported[sample_id] = "collapse" if rule == "collapsed" else f"drop:{rule}"
        for sample_id, decision in decisions.items():
            if decision == corrupt.KEEP:
                assert sample_id not in reported
            elif decision == corrupt.COLLAPSE:
                assert reported.get(sample_id) == "collapse"
            else:
                assert reported.get(sample_id) == decision

    def test_idempotent_on_own_output(self, runner, tmp_path):
        rng = random.Random(4)
        anns, _ = corrupt.corpus(rng, size=24)
        samples = [Sample(id=f"{i:03d}", ann=ann) for i, ann in enumerate(anns)]
        first_in = tmp_path / "in.jsonl"
        write_samples(first_in, samples)
        out1 = tmp_path / "out1.jsonl"
        out2 = tmp_path / "out2.jsonl"
        report1 = tmp_path / "r1.csv"
        report2 = tmp_path / "r2.csv"
        assert (
            runner.invoke(
                main, ["clean", "--in", str(first_in), "--out", str(out1), "--report", str(report1)]
            ).exit_code
            == 0
        )
        assert (
            runner.invoke(
                main, ["clean", "--in", str(out1), "--out", str(out2), "--report", str(report2)]
            ).exit_code
            == 0
        )
        assert report2.read_text() == ""
        assert out1.read_bytes() == out2.read_bytes()


class TestAugmentCmd:
    def _corpus(self, tmp_path) -> Path:
        rng = random.Random(5)
        samples = []
        for i in range(6):
            while True:
                ann = random_annotation(rng, max_rows=9, max_cols=9, min_rows=6, min_cols=6)
                if ann.span_cells():
                    break
            samples.append(Sample(id=f"t{i}", ann=ann, extras={"wireless": i % 2 == 0}))
        src = tmp_path / "tables.jsonl"
        write_samples(src, samples)
        return src

    def test_seed_determinism(self, runner, tmp_path):
        src = self._corpus(tmp_path)
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (out1, out2):
            result = runner.invoke(
                main,
                ["augment", "--in", str(src), "--out", str(out), "--per-table", "3", "--seed", "7"],
            )
            assert result.exit_code == 0, result.output
        assert out1.read_bytes() == out2.read_bytes()

    def test_constraints_and_provenance(self, runner, tmp_path):
        from tests.test_augment import check_subtable_constraints

        src = self._corpus(tmp_path)
        out = tmp_path / "aug.jsonl"
        result = runner.invoke(
            main,
            ["augment", "--in", str(src), "--out", str(out), "--per-table", "2", "--seed", "1"],
        )
        assert result.exit_code == 0, result.output
        originals = {s.id: s for s in read_samples(src)}
        for sample in read_samples(out):
            source = originals[sample.extras["augmented_from"]]
            problems = check_subtable_constraints(
                sample.ann,
                tuple(sample.extras["region"]),
                bool(source.extras.get("wireless", False)),
            )
            assert problems == [], problems

    def test_per_table_zero(self, runner, tmp_path):
        src = self._corpus(tmp_path)
        out = tmp_path / "aug.jsonl"
        result = runner.invoke(
            main, ["augment", "--in", str(src), "--out", str(out), "--per-table", "0", "--seed", "1"]
        )
        assert result.exit_code == 0, result.output
        assert out.read_text() == ""


class TestGenlabelsCmd:
    def _annotations(self, tmp_path) -> Path:
        rng = random.Random(6)
        samples = [Sample(id=f"g{i}", ann=random_annotation(rng, 5, 5)) for i in range(5)]
        src = tmp_path / "anns.jsonl"
        write_samples(src, samples)
        return src

    @pytest.mark.parametrize(
        "task",
        ["cell_detect", "span_cell_detect", "row_col_detect", "structure_parse", "html_parse",
         "spot_ordered", "spot_boxquery"],
    )
    def test_targets_round_trip(self, runner, tmp_path, task):
        from tablekit import taskgen

        src = self._annotations(tmp_path)
        out = tmp_path / f"{task}.jsonl"
        result = runner.invoke(
            main, ["genlabels", "--task", task, "--in", str(src), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        for line in out.read_text().splitlines():
            record = json.loads(line)
            assert record["task"] == task
            target = record["target"]
            if task == "cell_detect":
                assert taskgen.parse_cell_detect_target(target) is not None
            elif task == "span_cell_detect":
                taskgen.parse_span_cell_target(target)
            elif task == "row_col_detect":
                taskgen.parse_row_col_target(target)
            elif task == "structure_parse":
                from tablekit.htmlcodec import parse_html_string

                assert parse_html_string(target) is not None
            elif task == "html_parse":
                from tablekit.htmlcodec import parse_html_string

                assert parse_html_string(target) is not None
            else:
                taskgen.parse_spot_target(target) if target != "<none>" else None

    def test_unknown_task_usage_error(self, runner, tmp_path):
        src = self._annotations(tmp_path)
        result = runner.invoke(
            main, ["genlabels", "--task", "mystery", "--in", str(src), "--out", "x"]
        )
        assert result.exit_code == 2

    def test_bins_flag_reaches_discretize(self, runner, tmp_path):
        src = self._annotations(tmp_path)
        out = tmp_path / "labels.jsonl"
        result = runner.invoke(
            main,
            ["genlabels", "--task", "cell_detect", "--in", str(src), "--out", str(out), "--bins", "10"],
        )
        assert result.exit_code == 0, result.output
        sample = read_samples(src)[0]
        record = json.loads(out.read_text().splitlines()[0])
        cfg = DiscretizationConfig(bins=10)
        ordered = sorted(
            sample.ann.cells, key=lambda c: (c.logical.start_row, c.logical.start_col)
        )
        first = discretize(ordered[0].bbox, cfg)
        assert record["target"].startswith(f"<{first[0]},{first[1]},{first[2]},{first[3]}>")


class TestEvalCmd:
    def test_teds_perfect_and_ap50_perfect(self, runner, tmp_path):
        rng = random.Random(7)
        samples = [Sample(id=f"e{i}", ann=random_annotation(rng, 4, 4)) for i in range(6)]
        ann_path = tmp_path / "anns.jsonl"
        write_samples(ann_path, samples)
        html_records = [
            {"id": s.id, "html": serialize_html(grid_to_html(s.ann))} for s in samples
        ]
        pred = tmp_path / "pred.jsonl"
        gt = tmp_path / "gt.jsonl"
        _write_jsonl(pred, html_records)
        _write_jsonl(gt, html_records)
        report = tmp_path / "teds.csv"
        result = runner.invoke(
            main,
            ["eval", "--metric", "teds", "--pred", str(pred), "--gt", str(gt), "--report", str(report)],
        )
        assert result.exit_code == 0, result.output
        assert "mean_teds=1.000000" in result.output
        assert "mean_teds_s=1.000000" in result.output
        assert "mean_teds_delta=0.000000" in result.output
        lines = report.read_text().splitlines()
        assert lines[0] == "id,teds,teds_s,teds_delta,flags"
        assert len(lines) == 1 + 6 + 1

        result = runner.invoke(
            main, ["eval", "--metric", "ap50", "--pred", str(ann_path), "--gt", str(ann_path)]
        )
        assert result.exit_code == 0, result.output
        assert "ap50=1.000000" in result.output

    def test_teds_report_flags_mismatched_ids(self, runner, tmp_path):
        pred = tmp_path / "pred.jsonl"
        gt = tmp_path / "gt.jsonl"
        _write_jsonl(pred, [{"id": "only_pred", "html": "<table></table>"}])
        _write_jsonl(gt, [{"id": "only_gt", "html": "<table><tr><td>a</td></tr></table>"}])
        report = tmp_path / "r.csv"
        result = runner.invoke(
            main,
            ["eval", "--metric", "teds", "--pred", str(pred), "--gt", str(gt), "--report", str(report)],
        )
        assert result.exit_code == 0
        text = report.read_text()
        assert "only_gt,0.000000" in text and "missing_pred" in text
        assert "only_pred,,,,extra_pred" in text


class TestSgclCheckCmd:
    def test_fixture_passes_and_zero_tolerance_fails(self, runner, tmp_path):
        fixture = tmp_path / "toy.json"
        result = runner.invoke(main, ["sgcl-fixture", "--out", str(fixture), "--seed", "3"])
        assert result.exit_code == 0, result.output

        result = runner.invoke(
            main,
            ["sgcl-check", "--fixtures", str(fixture), "--tolerance", "1e-4", "--grad-seeds", "1"],
        )
        assert result.exit_code == 0, result.output
        assert "all checks passed" in result.output

        result = runner.invoke(
            main,
            ["sgcl-check", "--fixtures", str(fixture), "--tolerance", "0", "--grad-seeds", "1"],
        )
        assert result.exit_code == 1

    def test_missing_fixtures_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["sgcl-check", "--fixtures", str(tmp_path / "nope.json")])
        assert result.exit_code == 2
        empty_dir = tmp_path / "empty"
        empty_dir.mkdir()
        result = runner.invoke(main, ["sgcl-check", "--fixtures", str(empty_dir)])
        assert result.exit_code == 2


class TestIoRoundTrip:
    def test_samples_round_trip(self, tmp_path):
        rng = random.Random(8)
        samples = [
            Sample(id=f"io{i}", ann=random_annotation(rng, 5, 5), extras={"wireless": True})
            for i in range(10)
        ]
        path = tmp_path / "anns.jsonl"
        write_samples(path, samples)
        loaded = read_samples(path)
        assert [s.id for s in loaded] == [s.id for s in samples]
        for a, b in zip(loaded, samples):
            assert a.ann == b.ann
            assert a.extras["wireless"] is True
