"""Command-line pipeline: convert, clean, augment, genlabels, eval, sgcl-check.

Every command is deterministic given its flags and inputs; outputs are
sorted by sample id before writing. TABLEKIT_WORKERS is reserved for
record-level parallelism and currently ignored (processing is sequential,
which is already deterministic).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .augment import AugmentConfig, augment_table
from .geometry import AnnotationError, BBox, DiscretizationConfig
from .ingest import SOURCE_KINDS, clean, crop_table, unify
from .io import (
    Sample,
    read_html_samples,
    read_raw_records,
    read_samples,
    write_samples,
)
from .metrics import DetectionSet, ap50, corpus_eval
from . import taskgen


@click.group()
def main() -> None:
    """Table recognition data pipeline and evaluation toolkit."""


@main.command()
@click.option("--source-kind", type=click.Choice(SOURCE_KINDS), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--crop/--no-crop", default=True, help="re-normalize to the table box frame")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def convert(source_kind: str, in_path: str, out_path: str, crop: bool, report_path: str | None) -> None:
    """Unify foreign records into the annotation format."""
    records = read_raw_records(in_path)
    samples: list[Sample] = []
    notes: list[str] = []
    for index, record in enumerate(records):
        sample_id = str(record.get("id", f"rec{index:06d}"))
        try:
            ann = unify(record, source_kind)
        except (KeyError, ValueError) as exc:
            raise click.ClickException(f"record {sample_id}: {exc}") from exc
        if crop:
            try:
                ann, clipped = crop_table(ann.image_size, ann)
            except AnnotationError as exc:
                raise click.ClickException(f"record {sample_id}: {exc}") from exc
            if clipped:
                notes.append(f"{sample_id},clipped,cells {' '.join(map(str, clipped))}")
        extras = {k: v for k, v in record.items() if k in ("wireless",)}
        samples.append(Sample(id=sample_id, ann=ann, extras=extras))
    samples.sort(key=lambda s: s.id)
    write_samples(out_path, samples)
    if report_path is not None:
        Path(report_path).write_text("".join(line + "\n" for line in notes))
    click.echo(f"converted {len(samples)} records -> {out_path}")


@main.command("clean")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), required=True)
def clean_cmd(in_path: str, out_path: str, report_path: str) -> None:
    """Drop inconsistent annotations and collapse redundant grids."""
    samples = read_samples(in_path)
    result = clean([s.ann for s in samples], [s.id for s in samples])
    extras_by_id = {s.id: s.extras for s in samples}
    kept = [
        Sample(id=sample_id, ann=ann, extras=extras_by_id.get(sample_id, {}))
        for sample_id, ann in zip(result.kept_ids, result.kept)
    ]
    kept.sort(key=lambda s: s.id)
    write_samples(out_path, kept)
    lines = [f"{d.id},{d.rule},{d.detail}" for d in result.dropped]
    lines += [f"{sample_id},collapsed,redundant grids merged" for sample_id in result.collapsed_ids]
    Path(report_path).write_text("".join(line + "\n" for line in sorted(lines)))
    click.echo(f"kept {len(kept)} / {len(samples)}; dropped {len(result.dropped)}")


@main.command("augment")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--per-table", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def augment_cmd(in_path: str, out_path: str, per_table: int, seed: int) -> None:
    """Sample span-preserving sub-tables from each annotation."""
    samples = read_samples(in_path)
    out: list[Sample] = []
    for sample in samples:
        cfg = AugmentConfig(
            samples_per_table=per_table,
            rng_seed=seed,
            wireless=bool(sample.extras.get("wireless", False)),
        )
        for k, sub in enumerate(augment_table(sample.ann, cfg, table_id=sample.id)):
            out.append(
                Sample(
                    id=f"{sample.id}-aug{k}",
                    ann=sub.ann,
                    extras={"augmented_from": sample.id, "region": list(sub.region)},
                )
            )
    out.sort(key=lambda s: s.id)
    write_samples(out_path, out)
    click.echo(f"augmented {len(samples)} tables -> {len(out)} sub-tables")


def _parse_query(raw: str) -> BBox:
    parts = [float(v) for v in raw.split(",")]
    if len(parts) != 4:
        raise click.BadParameter("query must be x1,y1,x2,y2")
    return BBox(*parts)


@main.command("genlabels")
@click.option("--task", type=click.Choice(taskgen.TASKS), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--bins", type=int, default=1000, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["html", "markdown"]), default="html",
              show_default=True, help="structure_parse output format")
@click.option("--include-span-cells/--exclude-span-cells", default=True,
              help="whether cell_detect lists span cells")
@click.option("--query", default=None, help="spot_boxquery region as x1,y1,x2,y2 (normalized)")
@click.option("--no-coords", is_flag=True, default=False, help="coordinate-free spotting targets")
def genlabels_cmd(
    task: str,
    in_path: str,
    out_path: str,
    bins: int,
    fmt: str,
    include_span_cells: bool,
    query: str | None,
    no_coords: bool,
) -> None:
    """Generate task prompt/target labels from annotations."""
    import json

    cfg = DiscretizationConfig(bins=bins)
    samples = sorted(read_samples(in_path), key=lambda s: s.id)
    with open(out_path, "w", encoding="utf-8") as fh:
        for sample in samples:
            ann = sample.ann
            try:
                if task == "cell_detect":
                    ts = taskgen.gen_cell_detect(ann, cfg, include_span_cells=include_span_cells)
                elif task == "span_cell_detect":
                    ts = taskgen.gen_span_cell_detect(ann, cfg)
                elif task == "row_col_detect":
                    ts = taskgen.gen_row_col_detect(ann, cfg)
                elif task == "structure_parse":
                    ts = taskgen.gen_structure_parse(ann, fmt)
                elif task == "html_parse":
                    ts = taskgen.gen_html_parse(ann)
                else:
                    lines = [(c.bbox, c.content) for c in ann.cells if c.content and c.bbox]
                    if task == "spot_ordered":
                        ts = taskgen.gen_spot_ordered(lines, with_coords=not no_coords, cfg=cfg)
                    else:
                        box = _parse_query(query) if query else BBox(0.0, 0.0, 1.0, 1.0)
                        ts = taskgen.gen_spot_boxquery(lines, box, with_coords=not no_coords, cfg=cfg)
            except (AnnotationError, ValueError) as exc:
                raise click.ClickException(f"sample {sample.id}: {exc}") from exc
            fh.write(
                json.dumps(
                    {"id": sample.id, "task": ts.task, "prompt": ts.prompt, "target": ts.target},
                    sort_keys=True,
                )
                + "\n"
            )
    click.echo(f"wrote {len(samples)} {task} labels -> {out_path}")


@main.command("eval")
@click.option("--metric", type=click.Choice(["teds", "ap50"]), required=True)
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def eval_cmd(metric: str, pred_path: str, gt_path: str, report_path: str | None) -> None:
    """Score predictions against ground truth."""
    if metric == "teds":
        preds = read_html_samples(pred_path)
        gts = read_html_samples(gt_path)
        report = corpus_eval(preds, gts)
        lines = ["id,teds,teds_s,teds_delta,flags"]
        for score in report.per_sample:
            r = score.result
            lines.append(
                f"{score.id},{r.teds:.6f},{r.teds_s:.6f},{r.teds_delta:.6f},{' '.join(r.flags)}"
            )
        for sample_id in report.extra_pred:
            lines.append(f"{sample_id},,,,extra_pred")
        summary = (
            f"#summary mean_teds={report.mean_teds:.6f} mean_teds_s={report.mean_teds_s:.6f} "
            f"mean_teds_delta={report.mean_teds_delta:.6f}"
        )
        lines.append(summary)
        if report_path is not None:
            Path(report_path).write_text("".join(line + "\n" for line in lines))
        click.echo(summary)
        return

    pred_samples = {s.id: s for s in read_samples(pred_path)}
    gt_samples = sorted(read_samples(gt_path), key=lambda s: s.id)
    det_list, gt_list = [], []
    for sample in gt_samples:
        gt_list.append([c.bbox for c in sample.ann.cells if c.bbox is not None])
        pred = pred_samples.get(sample.id)
        boxes = (
            tuple(c.bbox for c in pred.ann.cells if c.bbox is not None) if pred else ()
        )
        det_list.append(DetectionSet(boxes=boxes))
    value = ap50(det_list, gt_list)
    summary = f"#summary ap50={value:.6f}"
    if report_path is not None:
        Path(report_path).write_text(summary + "\n")
    click.echo(summary)


@main.command("sgcl-check")
@click.option("--fixtures", "fixtures_path", type=click.Path(exists=True), required=True,
              help="fixture JSON file or directory of fixtures")
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option("--grad-seeds", type=int, default=3, show_default=True,
              help="directional gradient checks per loss term")
def sgcl_check_cmd(fixtures_path: str, tolerance: float, grad_seeds: int) -> None:
    """Run the localization invariant and gradient-check suite."""
    import torch

    from .sgcl.fixtures import load_instance
    from .sgcl.gradcheck import LOSS_TERMS, check_instance
    from .sgcl.invariants import run_invariant_suite

    torch.set_num_threads(1)  # tiny tensors: avoid thread-pool overhead

    path = Path(fixtures_path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise click.UsageError(f"no fixture files under {fixtures_path}")

    failures = 0
    for file in files:
        inst = load_instance(file)
        for name, ok, detail in run_invariant_suite(inst):
            status = "PASS" if ok else "FAIL"
            failures += 0 if ok else 1
            click.echo(f"{file.name:30s} {name:28s} {status} {detail}")
        for term in LOSS_TERMS:
            worst = max(
                check_instance(inst, term=term, seed=seed) for seed in range(grad_seeds)
            )
            ok = worst <= tolerance
            failures += 0 if ok else 1
            click.echo(
                f"{file.name:30s} grad[{term}]{'':17s} "
                f"{'PASS' if ok else 'FAIL'} max_rel_err={worst:.3e}"
            )
    if failures:
        click.echo(f"{failures} check(s) failed", err=True)
        sys.exit(1)
    click.echo("all checks passed")


@main.command("sgcl-fixture")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def sgcl_fixture_cmd(out_path: str, seed: int) -> None:
    """Write a seeded toy fixture for sgcl-check."""
    from .sgcl.fixtures import make_toy_instance, save_instance

    save_instance(out_path, make_toy_instance(seed=seed))
    click.echo(f"wrote fixture -> {out_path}")


if __name__ == "__main__":
    main()
