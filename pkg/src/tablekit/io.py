"""File formats: unified annotation records (JSON lines) and eval inputs.

One table per line. Field names follow the unified schema: image_size,
table_box, cells[{id, bbox, logical:{start_row,end_row,start_col,end_col},
content}], grids[{cell_id, row, col, bbox}]. Boxes are [x1,y1,x2,y2]
normalized reals; bbox may be null. Extra keys (id, wireless,
augmented_from, region) ride along unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import BBox, Cell, GridEntry, LogicalCoords, TableAnnotation

_KNOWN_KEYS = {"id", "image_size", "table_box", "cells", "grids"}


@dataclass
class Sample:
    """A unified annotation plus its corpus identity and extra metadata."""

    id: str
    ann: TableAnnotation
    extras: dict = field(default_factory=dict)


def _box_to_list(box: BBox | None) -> list[float] | None:
    return None if box is None else box.as_list()


def _box_from_list(raw) -> BBox | None:
    if raw is None:
        return None
    return BBox(*(float(v) for v in raw))


def ann_to_dict(ann: TableAnnotation) -> dict:
    return {
        "image_size": list(ann.image_size),
        "table_box": _box_to_list(ann.table_box),
        "cells": [
            {
                "id": c.id,
                "bbox": _box_to_list(c.bbox),
                "logical": {
                    "start_row": c.logical.start_row,
                    "end_row": c.logical.end_row,
                    "start_col": c.logical.start_col,
                    "end_col": c.logical.end_col,
                },
                "content": c.content,
            }
            for c in ann.cells
        ],
        "grids": [
            {"cell_id": g.cell_id, "row": g.row, "col": g.col, "bbox": _box_to_list(g.bbox)}
            for g in ann.grids
        ],
    }


def ann_from_dict(record: dict) -> TableAnnotation:
    cells = tuple(
        Cell(
            id=int(c["id"]),
            logical=LogicalCoords(
                int(c["logical"]["start_row"]),
                int(c["logical"]["end_row"]),
                int(c["logical"]["start_col"]),
                int(c["logical"]["end_col"]),
            ),
            bbox=_box_from_list(c.get("bbox")),
            content=str(c.get("content", "")),
        )
        for c in record["cells"]
    )
    grids = tuple(
        GridEntry(
            cell_id=int(g["cell_id"]),
            row=int(g["row"]),
            col=int(g["col"]),
            bbox=_box_from_list(g["bbox"]),
        )
        for g in record.get("grids", [])
    )
    return TableAnnotation(
        image_size=tuple(int(v) for v in record["image_size"]),
        table_box=_box_from_list(record["table_box"]),
        cells=cells,
        grids=grids,
    )


def sample_to_dict(sample: Sample) -> dict:
    record = {"id": sample.id}
    record.update(ann_to_dict(sample.ann))
    for key, value in sample.extras.items():
        if key not in _KNOWN_KEYS:
            record[key] = value
    return record


def sample_from_dict(record: dict) -> Sample:
    extras = {k: v for k, v in record.items() if k not in _KNOWN_KEYS}
    return Sample(id=str(record.get("id", "")), ann=ann_from_dict(record), extras=extras)


def read_samples(path: str | Path) -> list[Sample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(sample_from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad record: {exc}") from exc
    return samples


def write_samples(path: str | Path, samples: list[Sample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_dict(sample), sort_keys=True) + "\n")


def read_raw_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def read_html_samples(path: str | Path) -> dict[str, str]:
    """JSONL of {"id": ..., "html": ...} used by the TEDS evaluator."""
    out: dict[str, str] = {}
    for record in read_raw_records(path):
        out[str(record["id"])] = str(record.get("html", ""))
    return out


def write_html_samples(path: str | Path, samples: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id in sorted(samples):
            fh.write(json.dumps({"id": sample_id, "html": samples[sample_id]}, sort_keys=True) + "\n")
