"""Sub-table sampling for data enrichment.

Samples contiguous logical sub-rectangles of a table subject to hard
constraints: the region keeps more than 4 rows and more than 4 columns,
contains at least one span cell with all of its rows and columns retained,
and for wireless tables starts at the first row and first column (headers
carry the row/column semantics there). Cells cut by the region boundary are
never truncated; the region shrinks until no cell is cut.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .geometry import BBox, Cell, GridEntry, LogicalCoords, TableAnnotation
from .ingest import crop_table

MIN_ROWS = 5  # "more than 4"
MIN_COLS = 5
MAX_ATTEMPTS = 32


@dataclass(frozen=True)
class AugmentConfig:
    samples_per_table: int = 1
    rng_seed: int = 0
    wireless: bool = False


@dataclass(frozen=True)
class SubTable:
    ann: TableAnnotation
    region: tuple[int, int, int, int]  # r1, r2, c1, c2 in source logical indices


def table_rng(cfg: AugmentConfig, table_id: str) -> random.Random:
    """Deterministic per-table generator, independent of corpus order."""
    digest = hashlib.sha256(f"{cfg.rng_seed}:{table_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def sample_subtable(
    ann: TableAnnotation, cfg: AugmentConfig, rng: random.Random | None = None
) -> SubTable | None:
    """Draw one constraint-satisfying sub-table, or None when impossible."""
    rng = rng if rng is not None else random.Random(cfg.rng_seed)
    rows, cols = ann.n_rows, ann.n_cols
    if rows < MIN_ROWS or cols < MIN_COLS or not ann.span_cells():
        return None
    for _ in range(MAX_ATTEMPTS):
        region = _propose(rng, rows, cols, cfg.wireless)
        region = _shrink_until_uncut(ann, region)
        if region is None:
            continue
        r1, r2, c1, c2 = region
        if r2 - r1 + 1 < MIN_ROWS or c2 - c1 + 1 < MIN_COLS:
            continue
        if not _has_inner_span(ann, region):
            continue
        return SubTable(_extract(ann, region), region)
    return None


def _propose(
    rng: random.Random, rows: int, cols: int, wireless: bool
) -> tuple[int, int, int, int]:
    if wireless:
        r1, c1 = 0, 0
    else:
        r1 = rng.randint(0, rows - MIN_ROWS)
        c1 = rng.randint(0, cols - MIN_COLS)
    r2 = rng.randint(r1 + MIN_ROWS - 1, rows - 1)
    c2 = rng.randint(c1 + MIN_COLS - 1, cols - 1)
    return r1, r2, c1, c2


def _shrink_until_uncut(
    ann: TableAnnotation, region: tuple[int, int, int, int]
) -> tuple[int, int, int, int] | None:
    r1, r2, c1, c2 = region
    while True:
        changed = False
        for cell in ann.cells:
            lg = cell.logical
            inside_rows = lg.end_row >= r1 and lg.start_row <= r2
            inside_cols = lg.end_col >= c1 and lg.start_col <= c2
            if not (inside_rows and inside_cols):
                continue
            if lg.start_row < r1:
                r1 = lg.end_row + 1
                changed = True
            if lg.end_row > r2:
                r2 = lg.start_row - 1
                changed = True
            if lg.start_col < c1:
                c1 = lg.end_col + 1
                changed = True
            if lg.end_col > c2:
                c2 = lg.start_col - 1
                changed = True
            if r1 > r2 or c1 > c2:
                return None
        if not changed:
            return r1, r2, c1, c2


def _has_inner_span(ann: TableAnnotation, region: tuple[int, int, int, int]) -> bool:
    r1, r2, c1, c2 = region
    return any(
        lg.start_row >= r1 and lg.end_row <= r2 and lg.start_col >= c1 and lg.end_col <= c2
        for lg in (c.logical for c in ann.span_cells())
    )


def _extract(ann: TableAnnotation, region: tuple[int, int, int, int]) -> TableAnnotation:
    r1, r2, c1, c2 = region
    inside = [
        c
        for c in ann.cells
        if c.logical.start_row >= r1
        and c.logical.end_row <= r2
        and c.logical.start_col >= c1
        and c.logical.end_col <= c2
    ]
    inside.sort(key=lambda c: (c.logical.start_row, c.logical.start_col))
    id_map = {c.id: i for i, c in enumerate(inside)}
    cells = tuple(
        Cell(
            id=id_map[c.id],
            logical=LogicalCoords(
                c.logical.start_row - r1,
                c.logical.end_row - r1,
                c.logical.start_col - c1,
                c.logical.end_col - c1,
            ),
            bbox=c.bbox,
            content=c.content,
        )
        for c in inside
    )
    grids = tuple(
        GridEntry(cell_id=id_map[g.cell_id], row=g.row - r1, col=g.col - c1, bbox=g.bbox)
        for g in ann.grids
        if r1 <= g.row <= r2 and c1 <= g.col <= c2
    )

    region_box = _region_box(grids, cells)
    staged = TableAnnotation(
        image_size=ann.image_size, table_box=region_box, cells=cells, grids=grids
    )
    local, _clipped = crop_table(ann.image_size, staged)
    return local


def _region_box(grids: tuple[GridEntry, ...], cells: tuple[Cell, ...]) -> BBox:
    boxes = [g.bbox for g in grids] or [c.bbox for c in cells if c.bbox is not None]
    if not boxes:
        return BBox(0.0, 0.0, 1.0, 1.0)
    box = boxes[0]
    for b in boxes[1:]:
        box = box.union(b)
    return box


def augment_table(
    ann: TableAnnotation, cfg: AugmentConfig, table_id: str = ""
) -> list[SubTable]:
    """Up to samples_per_table seeded sub-tables for one source table."""
    rng = table_rng(cfg, table_id)
    out: list[SubTable] = []
    for _ in range(cfg.samples_per_table):
        sub = sample_subtable(ann, cfg, rng)
        if sub is not None:
            out.append(sub)
    return out
