"""Core geometry and table-annotation types shared by the whole toolkit.

All boxes are axis-aligned rectangles normalized to image size, stored as
top-left / bottom-right corners. Logical coordinates are 0-based inclusive
row/column index ranges; a cell spanning rows 1..2 has start_row=1,
end_row=2 and an HTML rowspan of 2.
"""

from __future__ import annotations

from dataclasses import dataclass


class AnnotationError(ValueError):
    """A table annotation violates a structural invariant."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized [0, 1] image coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"corners out of order: {self}")
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not (-1e-9 <= v <= 1 + 1e-9):
                raise ValueError(f"coordinate outside [0,1]: {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width * self.height

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.x1, other.x1),
            min(self.y1, other.y1),
            max(self.x2, other.x2),
            max(self.y2, other.y2),
        )

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class LogicalCoords:
    """Inclusive row/column index ranges occupied by one cell."""

    start_row: int
    end_row: int
    start_col: int
    end_col: int

    def __post_init__(self) -> None:
        if min(self.start_row, self.end_row, self.start_col, self.end_col) < 0:
            raise ValueError(f"negative logical index: {self}")
        if self.start_row > self.end_row or self.start_col > self.end_col:
            raise ValueError(f"inverted logical range: {self}")

    @property
    def rowspan(self) -> int:
        return self.end_row - self.start_row + 1

    @property
    def colspan(self) -> int:
        return self.end_col - self.start_col + 1

    def is_span(self) -> bool:
        """True when the cell covers more than one grid slot in either axis."""
        return self.end_row > self.start_row or self.end_col > self.start_col

    def slots(self) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r in range(self.start_row, self.end_row + 1)
            for c in range(self.start_col, self.end_col + 1)
        ]

    def intersects(self, other: "LogicalCoords") -> bool:
        return (
            self.start_row <= other.end_row
            and other.start_row <= self.end_row
            and self.start_col <= other.end_col
            and other.start_col <= self.end_col
        )

    def rows_intersect(self, other: "LogicalCoords") -> bool:
        return self.start_row <= other.end_row and other.start_row <= self.end_row

    def cols_intersect(self, other: "LogicalCoords") -> bool:
        return self.start_col <= other.end_col and other.start_col <= self.end_col


@dataclass(frozen=True)
class Cell:
    """One table cell: identity, optional box, logical footprint, text."""

    id: int
    logical: LogicalCoords
    bbox: BBox | None = None
    content: str = ""


@dataclass(frozen=True)
class GridEntry:
    """A single grid slot after span cells are split into unit slots."""

    cell_id: int
    row: int
    col: int
    bbox: BBox


@dataclass(frozen=True)
class TableAnnotation:
    """A unified table record: image frame, table box, cells, grid slots."""

    image_size: tuple[int, int]
    table_box: BBox
    cells: tuple[Cell, ...]
    grids: tuple[GridEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "grids", tuple(self.grids))

    @property
    def n_rows(self) -> int:
        return max((c.logical.end_row for c in self.cells), default=-1) + 1

    @property
    def n_cols(self) -> int:
        return max((c.logical.end_col for c in self.cells), default=-1) + 1

    def cell_by_id(self, cell_id: int) -> Cell:
        for c in self.cells:
            if c.id == cell_id:
                return c
        raise KeyError(cell_id)

    def span_cells(self) -> list[Cell]:
        return [c for c in self.cells if c.logical.is_span()]


@dataclass(frozen=True)
class DiscretizationConfig:
    """Binning scheme turning normalized coordinates into integer tokens."""

    bins: int = 1000

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


def validate_annotation(ann: TableAnnotation, require_grids: bool = False) -> list[str]:
    """Return the list of invariant violations (empty when valid).

    Checks: dense unique cell ids, pairwise-disjoint logical footprints,
    footprints tiling the full [0..R-1]x[0..C-1] rectangle, and (when grids
    are present or required) bidirectional grid/cell completeness.
    """
    problems: list[str] = []
    if not ann.cells:
        return ["no cells"]

    ids = sorted(c.id for c in ann.cells)
    if ids != list(range(len(ann.cells))):
        problems.append(f"cell ids not dense 0..{len(ann.cells) - 1}: {ids}")

    slot_owner: dict[tuple[int, int], int] = {}
    for c in ann.cells:
        for slot in c.logical.slots():
            if slot in slot_owner:
                problems.append(
                    f"overlapping logical coordinates at {slot}: "
                    f"cells {slot_owner[slot]} and {c.id}"
                )
            else:
                slot_owner[slot] = c.id

    rows, cols = ann.n_rows, ann.n_cols
    missing = [
        (r, c) for r in range(rows) for c in range(cols) if (r, c) not in slot_owner
    ]
    if missing:
        problems.append(f"logical layout not a full rectangle, uncovered: {missing[:8]}")

    if ann.grids or require_grids:
        if not ann.grids:
            problems.append("grids required but absent")
        seen: dict[tuple[int, int], int] = {}
        for g in ann.grids:
            if (g.row, g.col) in seen:
                problems.append(f"duplicate grid slot ({g.row},{g.col})")
            seen[(g.row, g.col)] = g.cell_id
            if g.cell_id not in set(ids):
                problems.append(f"grid slot ({g.row},{g.col}) references unknown cell {g.cell_id}")
            elif slot_owner.get((g.row, g.col)) != g.cell_id:
                problems.append(
                    f"grid slot ({g.row},{g.col}) assigned to cell {g.cell_id}, "
                    f"logical owner is {slot_owner.get((g.row, g.col))}"
                )
        for c in ann.cells:
            for slot in c.logical.slots():
                if slot not in seen:
                    problems.append(f"cell {c.id} footprint missing grid slot {slot}")
    return problems


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou_loss(pred: BBox, gt: BBox) -> float:
    """1 - GIoU(pred, gt); 0 for identical boxes, approaches 2 when disjoint."""
    ix = max(0.0, min(pred.x2, gt.x2) - max(pred.x1, gt.x1))
    iy = max(0.0, min(pred.y2, gt.y2) - max(pred.y1, gt.y1))
    inter = ix * iy
    union = pred.area() + gt.area() - inter
    enclose = (max(pred.x2, gt.x2) - min(pred.x1, gt.x1)) * (
        max(pred.y2, gt.y2) - min(pred.y1, gt.y1)
    )
    iou_val = inter / union if union > 0.0 else 0.0
    giou = iou_val
    if enclose > 0.0:
        giou = iou_val - (enclose - union) / enclose
    return 1.0 - giou


def l1_box_loss(pred: BBox, gt: BBox) -> float:
    """Mean absolute difference over the four corner coordinates."""
    return (
        abs(pred.x1 - gt.x1)
        + abs(pred.y1 - gt.y1)
        + abs(pred.x2 - gt.x2)
        + abs(pred.y2 - gt.y2)
    ) / 4.0


def discretize_value(v: float, cfg: DiscretizationConfig) -> int:
    """Map a normalized coordinate to its bin index, clamped to [0, bins-1]."""
    k = int(v * cfg.bins)
    return min(max(k, 0), cfg.bins - 1)


def undiscretize_value(k: int, cfg: DiscretizationConfig) -> float:
    """Map a bin index back to the bin-center coordinate."""
    return (k + 0.5) / cfg.bins


def discretize(b: BBox, cfg: DiscretizationConfig) -> tuple[int, int, int, int]:
    return (
        discretize_value(b.x1, cfg),
        discretize_value(b.y1, cfg),
        discretize_value(b.x2, cfg),
        discretize_value(b.y2, cfg),
    )


def undiscretize(bins4: tuple[int, int, int, int], cfg: DiscretizationConfig) -> BBox:
    x1, y1, x2, y2 = (undiscretize_value(k, cfg) for k in bins4)
    # Clamping to bin centers keeps corner order even for degenerate boxes.
    return BBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def derive_row_col_lines(ann: TableAnnotation) -> tuple[list[BBox], list[BBox]]:
    """Per-row and per-column extent boxes, unioned from grid slots.

    Row r's box is the union of all grid-slot boxes with row index r; columns
    are analogous. Requires grids.
    """
    if not ann.grids:
        raise AnnotationError("grids required")
    rows: dict[int, BBox] = {}
    cols: dict[int, BBox] = {}
    for g in ann.grids:
        rows[g.row] = rows[g.row].union(g.bbox) if g.row in rows else g.bbox
        cols[g.col] = cols[g.col].union(g.bbox) if g.col in cols else g.bbox
    row_boxes = [rows[r] for r in sorted(rows)]
    col_boxes = [cols[c] for c in sorted(cols)]
    return row_boxes, col_boxes
