"""Unified multi-source annotation conversion, cleaning rules, and cropping.

Foreign records come in three shapes: pubtabnet-like (an HTML string plus
per-td pixel boxes), grid-like (cells already carrying logical coordinates),
and spotting-like (boxes and contents only, assumed to form a rectangular
grid). All are converted to TableAnnotation with normalized coordinates;
records that end up violating annotation invariants are left for clean()
to drop rather than silently repaired.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import (
    AnnotationError,
    BBox,
    Cell,
    GridEntry,
    LogicalCoords,
    TableAnnotation,
    validate_annotation,
)
from .htmlcodec import html_to_grid, parse_html_string

SOURCE_KINDS = ("pubtabnet-like", "grid-like", "spotting-like")


def _norm_box(raw, width: int, height: int) -> BBox:
    x1, y1, x2, y2 = (float(v) for v in raw)
    if x1 > x2:
        x1, x2 = x2, x1
    if y1 > y2:
        y1, y2 = y2, y1
    clamp = lambda v, hi: min(max(v / hi, 0.0), 1.0)
    return BBox(clamp(x1, width), clamp(y1, height), clamp(x2, width), clamp(y2, height))


def unify(source_record: dict, source_kind: str) -> TableAnnotation:
    """Convert one foreign record into a (not yet validated) TableAnnotation."""
    if source_kind not in SOURCE_KINDS:
        raise ValueError(f"unknown source kind {source_kind!r}")
    width, height = (int(v) for v in source_record["image_size"])
    if width <= 0 or height <= 0:
        raise AnnotationError("image_size must be positive")
    table_box = (
        _norm_box(source_record["table_box"], width, height)
        if source_record.get("table_box")
        else BBox(0.0, 0.0, 1.0, 1.0)
    )

    if source_kind == "pubtabnet-like":
        cells = _cells_from_html(source_record, width, height)
        grids: tuple[GridEntry, ...] = ()
    elif source_kind == "grid-like":
        cells = tuple(
            Cell(
                id=int(rec.get("id", i)),
                logical=LogicalCoords(
                    int(rec["start_row"]),
                    int(rec["end_row"]),
                    int(rec["start_col"]),
                    int(rec["end_col"]),
                ),
                bbox=_norm_box(rec["bbox"], width, height) if rec.get("bbox") else None,
                content=str(rec.get("content", "")),
            )
            for i, rec in enumerate(source_record["cells"])
        )
        grids = tuple(
            GridEntry(
                cell_id=int(g["cell_id"]),
                row=int(g["row"]),
                col=int(g["col"]),
                bbox=_norm_box(g["bbox"], width, height),
            )
            for g in source_record.get("grids", [])
        )
    else:  # spotting-like: infer a rectangular grid from box layout
        cells = _cells_from_spotting(source_record, width, height)
        grids = ()

    ann = TableAnnotation(
        image_size=(width, height), table_box=table_box, cells=cells, grids=grids
    )
    if not ann.grids:
        ann = attach_grids(ann)
    return backfill_cell_boxes(ann)


def _cells_from_html(record: dict, width: int, height: int) -> tuple[Cell, ...]:
    root = parse_html_string(record["html"], lenient=True)
    if root is None:
        raise AnnotationError("record html contains no table")
    skeleton = html_to_grid(root)
    boxes = record.get("cell_boxes") or []
    cells = []
    for cell in skeleton.cells:
        raw = boxes[cell.id] if cell.id < len(boxes) else None
        cells.append(
            Cell(
                id=cell.id,
                logical=cell.logical,
                bbox=_norm_box(raw, width, height) if raw else None,
                content=cell.content,
            )
        )
    return tuple(cells)


def _cells_from_spotting(record: dict, width: int, height: int) -> tuple[Cell, ...]:
    boxes = [_norm_box(rec["bbox"], width, height) for rec in record["cells"]]
    contents = [str(rec.get("content", "")) for rec in record["cells"]]
    row_of = _band_index([(b.y1, b.y2) for b in boxes])
    col_of = _band_index([(b.x1, b.x2) for b in boxes])
    order = sorted(range(len(boxes)), key=lambda i: (row_of[i], col_of[i]))
    return tuple(
        Cell(
            id=rank,
            logical=LogicalCoords(row_of[i], row_of[i], col_of[i], col_of[i]),
            bbox=boxes[i],
            content=contents[i],
        )
        for rank, i in enumerate(order)
    )


def interval_overlap_ratio(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Overlap length over the shorter interval; containment for degenerates."""
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    overlap = hi - lo
    shorter = min(a[1] - a[0], b[1] - b[0])
    if shorter <= 0.0:
        return 1.0 if overlap >= 0.0 else 0.0
    return max(0.0, overlap) / shorter


def cluster_bands(intervals: list[tuple[float, float]], threshold: float = 0.5) -> list[list[int]]:
    """Single-link clustering of 1-D intervals by pairwise overlap ratio.

    Returns index groups sorted by the group's smallest start coordinate.
    """
    n = len(intervals)
    group = [-1] * n
    groups: list[list[int]] = []
    for i in range(n):
        if group[i] >= 0:
            continue
        queue = [i]
        group[i] = len(groups)
        members = []
        while queue:
            k = queue.pop()
            members.append(k)
            for j in range(n):
                if group[j] < 0 and interval_overlap_ratio(intervals[k], intervals[j]) >= threshold:
                    group[j] = group[i]
                    queue.append(j)
        groups.append(members)
    groups.sort(key=lambda g: min(intervals[k][0] for k in g))
    return groups


def _band_index(intervals: list[tuple[float, float]]) -> list[int]:
    index = [0] * len(intervals)
    for band, members in enumerate(cluster_bands(intervals)):
        for k in members:
            index[k] = band
    return index


def derive_grids(
    cells: list[Cell] | tuple[Cell, ...], frame: BBox | None = None
) -> tuple[GridEntry, ...]:
    """Split the logical layout into per-slot boxes via extent-midpoint bands.

    Row r's extent is the union of vertical extents of box-carrying cells
    covering r; the boundary between adjacent rows is the midpoint between
    one extent's bottom and the next one's top. Columns are analogous, and
    slot (r, c) is the intersection of its row and column bands. Cells may
    lack boxes; a row/column with no boxed cell inherits the gap between its
    boxed neighbours (or the frame edge), so empty rows and columns still
    get slots. At least one boxed cell per axis is required.
    """
    if not cells:
        raise AnnotationError("no cells")
    slot_owner: dict[tuple[int, int], int] = {}
    for c in cells:
        for slot in c.logical.slots():
            if slot in slot_owner:
                raise AnnotationError(f"non-rectangular layout: slot {slot} owned twice")
            slot_owner[slot] = c.id
    rows = max(c.logical.end_row for c in cells) + 1
    cols = max(c.logical.end_col for c in cells) + 1
    for r in range(rows):
        for c in range(cols):
            if (r, c) not in slot_owner:
                raise AnnotationError(f"non-rectangular layout: slot ({r},{c}) uncovered")

    row_frame = (frame.y1, frame.y2) if frame is not None else None
    col_frame = (frame.x1, frame.x2) if frame is not None else None
    row_bounds = _band_boundaries(cells, rows, axis="row", frame=row_frame)
    col_bounds = _band_boundaries(cells, cols, axis="col", frame=col_frame)
    return tuple(
        GridEntry(
            cell_id=slot_owner[(r, c)],
            row=r,
            col=c,
            bbox=BBox(col_bounds[c], row_bounds[r], col_bounds[c + 1], row_bounds[r + 1]),
        )
        for r in range(rows)
        for c in range(cols)
    )


def _band_boundaries(
    cells, count: int, axis: str, frame: tuple[float, float] | None = None
) -> list[float]:
    # Two tiers: cells confined to one index give precise extents; cells
    # spanning several indices would smear every band they cross, so they
    # only back-fill bands with no dedicated cell (where the midpoint rule
    # then splits the span box evenly).
    def gather(spanning: bool, skip) -> list[tuple[float, float] | None]:
        acc: list[tuple[float, float] | None] = [None] * count
        for cell in cells:
            if cell.bbox is None:
                continue
            if axis == "row":
                lo, hi = cell.bbox.y1, cell.bbox.y2
                first, last = cell.logical.start_row, cell.logical.end_row
            else:
                lo, hi = cell.bbox.x1, cell.bbox.x2
                first, last = cell.logical.start_col, cell.logical.end_col
            if (first != last) != spanning:
                continue
            for k in range(first, last + 1):
                if skip[k]:
                    continue
                cur = acc[k]
                acc[k] = (lo, hi) if cur is None else (min(cur[0], lo), max(cur[1], hi))
        return acc

    extents = gather(spanning=False, skip=[False] * count)
    fallback = gather(spanning=True, skip=[ext is not None for ext in extents])
    extents = [ext if ext is not None else fb for ext, fb in zip(extents, fallback)]
    if all(ext is None for ext in extents):
        raise AnnotationError(f"no boxed cell on any {axis}")
    _fill_missing_extents(extents, frame)

    bounds = [extents[0][0]]
    for k in range(1, count):
        bounds.append(0.5 * (extents[k - 1][1] + extents[k][0]))
    bounds.append(extents[-1][1])
    # Guard against inverted midpoints from wildly inconsistent boxes.
    for k in range(1, len(bounds)):
        bounds[k] = max(bounds[k], bounds[k - 1])
    return bounds


def _fill_missing_extents(
    extents: list[tuple[float, float] | None], frame: tuple[float, float] | None
) -> None:
    """Box-less bands inherit an even split of the gap between neighbours.

    Terminal runs extend to the frame edge when one is given, otherwise to
    the nearest known extent edge (degenerate band).
    """
    known = [k for k, ext in enumerate(extents) if ext is not None]
    lo_edge = frame[0] if frame is not None else extents[known[0]][0]
    hi_edge = frame[1] if frame is not None else extents[known[-1]][1]
    run_start = None
    for k in range(len(extents) + 1):
        if k < len(extents) and extents[k] is None:
            if run_start is None:
                run_start = k
            continue
        if run_start is None:
            continue
        gap_lo = extents[run_start - 1][1] if run_start > 0 else lo_edge
        gap_hi = extents[k][0] if k < len(extents) else hi_edge
        gap_lo = min(gap_lo, gap_hi)
        width = (gap_hi - gap_lo) / (k - run_start)
        for j in range(run_start, k):
            offset = gap_lo + (j - run_start) * width
            extents[j] = (offset, offset + width)
        run_start = None


def attach_grids(ann: TableAnnotation) -> TableAnnotation:
    """Return the annotation with grids derived from its cells' boxes.

    Leaves the annotation unchanged (grids empty) when band construction is
    impossible; clean() will then drop the record as incomplete.
    """
    try:
        grids = derive_grids(ann.cells, frame=ann.table_box)
    except AnnotationError:
        return ann
    return TableAnnotation(
        image_size=ann.image_size, table_box=ann.table_box, cells=ann.cells, grids=grids
    )


def backfill_cell_boxes(ann: TableAnnotation) -> TableAnnotation:
    """Give box-less cells the union of their grid slots (empty cells too)."""
    if not ann.grids:
        return ann
    slot_boxes: dict[int, BBox] = {}
    for g in ann.grids:
        slot_boxes[g.cell_id] = (
            slot_boxes[g.cell_id].union(g.bbox) if g.cell_id in slot_boxes else g.bbox
        )
    cells = tuple(
        c if c.bbox is not None or c.id not in slot_boxes
        else Cell(id=c.id, logical=c.logical, bbox=slot_boxes[c.id], content=c.content)
        for c in ann.cells
    )
    return TableAnnotation(
        image_size=ann.image_size, table_box=ann.table_box, cells=cells, grids=ann.grids
    )


@dataclass(frozen=True)
class DropRecord:
    index: int
    id: str
    rule: str
    detail: str


@dataclass(frozen=True)
class CleanResult:
    kept: tuple[TableAnnotation, ...]
    kept_ids: tuple[str, ...]
    dropped: tuple[DropRecord, ...]
    collapsed_ids: tuple[str, ...]


RULE_OVERLAP = "overlapping logical coordinates"
RULE_INCOMPLETE = "incomplete table grids"
RULE_INVALID = "invalid annotation"


def clean(
    anns: list[TableAnnotation], ids: list[str] | None = None
) -> CleanResult:
    """Apply the three cleaning rules to a corpus.

    In order: (1) drop annotations whose cells have overlapping logical
    coordinates; (2) drop annotations with incomplete grids (uncovered
    slots, missing/mismatched grid entries); (3) collapse redundant grids,
    merging adjacent rows/columns whose slot-to-cell assignment patterns are
    identical. Collapsing keeps the sample; drops are reported, not raised.
    """
    sample_ids = list(ids) if ids is not None else [str(i) for i in range(len(anns))]
    kept: list[TableAnnotation] = []
    kept_ids: list[str] = []
    dropped: list[DropRecord] = []
    collapsed: list[str] = []
    for index, (ann, sample_id) in enumerate(zip(anns, sample_ids)):
        verdict = _clean_one(ann)
        if isinstance(verdict, DropVerdict):
            dropped.append(DropRecord(index, sample_id, verdict.rule, verdict.detail))
            continue
        if verdict.collapsed:
            collapsed.append(sample_id)
        kept.append(verdict.ann)
        kept_ids.append(sample_id)
    return CleanResult(tuple(kept), tuple(kept_ids), tuple(dropped), tuple(collapsed))


@dataclass(frozen=True)
class DropVerdict:
    rule: str
    detail: str


@dataclass(frozen=True)
class KeepVerdict:
    ann: TableAnnotation
    collapsed: bool


def _clean_one(ann: TableAnnotation) -> DropVerdict | KeepVerdict:
    if not ann.cells:
        return DropVerdict(RULE_INVALID, "no cells")
    ids = sorted(c.id for c in ann.cells)
    if ids != list(range(len(ann.cells))):
        return DropVerdict(RULE_INVALID, "cell ids not dense")

    owner: dict[tuple[int, int], int] = {}
    for c in ann.cells:
        for slot in c.logical.slots():
            if slot in owner:
                return DropVerdict(
                    RULE_OVERLAP, f"slot {slot}: cells {owner[slot]} and {c.id}"
                )
            owner[slot] = c.id

    rows, cols = ann.n_rows, ann.n_cols
    for r in range(rows):
        for c in range(cols):
            if (r, c) not in owner:
                return DropVerdict(RULE_INCOMPLETE, f"slot ({r},{c}) not assigned to a cell")
    if not ann.grids:
        return DropVerdict(RULE_INCOMPLETE, "grids absent")
    grid_at: dict[tuple[int, int], GridEntry] = {}
    for g in ann.grids:
        if (g.row, g.col) in grid_at:
            return DropVerdict(RULE_INCOMPLETE, f"duplicate grid slot ({g.row},{g.col})")
        grid_at[(g.row, g.col)] = g
        if owner.get((g.row, g.col)) != g.cell_id:
            return DropVerdict(
                RULE_INCOMPLETE,
                f"grid slot ({g.row},{g.col}) not assigned to its cell",
            )
    for slot in owner:
        if slot not in grid_at:
            return DropVerdict(RULE_INCOMPLETE, f"cell footprint without grid slot {slot}")

    result, collapsed = _collapse_redundant(ann, owner)
    return KeepVerdict(result, collapsed)


def _collapse_redundant(
    ann: TableAnnotation, owner: dict[tuple[int, int], int]
) -> tuple[TableAnnotation, bool]:
    rows, cols = ann.n_rows, ann.n_cols
    row_patterns = [tuple(owner[(r, c)] for c in range(cols)) for r in range(rows)]
    col_patterns = [tuple(owner[(r, c)] for r in range(rows)) for c in range(cols)]
    row_map = _merge_map(row_patterns)
    col_map = _merge_map(col_patterns)
    if len(set(row_map)) == rows and len(set(col_map)) == cols:
        return ann, False

    cells = tuple(
        Cell(
            id=c.id,
            logical=LogicalCoords(
                row_map[c.logical.start_row],
                row_map[c.logical.end_row],
                col_map[c.logical.start_col],
                col_map[c.logical.end_col],
            ),
            bbox=c.bbox,
            content=c.content,
        )
        for c in ann.cells
    )
    merged: dict[tuple[int, int], GridEntry] = {}
    for g in ann.grids:
        key = (row_map[g.row], col_map[g.col])
        if key in merged:
            merged[key] = GridEntry(
                cell_id=g.cell_id, row=key[0], col=key[1], bbox=merged[key].bbox.union(g.bbox)
            )
        else:
            merged[key] = GridEntry(cell_id=g.cell_id, row=key[0], col=key[1], bbox=g.bbox)
    result = TableAnnotation(
        image_size=ann.image_size,
        table_box=ann.table_box,
        cells=cells,
        grids=tuple(merged[k] for k in sorted(merged)),
    )
    problems = validate_annotation(result)
    if problems:  # collapsing never invalidates a rule-2-clean annotation
        raise AnnotationError("collapse produced invalid annotation: " + "; ".join(problems))
    return result, True


def _merge_map(patterns: list[tuple[int, ...]]) -> list[int]:
    mapping: list[int] = []
    next_index = -1
    prev: tuple[int, ...] | None = None
    for pattern in patterns:
        if pattern != prev:
            next_index += 1
        mapping.append(next_index)
        prev = pattern
    return mapping


def crop_table(
    document_image_size: tuple[int, int],
    ann: TableAnnotation,
    tol: float = 0.005,
) -> tuple[TableAnnotation, tuple[int, ...]]:
    """Re-normalize an annotation into its table box's coordinate frame.

    Returns the table-local annotation (table_box becomes the unit square)
    and the ids of cells whose boxes had to be clipped by more than `tol`
    normalized units. Exact inverse up to clipping: see uncrop_table.
    """
    if tuple(document_image_size) != tuple(ann.image_size):
        raise AnnotationError("document_image_size disagrees with annotation")
    tb = ann.table_box
    if tb.width <= 0.0 or tb.height <= 0.0:
        raise AnnotationError("degenerate table box")
    width, height = ann.image_size
    new_size = (max(1, round(width * tb.width)), max(1, round(height * tb.height)))

    clipped: set[int] = set()

    def remap(box: BBox, cell_id: int | None) -> BBox:
        x1 = (box.x1 - tb.x1) / tb.width
        y1 = (box.y1 - tb.y1) / tb.height
        x2 = (box.x2 - tb.x1) / tb.width
        y2 = (box.y2 - tb.y1) / tb.height
        if min(x1, y1) < -tol or max(x2, y2) > 1.0 + tol:
            if cell_id is not None:
                clipped.add(cell_id)
        clamp = lambda v: min(max(v, 0.0), 1.0)
        return BBox(clamp(x1), clamp(y1), clamp(x2), clamp(y2))

    cells = tuple(
        Cell(
            id=c.id,
            logical=c.logical,
            bbox=remap(c.bbox, c.id) if c.bbox is not None else None,
            content=c.content,
        )
        for c in ann.cells
    )
    grids = tuple(
        GridEntry(cell_id=g.cell_id, row=g.row, col=g.col, bbox=remap(g.bbox, g.cell_id))
        for g in ann.grids
    )
    local = TableAnnotation(
        image_size=new_size, table_box=BBox(0.0, 0.0, 1.0, 1.0), cells=cells, grids=grids
    )
    return local, tuple(sorted(clipped))


def uncrop_table(
    document_image_size: tuple[int, int],
    table_box: BBox,
    local_ann: TableAnnotation,
) -> TableAnnotation:
    """Inverse of crop_table for boxes that were not clipped."""

    def remap(box: BBox) -> BBox:
        return BBox(
            table_box.x1 + box.x1 * table_box.width,
            table_box.y1 + box.y1 * table_box.height,
            table_box.x1 + box.x2 * table_box.width,
            table_box.y1 + box.y2 * table_box.height,
        )

    cells = tuple(
        Cell(
            id=c.id,
            logical=c.logical,
            bbox=remap(c.bbox) if c.bbox is not None else None,
            content=c.content,
        )
        for c in local_ann.cells
    )
    grids = tuple(
        GridEntry(cell_id=g.cell_id, row=g.row, col=g.col, bbox=remap(g.bbox))
        for g in local_ann.grids
    )
    return TableAnnotation(
        image_size=tuple(document_image_size),
        table_box=table_box,
        cells=cells,
        grids=grids,
    )
