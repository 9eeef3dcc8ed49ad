"""Deterministic prompt/target generation for the table learning tasks.

Every task target follows a small fixed grammar (see docs/target-grammars.md)
and re-parses through this module's parse_* helpers; label generation and
parsing are kept side by side so the round trip is testable.

Box tokens are "<x1,y1,x2,y2>" with coordinates discretized to bins.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .geometry import (
    AnnotationError,
    BBox,
    Cell,
    DiscretizationConfig,
    TableAnnotation,
    derive_row_col_lines,
    discretize,
)
from .htmlcodec import HtmlNode, grid_to_html, serialize_html
from .ingest import cluster_bands

TASKS = (
    "cell_detect",
    "span_cell_detect",
    "row_col_detect",
    "structure_parse",
    "html_parse",
    "spot_ordered",
    "spot_boxquery",
)

PROMPTS = {
    "cell_detect": "detect all table cells",
    "span_cell_detect": "detect span cells with their row and column ranges",
    "row_col_detect": "detect table rows and columns with their cells",
    "structure_parse_html": "parse the table structure to html",
    "structure_parse_markdown": "parse the table structure to markdown",
    "html_parse": "parse the table to html",
    "spot_ordered": "spot text lines in reading order",
    "spot_ordered_nocoords": "read text lines in reading order",
    "spot_boxquery": "spot text lines in region {box}",
    "spot_boxquery_nocoords": "read text lines in region {box}",
}

EMPTY_TARGET = "<none>"

_BOX_RE = re.compile(r"<(\d+),(\d+),(\d+),(\d+)>")


@dataclass(frozen=True)
class TaskSample:
    task: str
    prompt: str
    target: str


def box_token(box: BBox, cfg: DiscretizationConfig) -> str:
    x1, y1, x2, y2 = discretize(box, cfg)
    return f"<{x1},{y1},{x2},{y2}>"


def parse_box_tokens(s: str) -> list[tuple[int, int, int, int]]:
    return [tuple(int(g) for g in m.groups()) for m in _BOX_RE.finditer(s)]


def _require_boxes(cells: tuple[Cell, ...]) -> None:
    missing = [c.id for c in cells if c.bbox is None]
    if missing:
        raise AnnotationError(f"cells without bbox: {missing}")


def _logical_order(cells) -> list[Cell]:
    return sorted(cells, key=lambda c: (c.logical.start_row, c.logical.start_col))


def gen_cell_detect(
    ann: TableAnnotation,
    cfg: DiscretizationConfig = DiscretizationConfig(),
    include_span_cells: bool = True,
) -> TaskSample:
    """Cell boxes in logical order; span cells included unless disabled."""
    cells = [
        c for c in _logical_order(ann.cells) if include_span_cells or not c.logical.is_span()
    ]
    _require_boxes(tuple(cells))
    target = "".join(box_token(c.bbox, cfg) for c in cells) or EMPTY_TARGET
    return TaskSample("cell_detect", PROMPTS["cell_detect"], target)


def parse_cell_detect_target(target: str) -> list[tuple[int, int, int, int]]:
    if target == EMPTY_TARGET:
        return []
    return parse_box_tokens(target)


_SPAN_ENTRY_RE = re.compile(
    r"(<\d+,\d+,\d+,\d+>) rows (\d+)-(\d+) cols (\d+)-(\d+)"
)


def gen_span_cell_detect(
    ann: TableAnnotation, cfg: DiscretizationConfig = DiscretizationConfig()
) -> TaskSample:
    spans = _logical_order(ann.span_cells())
    _require_boxes(tuple(spans))
    entries = [
        f"{box_token(c.bbox, cfg)} rows {c.logical.start_row}-{c.logical.end_row}"
        f" cols {c.logical.start_col}-{c.logical.end_col}"
        for c in spans
    ]
    target = "; ".join(entries) if entries else EMPTY_TARGET
    return TaskSample("span_cell_detect", PROMPTS["span_cell_detect"], target)


def parse_span_cell_target(target: str) -> list[tuple[tuple[int, int, int, int], int, int, int, int]]:
    if target == EMPTY_TARGET:
        return []
    out = []
    for entry in target.split("; "):
        m = _SPAN_ENTRY_RE.fullmatch(entry)
        if not m:
            raise ValueError(f"bad span-cell entry: {entry!r}")
        box = parse_box_tokens(m.group(1))[0]
        out.append((box, int(m.group(2)), int(m.group(3)), int(m.group(4)), int(m.group(5))))
    return out


_ROWCOL_ENTRY_RE = re.compile(r"(row|col) (\d+) (<\d+,\d+,\d+,\d+>) cells ((?:<\d+,\d+,\d+,\d+>)*)")


def gen_row_col_detect(
    ann: TableAnnotation, cfg: DiscretizationConfig = DiscretizationConfig()
) -> TaskSample:
    """Row bands then column bands, each with the boxes of its member cells."""
    row_boxes, col_boxes = derive_row_col_lines(ann)
    _require_boxes(ann.cells)
    entries = []
    for r, band in enumerate(row_boxes):
        members = [c for c in ann.cells if c.logical.start_row <= r <= c.logical.end_row]
        members.sort(key=lambda c: (c.logical.start_col, c.logical.start_row))
        boxes = "".join(box_token(c.bbox, cfg) for c in members)
        entries.append(f"row {r} {box_token(band, cfg)} cells {boxes}")
    for k, band in enumerate(col_boxes):
        members = [c for c in ann.cells if c.logical.start_col <= k <= c.logical.end_col]
        members.sort(key=lambda c: (c.logical.start_row, c.logical.start_col))
        boxes = "".join(box_token(c.bbox, cfg) for c in members)
        entries.append(f"col {k} {box_token(band, cfg)} cells {boxes}")
    return TaskSample("row_col_detect", PROMPTS["row_col_detect"], "; ".join(entries))


def parse_row_col_target(target: str):
    rows, cols = [], []
    for entry in target.split("; "):
        m = _ROWCOL_ENTRY_RE.fullmatch(entry)
        if not m:
            raise ValueError(f"bad row/col entry: {entry!r}")
        kind, index, band, boxes = m.groups()
        record = (int(index), parse_box_tokens(band)[0], parse_box_tokens(boxes))
        (rows if kind == "row" else cols).append(record)
    return rows, cols


def gen_structure_parse(ann: TableAnnotation, fmt: str = "html") -> TaskSample:
    """Structure-only table representation with cell contents erased."""
    if fmt == "html":
        tree = grid_to_html(ann)
        for node in tree.iter_nodes():
            if node.tag == "td":
                node.content = ""
        return TaskSample(
            "structure_parse", PROMPTS["structure_parse_html"], serialize_html(tree)
        )
    if fmt == "markdown":
        owner: dict[tuple[int, int], int] = {}
        for c in ann.cells:
            for slot in c.logical.slots():
                owner[slot] = c.id
        rows, cols = ann.n_rows, ann.n_cols
        if not rows or not cols:
            raise AnnotationError("empty table")
        line = "| " + " | ".join("-" for _ in range(cols)) + " |"
        sep = "| " + " | ".join("---" for _ in range(cols)) + " |"
        lines = [line, sep] + [line] * (rows - 1)
        return TaskSample(
            "structure_parse", PROMPTS["structure_parse_markdown"], "\n".join(lines)
        )
    raise ValueError(f"unknown structure format {fmt!r}")


def parse_markdown_structure(target: str) -> tuple[int, int]:
    """Return (rows, cols) of a markdown structure target."""
    lines = target.split("\n")
    if len(lines) < 2 or not all(l.startswith("|") and l.endswith("|") for l in lines):
        raise ValueError("bad markdown table")
    widths = {len(l.split("|")) - 2 for l in lines}
    if len(widths) != 1:
        raise ValueError("ragged markdown table")
    return len(lines) - 1, widths.pop()


def gen_html_parse(ann: TableAnnotation) -> TaskSample:
    """Full-table HTML target: structure and contents jointly encoded."""
    return TaskSample("html_parse", PROMPTS["html_parse"], serialize_html(grid_to_html(ann)))


def reading_order(lines: list[tuple[BBox, str]]) -> list[int]:
    """Band-then-left reading order over text-line boxes.

    Lines whose vertical overlap ratio reaches 0.5 share a band; bands run
    top to bottom and lines within a band left to right.
    """
    bands = cluster_bands([(b.y1, b.y2) for b, _ in lines])
    order: list[int] = []
    for members in bands:
        order.extend(sorted(members, key=lambda i: (lines[i][0].x1, lines[i][0].y1, i)))
    return order


def _spot_text(text: str) -> str:
    return " ".join(text.split("\n"))


def gen_spot_ordered(
    lines: list[tuple[BBox, str]],
    with_coords: bool = True,
    cfg: DiscretizationConfig = DiscretizationConfig(),
) -> TaskSample:
    order = reading_order(lines)
    if with_coords:
        parts = [f"{box_token(lines[i][0], cfg)} {_spot_text(lines[i][1])}" for i in order]
        prompt = PROMPTS["spot_ordered"]
    else:
        parts = [_spot_text(lines[i][1]) for i in order]
        prompt = PROMPTS["spot_ordered_nocoords"]
    return TaskSample("spot_ordered", prompt, "\n".join(parts) if parts else EMPTY_TARGET)


def parse_spot_target(target: str, with_coords: bool = True):
    if target == EMPTY_TARGET:
        return []
    out = []
    for line in target.split("\n"):
        if with_coords:
            m = _BOX_RE.match(line)
            if not m or not line[m.end() :].startswith(" "):
                raise ValueError(f"bad spot line: {line!r}")
            out.append((tuple(int(g) for g in m.groups()), line[m.end() + 1 :]))
        else:
            out.append((None, line))
    return out


def gen_spot_boxquery(
    lines: list[tuple[BBox, str]],
    query: BBox,
    with_coords: bool = True,
    cfg: DiscretizationConfig = DiscretizationConfig(),
) -> TaskSample:
    """Spotting restricted to lines whose box center falls inside the query."""
    kept = [
        (box, text)
        for box, text in lines
        if query.x1 <= box.center()[0] <= query.x2 and query.y1 <= box.center()[1] <= query.y2
    ]
    inner = gen_spot_ordered(kept, with_coords=with_coords, cfg=cfg)
    key = "spot_boxquery" if with_coords else "spot_boxquery_nocoords"
    prompt = PROMPTS[key].format(box=box_token(query, cfg))
    return TaskSample("spot_boxquery", prompt, inner.target)
