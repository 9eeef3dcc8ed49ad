"""Bidirectional conversion between logical table grids and table HTML.

The supported structural tag set is {table, thead, tbody, tr, td}. Inline
markup (b, i, sup, sub) and character entities inside a cell are kept
verbatim as part of the cell's content string, so serialization round-trips
byte-exactly. Canonical serialization uses double-quoted attributes, no
whitespace between tags, and omits rowspan/colspan attributes equal to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser

from .geometry import (
    AnnotationError,
    BBox,
    Cell,
    LogicalCoords,
    TableAnnotation,
    validate_annotation,
)

STRUCT_TAGS = ("table", "thead", "tbody", "tr", "td")
INLINE_TAGS = ("b", "i", "sup", "sub")


class HtmlParseError(ValueError):
    """Strict-mode parse failure; carries the byte offset of the offence."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MalformedTableError(ValueError):
    """The HTML grid cannot be completed into a full rectangle."""

    def __init__(self, message: str, row: int) -> None:
        super().__init__(message)
        self.row = row


@dataclass
class HtmlNode:
    """Tag-labelled tree node; only td carries content and span attributes."""

    tag: str
    rowspan: int = 1
    colspan: int = 1
    content: str = ""
    children: list["HtmlNode"] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.tag not in STRUCT_TAGS:
            raise ValueError(f"unsupported tag {self.tag!r}")
        if self.rowspan < 1 or self.colspan < 1:
            raise ValueError("spans must be positive")
        if self.tag != "td" and (self.content or self.rowspan != 1 or self.colspan != 1):
            raise ValueError(f"content/span attributes only allowed on td, got {self.tag}")

    def iter_nodes(self):
        yield self
        for child in self.children:
            yield from child.iter_nodes()

    def n_nodes(self) -> int:
        return sum(1 for _ in self.iter_nodes())


def serialize_html(node: HtmlNode) -> str:
    """Canonical byte form: deterministic for identical trees."""
    if node.tag == "td":
        attrs = ""
        if node.rowspan != 1:
            attrs += f' rowspan="{node.rowspan}"'
        if node.colspan != 1:
            attrs += f' colspan="{node.colspan}"'
        return f"<td{attrs}>{node.content}</td>"
    inner = "".join(serialize_html(c) for c in node.children)
    return f"<{node.tag}>{inner}</{node.tag}>"


def canonicalize_structure(root: HtmlNode) -> HtmlNode:
    """Flatten thead/tbody wrappers so the tree is table -> tr -> td."""
    if root.tag != "table":
        raise ValueError("root must be a table")
    rows: list[HtmlNode] = []
    for child in root.children:
        if child.tag in ("thead", "tbody"):
            rows.extend(child.children)
        else:
            rows.append(child)
    return HtmlNode("table", children=rows)


class _TableHtmlParser(HTMLParser):
    """Streaming parser restricted to the supported table tag set.

    Strict mode raises HtmlParseError on anything outside the surface;
    lenient mode is total: unknown tags/attributes are dropped, truncated
    td/tr/table elements are auto-closed, and nested tables are flattened
    into the enclosing cell's content.
    """

    def __init__(self, source: str, lenient: bool) -> None:
        super().__init__(convert_charrefs=False)
        self.source = source
        self.lenient = lenient
        self.root: HtmlNode | None = None
        self.stack: list[HtmlNode] = []
        self.cell: HtmlNode | None = None
        self.cell_text: list[str] = []
        self.inline_depth = 0
        self.ignored_table_depth = 0
        self._line_starts = [0]
        for i, ch in enumerate(source):
            if ch == "\n":
                self._line_starts.append(i + 1)

    def _offset(self) -> int:
        line, col = self.getpos()
        char_offset = self._line_starts[line - 1] + col
        return len(self.source[:char_offset].encode("utf-8"))

    def _fail(self, message: str) -> None:
        raise HtmlParseError(message, self._offset())

    def _open(self) -> HtmlNode | None:
        return self.stack[-1] if self.stack else None

    def _in_cell(self) -> bool:
        return self.cell is not None

    # -- tag handling -------------------------------------------------

    def handle_starttag(self, tag: str, attrs) -> None:
        tag = tag.lower()
        if self.ignored_table_depth > 0 and not self._in_cell():
            if tag == "table":
                self.ignored_table_depth += 1
            return
        if self._in_cell():
            if tag in INLINE_TAGS:
                self.cell_text.append(self._raw_starttag(tag, attrs))
                self.inline_depth += 1
                return
            if tag == "table":
                # Nested table: flatten its text into the enclosing cell.
                if not self.lenient:
                    self._fail("nested table")
                self.ignored_table_depth += 1
                return
            if self.ignored_table_depth > 0:
                return
            if tag in ("tr", "td", "thead", "tbody"):
                if not self.lenient:
                    self._fail(f"<{tag}> inside td")
                self._close_cell()
                self.handle_starttag(tag, attrs)
                return
            if not self.lenient:
                self._fail(f"unsupported tag <{tag}>")
            return
        if tag in INLINE_TAGS or tag not in STRUCT_TAGS:
            if not self.lenient:
                self._fail(f"unsupported tag <{tag}>")
            return
        if tag == "table":
            if self.root is not None:
                if not self.lenient:
                    self._fail("multiple tables")
                self.ignored_table_depth += 1
                return
            self.root = HtmlNode("table")
            self.stack = [self.root]
            return
        if self.root is None:
            # Sequence truncated on the left: synthesize the table root.
            if not self.lenient:
                self._fail(f"<{tag}> before <table>")
            self.root = HtmlNode("table")
            self.stack = [self.root]
        if tag in ("thead", "tbody"):
            self._pop_to("table", f"<{tag}> not directly under table")
            node = HtmlNode(tag)
            self._open().children.append(node)
            self.stack.append(node)
        elif tag == "tr":
            self._pop_to(("table", "thead", "tbody"), "<tr> not under table/thead/tbody")
            node = HtmlNode("tr")
            self._open().children.append(node)
            self.stack.append(node)
        elif tag == "td":
            if self._open() is None or self._open().tag != "tr":
                if not self.lenient:
                    self._fail("<td> outside tr")
                node = HtmlNode("tr")
                self._open().children.append(node)
                self.stack.append(node)
            rowspan = self._span_attr(attrs, "rowspan")
            colspan = self._span_attr(attrs, "colspan")
            self.cell = HtmlNode("td", rowspan=rowspan, colspan=colspan)
            self.cell_text = []
            self._open().children.append(self.cell)

    def handle_endtag(self, tag: str) -> None:
        tag = tag.lower()
        if tag in INLINE_TAGS:
            if self._in_cell():
                self.cell_text.append(f"</{tag}>")
                self.inline_depth = max(0, self.inline_depth - 1)
            elif not self.lenient:
                self._fail(f"unsupported tag </{tag}>")
            return
        if tag == "table" and self.ignored_table_depth > 0:
            self.ignored_table_depth -= 1
            return
        if self.ignored_table_depth > 0:
            return
        if tag not in STRUCT_TAGS:
            if not self.lenient:
                self._fail(f"unsupported tag </{tag}>")
            return
        if tag == "td":
            if self._in_cell():
                self._close_cell()
            elif not self.lenient:
                self._fail("</td> without open cell")
            return
        if self._in_cell():
            if not self.lenient:
                self._fail(f"</{tag}> while td open")
            self._close_cell()
        open_tags = [n.tag for n in self.stack]
        if tag not in open_tags:
            if not self.lenient:
                self._fail(f"unmatched </{tag}>")
            return
        while self.stack and self.stack[-1].tag != tag:
            if not self.lenient:
                self._fail(f"misnested </{tag}>")
            self.stack.pop()
        self.stack.pop()

    def handle_startendtag(self, tag: str, attrs) -> None:
        tag = tag.lower()
        if self._in_cell() and tag in INLINE_TAGS + ("br",):
            self.cell_text.append(self._raw_starttag(tag, attrs, self_closing=True))
            return
        if not self.lenient:
            self._fail(f"unsupported tag <{tag}/>")

    # -- text ----------------------------------------------------------

    def handle_data(self, data: str) -> None:
        if self._in_cell():
            self.cell_text.append(data)
        elif data.strip() and not self.lenient:
            self._fail("text outside cells")

    def handle_entityref(self, name: str) -> None:
        if self._in_cell():
            self.cell_text.append(f"&{name};")

    def handle_charref(self, name: str) -> None:
        if self._in_cell():
            self.cell_text.append(f"&#{name};")

    def handle_comment(self, data: str) -> None:
        if not self.lenient:
            self._fail("comment")

    # -- helpers ---------------------------------------------------------

    def _raw_starttag(self, tag: str, attrs, self_closing: bool = False) -> str:
        parts = [tag]
        for k, v in attrs:
            parts.append(k if v is None else f'{k}="{v}"')
        return f"<{' '.join(parts)}{'/' if self_closing else ''}>"

    def _span_attr(self, attrs, name: str) -> int:
        for k, v in attrs:
            if k.lower() == name:
                try:
                    value = int(v)
                except (TypeError, ValueError):
                    if not self.lenient:
                        self._fail(f"bad {name} value {v!r}")
                    return 1
                if value < 1:
                    if not self.lenient:
                        self._fail(f"bad {name} value {v!r}")
                    return 1
                return value
            if k.lower() not in ("rowspan", "colspan") and not self.lenient:
                self._fail(f"unsupported attribute {k!r} on td")
        return 1

    def _pop_to(self, tags, error: str) -> None:
        allowed = (tags,) if isinstance(tags, str) else tags
        while self.stack and self.stack[-1].tag not in allowed:
            if not self.lenient:
                self._fail(error)
            self.stack.pop()
        if not self.stack:
            self._fail(error)

    def _close_cell(self) -> None:
        assert self.cell is not None
        self.cell.content = "".join(self.cell_text)
        self.cell = None
        self.cell_text = []
        self.inline_depth = 0

    def finish(self) -> HtmlNode | None:
        if self._in_cell():
            if not self.lenient:
                self._fail("unclosed td")
            self._close_cell()
        if len(self.stack) > 1 and not self.lenient:
            self._fail(f"unclosed <{self.stack[-1].tag}>")
        return self.root


def parse_html_string(s: str, lenient: bool = False) -> HtmlNode | None:
    """Parse a table HTML string into an HtmlNode tree.

    Strict mode raises HtmlParseError (with byte offset) on anything outside
    the supported surface. Lenient mode never raises; it returns None when
    the input contains no recognizable table at all.
    """
    parser = _TableHtmlParser(s, lenient=lenient)
    try:
        parser.feed(s)
        parser.close()
    except HtmlParseError:
        raise
    except Exception as exc:  # tokenizer-level failure
        if not lenient:
            raise HtmlParseError(f"tokenizer error: {exc}", 0) from exc
        return parser.root
    root = parser.finish()
    if root is None and not lenient:
        raise HtmlParseError("no table found", len(s.encode("utf-8")))
    return root


def grid_to_html(ann: TableAnnotation) -> HtmlNode:
    """Emit the canonical table -> tr -> td tree for a valid annotation.

    Cells appear row-major by (start_row, start_col), each in the tr of its
    start row, with rowspan/colspan derived from the logical footprint.
    """
    problems = validate_annotation(ann)
    if problems:
        raise AnnotationError("; ".join(problems))
    table = HtmlNode("table")
    rows = [HtmlNode("tr") for _ in range(ann.n_rows)]
    table.children.extend(rows)
    for cell in sorted(ann.cells, key=lambda c: (c.logical.start_row, c.logical.start_col)):
        rows[cell.logical.start_row].children.append(
            HtmlNode(
                "td",
                rowspan=cell.logical.rowspan,
                colspan=cell.logical.colspan,
                content=cell.content,
            )
        )
    return table


def html_to_grid(root: HtmlNode) -> TableAnnotation:
    """Reconstruct the logical grid from a table tree (bbox-free result).

    Standard span-occupancy scan: each td lands on the leftmost unoccupied
    column of its row and marks its rowspan x colspan footprint occupied.
    Raises MalformedTableError when the footprints leave uncovered slots.
    """
    table = canonicalize_structure(root)
    occupied: dict[tuple[int, int], int] = {}
    cells: list[Cell] = []
    for r, tr in enumerate(table.children):
        if tr.tag != "tr":
            raise MalformedTableError(f"unexpected <{tr.tag}> under table", r)
        col = 0
        for td in tr.children:
            if td.tag != "td":
                raise MalformedTableError(f"unexpected <{td.tag}> in row {r}", r)
            while (r, col) in occupied:
                col += 1
            logical = LogicalCoords(r, r + td.rowspan - 1, col, col + td.colspan - 1)
            cell_id = len(cells)
            for slot in logical.slots():
                if slot in occupied:
                    raise MalformedTableError(
                        f"malformed table: overlapping footprint at row {slot[0]}", slot[0]
                    )
                occupied[slot] = cell_id
            cells.append(Cell(id=cell_id, logical=logical, content=td.content))
            col = logical.end_col + 1

    n_rows = max((len(table.children),) + tuple(r + 1 for r, _ in occupied))
    n_cols = max((c + 1 for _, c in occupied), default=0)
    for r in range(n_rows):
        for c in range(n_cols):
            if (r, c) not in occupied:
                raise MalformedTableError(f"malformed table: uncovered slot in row {r}", r)

    ordered = sorted(cells, key=lambda cl: (cl.logical.start_row, cl.logical.start_col))
    renumbered = tuple(
        Cell(id=i, logical=cl.logical, content=cl.content) for i, cl in enumerate(ordered)
    )
    return TableAnnotation(
        image_size=(1, 1),
        table_box=BBox(0.0, 0.0, 1.0, 1.0),
        cells=renumbered,
        grids=(),
    )
