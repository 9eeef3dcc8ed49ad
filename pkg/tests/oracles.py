"""Independent reference implementations used to verify the package.

Everything here is deliberately written from the definitions, not from the
package code: forest-recursion tree edit distance, an occupancy simulator
for span layouts, exact-fraction average precision, loop-based convolution,
and a union-find reading-order comparator.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from tablekit.geometry import BBox
from tablekit.htmlcodec import HtmlNode

# --- ordered tree edit distance by forest recursion -----------------------


def freeze_tree(node: HtmlNode) -> tuple:
    return (
        node.tag,
        node.rowspan,
        node.colspan,
        node.content,
        tuple(freeze_tree(c) for c in node.children),
    )


def _tree_size(tree: tuple) -> int:
    return 1 + sum(_tree_size(c) for c in tree[4])


def _edit_levenshtein(a: str, b: str) -> int:
    rows = len(a) + 1
    cols = len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            substitute = table[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            table[i][j] = min(table[i - 1][j] + 1, table[i][j - 1] + 1, substitute)
    return table[-1][-1]


def reference_rename_cost(a: tuple, b: tuple) -> float:
    if a[0] != b[0]:
        return 1.0
    if a[0] != "td":
        return 0.0
    if a[1] != b[1] or a[2] != b[2]:
        return 1.0
    if a[3] == "" and b[3] == "":
        return 0.0
    return _edit_levenshtein(a[3], b[3]) / max(len(a[3]), len(b[3]))


def brute_force_ted(a: HtmlNode, b: HtmlNode) -> float:
    """Memoized rightmost-root forest recursion (exact, exponential states)."""

    @lru_cache(maxsize=None)
    def forest_dist(f: tuple, g: tuple) -> float:
        if not f and not g:
            return 0.0
        if not f:
            return float(sum(_tree_size(t) for t in g))
        if not g:
            return float(sum(_tree_size(t) for t in f))
        ft, gt = f[-1], g[-1]
        delete = forest_dist(f[:-1] + ft[4], g) + 1.0
        insert = forest_dist(f, g[:-1] + gt[4]) + 1.0
        match = (
            forest_dist(f[:-1], g[:-1])
            + forest_dist(ft[4], gt[4])
            + reference_rename_cost(ft, gt)
        )
        return min(delete, insert, match)

    return forest_dist((freeze_tree(a),), (freeze_tree(b),))


# --- span-occupancy simulator ---------------------------------------------


def simulate_occupancy(rows: list[list[tuple[int, int]]]) -> dict[tuple[int, int], int]:
    """Place (rowspan, colspan) cells row by row; returns slot -> cell index.

    Mirrors the HTML table model directly: each cell takes the leftmost free
    column of its row. Raises ValueError when the final grid has holes.
    """
    occupied: dict[tuple[int, int], int] = {}
    index = 0
    for r, row in enumerate(rows):
        col = 0
        for rowspan, colspan in row:
            while (r, col) in occupied:
                col += 1
            for dr in range(rowspan):
                for dc in range(colspan):
                    slot = (r + dr, col + dc)
                    if slot in occupied:
                        raise ValueError(f"overlap at {slot}")
                    occupied[slot] = index
            col += colspan
            index += 1
    if occupied:
        n_rows = max(r for r, _ in occupied) + 1
        n_cols = max(c for _, c in occupied) + 1
        for r in range(max(n_rows, len(rows))):
            for c in range(n_cols):
                if (r, c) not in occupied:
                    raise ValueError(f"hole at ({r},{c})")
    return occupied


# --- exact average precision ----------------------------------------------


def _iou_fraction(a: BBox, b: BBox) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union if union > 0 else 0.0


def reference_ap50(
    pred_boxes: list[list[BBox]],
    pred_scores: list[list[float]],
    gt_boxes: list[list[BBox]],
) -> float:
    """Greedy matching + exact-fraction 101-point PR integration."""
    order = []
    for image, (boxes, scores) in enumerate(zip(pred_boxes, pred_scores)):
        for idx, (box, score) in enumerate(zip(boxes, scores)):
            order.append((-score, image, idx, box))
    order.sort(key=lambda rec: (rec[0], rec[1], rec[2]))
    total_gt = sum(len(g) for g in gt_boxes)
    if total_gt == 0 or not order:
        return 0.0

    used = [set() for _ in gt_boxes]
    points: list[tuple[Fraction, Fraction]] = []
    tp = 0
    for rank, (_, image, _, box) in enumerate(order, start=1):
        candidates = [
            (j, _iou_fraction(box, g))
            for j, g in enumerate(gt_boxes[image])
            if j not in used[image]
        ]
        candidates = [(j, v) for j, v in candidates if v >= 0.5]
        if candidates:
            best = max(candidates, key=lambda rec: (rec[1], -rec[0]))
            used[image].add(best[0])
            tp += 1
        points.append((Fraction(tp, total_gt), Fraction(tp, rank)))

    accumulated = Fraction(0)
    for step in range(101):
        threshold = Fraction(step, 100)
        best = Fraction(0)
        for recall, precision in points:
            if recall >= threshold and precision > best:
                best = precision
        accumulated += best
    return float(accumulated / 101)


# --- loop-based 1x1 convolution and upsampling ------------------------------


def loop_conv1x1(x, weight, bias):
    """x: (C,H,W) nested lists or array-likes; returns nested lists."""
    channels_out = len(weight)
    channels_in = len(x)
    height = len(x[0])
    width = len(x[0][0])
    out = [[[0.0] * width for _ in range(height)] for _ in range(channels_out)]
    for o in range(channels_out):
        for h in range(height):
            for w in range(width):
                acc = float(bias[o])
                for c in range(channels_in):
                    acc += float(weight[o][c]) * float(x[c][h][w])
                out[o][h][w] = acc
    return out


def loop_upsample2x(x):
    channels = len(x)
    height = len(x[0])
    width = len(x[0][0])
    out = [[[0.0] * (2 * width) for _ in range(2 * height)] for _ in range(channels)]
    for c in range(channels):
        for h in range(2 * height):
            for w in range(2 * width):
                out[c][h][w] = float(x[c][h // 2][w // 2])
    return out


# --- reading order by union-find -------------------------------------------


def reference_reading_order(lines: list[tuple[BBox, str]]) -> list[int]:
    n = len(lines)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def overlap_ratio(a: BBox, b: BBox) -> float:
        top = max(a.y1, b.y1)
        bottom = min(a.y2, b.y2)
        shorter = min(a.y2 - a.y1, b.y2 - b.y1)
        if shorter <= 0:
            return 1.0 if bottom - top >= 0 else 0.0
        return max(0.0, bottom - top) / shorter

    for i in range(n):
        for j in range(i + 1, n):
            if overlap_ratio(lines[i][0], lines[j][0]) >= 0.5:
                parent[find(i)] = find(j)

    bands: dict[int, list[int]] = {}
    for i in range(n):
        bands.setdefault(find(i), []).append(i)
    ordered_bands = sorted(bands.values(), key=lambda ids: min(lines[i][0].y1 for i in ids))
    out: list[int] = []
    for ids in ordered_bands:
        out.extend(sorted(ids, key=lambda i: (lines[i][0].x1, lines[i][0].y1, i)))
    return out
