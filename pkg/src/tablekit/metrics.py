"""Evaluation metrics: tree-edit-distance table similarity and box AP50.

The similarity score compares table HTML trees after canonicalizing away
thead/tbody wrappers. Edit costs: insert/delete any node costs 1; renaming
costs 0 for equal non-td tags, 1 for differing tags or differing spans, and
the normalized Levenshtein distance of the contents for td pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import BBox, iou
from .htmlcodec import HtmlNode, canonicalize_structure, parse_html_string


@dataclass(frozen=True)
class TedsResult:
    """Similarity triple: full score, structure-only score, and their gap."""

    teds: float
    teds_s: float
    teds_delta: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class DetectionSet:
    """Predicted boxes for one image, with optional confidence scores."""

    boxes: tuple[BBox, ...]
    scores: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(self.scores))
            if len(self.scores) != len(self.boxes):
                raise ValueError("scores must align 1:1 with boxes")

    def score_of(self, index: int) -> float:
        return 1.0 if self.scores is None else self.scores[index]


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _rename_cost(a: HtmlNode, b: HtmlNode) -> float:
    if a.tag != b.tag:
        return 1.0
    if a.tag != "td":
        return 0.0
    if a.rowspan != b.rowspan or a.colspan != b.colspan:
        return 1.0
    if not a.content and not b.content:
        return 0.0
    return levenshtein(a.content, b.content) / max(len(a.content), len(b.content))


def tree_edit_distance(a: HtmlNode, b: HtmlNode) -> float:
    """Exact minimal-cost ordered tree edit distance between two trees.

    Keyroot dynamic program over postorder node arrays; handles fractional
    rename costs.
    """
    na, la = _postorder(a)
    nb, lb = _postorder(b)
    kra = _keyroots(la)
    krb = _keyroots(lb)
    n, m = len(na), len(nb)
    td = [[0.0] * m for _ in range(n)]

    for x in kra:
        for y in krb:
            _forest_dist(x, y, na, la, nb, lb, td)
    return td[n - 1][m - 1]


def _postorder(root: HtmlNode) -> tuple[list[HtmlNode], list[int]]:
    nodes: list[HtmlNode] = []
    lmld: list[int] = []

    def visit(node: HtmlNode) -> int:
        first_leaf = -1
        for child in node.children:
            leaf = visit(child)
            if first_leaf < 0:
                first_leaf = leaf
        index = len(nodes)
        nodes.append(node)
        lmld.append(first_leaf if first_leaf >= 0 else index)
        return lmld[index]

    visit(root)
    return nodes, lmld


def _keyroots(lmld: list[int]) -> list[int]:
    last: dict[int, int] = {}
    for i, l in enumerate(lmld):
        last[l] = i
    return sorted(last.values())


def _forest_dist(
    x: int,
    y: int,
    na: list[HtmlNode],
    la: list[int],
    nb: list[HtmlNode],
    lb: list[int],
    td: list[list[float]],
) -> None:
    lx, ly = la[x], lb[y]
    w, h = x - lx + 2, y - ly + 2
    fd = [[0.0] * h for _ in range(w)]
    for i in range(1, w):
        fd[i][0] = fd[i - 1][0] + 1.0
    for j in range(1, h):
        fd[0][j] = fd[0][j - 1] + 1.0
    for i in range(1, w):
        ai = lx + i - 1
        for j in range(1, h):
            bj = ly + j - 1
            if la[ai] == lx and lb[bj] == ly:
                fd[i][j] = min(
                    fd[i - 1][j] + 1.0,
                    fd[i][j - 1] + 1.0,
                    fd[i - 1][j - 1] + _rename_cost(na[ai], nb[bj]),
                )
                td[ai][bj] = fd[i][j]
            else:
                fd[i][j] = min(
                    fd[i - 1][j] + 1.0,
                    fd[i][j - 1] + 1.0,
                    fd[la[ai] - lx][lb[bj] - ly] + td[ai][bj],
                )


def _erase_contents(node: HtmlNode) -> HtmlNode:
    if node.tag == "td":
        return HtmlNode("td", rowspan=node.rowspan, colspan=node.colspan, content="")
    return HtmlNode(node.tag, children=[_erase_contents(c) for c in node.children])


def teds(pred_html: str, gt_html: str) -> TedsResult:
    """Score predicted table HTML against ground truth.

    Full score uses cell contents; the structure score is computed after
    erasing all td contents. teds_delta = teds_s - teds (the content-induced
    degradation; non-negative on content-only errors). Inputs that do not
    contain a table even under lenient parsing are scored 0 and flagged.
    """
    flags: list[str] = []
    pred = parse_html_string(pred_html, lenient=True)
    gt = parse_html_string(gt_html, lenient=True)
    if pred is None:
        flags.append("pred_unparseable")
    if gt is None:
        flags.append("gt_unparseable")
    if flags:
        return TedsResult(0.0, 0.0, 0.0, tuple(flags))

    pred_c = canonicalize_structure(pred)
    gt_c = canonicalize_structure(gt)
    n = max(pred_c.n_nodes(), gt_c.n_nodes())
    full = max(0.0, 1.0 - tree_edit_distance(pred_c, gt_c) / n)
    structure = max(
        0.0, 1.0 - tree_edit_distance(_erase_contents(pred_c), _erase_contents(gt_c)) / n
    )
    return TedsResult(full, structure, structure - full, ())


def ap50(preds: list[DetectionSet], gts: list[list[BBox]]) -> float:
    """Average precision of box detections at IoU >= 0.5.

    Predictions are ranked globally by score (ties broken by image then
    index), greedily matched to the best still-unmatched ground-truth box of
    their image, and the precision-recall curve is integrated with 101-point
    interpolation.
    """
    if len(preds) != len(gts):
        raise ValueError("preds and gts must align per image")
    total_gt = sum(len(g) for g in gts)
    ranked: list[tuple[float, int, int]] = []
    for img, det in enumerate(preds):
        for k in range(len(det.boxes)):
            ranked.append((-det.score_of(k), img, k))
    ranked.sort()
    if not ranked or total_gt == 0:
        return 0.0

    matched: list[list[bool]] = [[False] * len(g) for g in gts]
    tp = 0
    curve: list[tuple[float, float]] = []  # (recall, precision) after each detection
    for rank, (_, img, k) in enumerate(ranked, start=1):
        box = preds[img].boxes[k]
        best_iou, best_j = 0.0, -1
        for j, gt_box in enumerate(gts[img]):
            if matched[img][j]:
                continue
            overlap = iou(box, gt_box)
            if overlap >= 0.5 and overlap > best_iou:
                best_iou, best_j = overlap, j
        if best_j >= 0:
            matched[img][best_j] = True
            tp += 1
        curve.append((tp / total_gt, tp / rank))

    total = 0.0
    for step in range(101):
        threshold = step / 100.0
        best = 0.0
        for recall, precision in curve:
            if recall >= threshold - 1e-12 and precision > best:
                best = precision
        total += best
    return total / 101.0


@dataclass(frozen=True)
class SampleScore:
    id: str
    result: TedsResult


@dataclass(frozen=True)
class CorpusReport:
    per_sample: tuple[SampleScore, ...]
    mean_teds: float
    mean_teds_s: float
    mean_teds_delta: float
    ap50: float | None
    missing_pred: tuple[str, ...]
    extra_pred: tuple[str, ...]


def corpus_eval(
    preds: dict[str, str],
    gts: dict[str, str],
    pred_boxes: dict[str, DetectionSet] | None = None,
    gt_boxes: dict[str, list[BBox]] | None = None,
) -> CorpusReport:
    """Score a corpus of HTML predictions (and optionally boxes) by sample id.

    Ground-truth ids drive the evaluation: a missing prediction scores 0 and
    is flagged; prediction ids without a ground truth are reported but not
    averaged. Aggregation is order-independent (sorted by id).
    """
    gt_ids = sorted(gts)
    missing = tuple(i for i in gt_ids if i not in preds)
    extra = tuple(sorted(i for i in preds if i not in gts))
    scores: list[SampleScore] = []
    for sample_id in gt_ids:
        if sample_id not in preds:
            scores.append(
                SampleScore(sample_id, TedsResult(0.0, 0.0, 0.0, ("missing_pred",)))
            )
        else:
            scores.append(SampleScore(sample_id, teds(preds[sample_id], gts[sample_id])))

    n = len(gt_ids)
    mean_t = sum(s.result.teds for s in scores) / n if n else 0.0
    mean_s = sum(s.result.teds_s for s in scores) / n if n else 0.0
    mean_d = sum(s.result.teds_delta for s in scores) / n if n else 0.0

    ap: float | None = None
    if gt_boxes is not None:
        det_list: list[DetectionSet] = []
        gt_list: list[list[BBox]] = []
        for sample_id in sorted(gt_boxes):
            gt_list.append(list(gt_boxes[sample_id]))
            if pred_boxes is not None and sample_id in pred_boxes:
                det_list.append(pred_boxes[sample_id])
            else:
                det_list.append(DetectionSet(boxes=()))
        ap = ap50(det_list, gt_list)

    return CorpusReport(tuple(scores), mean_t, mean_s, mean_d, ap, missing, extra)
