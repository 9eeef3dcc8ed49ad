"""Deterministic generator of small HtmlNode trees for edit-distance tests."""

from __future__ import annotations

from functools import lru_cache

from tablekit.htmlcodec import HtmlNode

# Label alphabet mixing tags, spans, and contents so every rename branch of
# the cost model is exercised (equal tags, td span mismatch, content cost).
_ALPHABET = (
    ("table", 1, 1, ""),
    ("tr", 1, 1, ""),
    ("td", 1, 1, ""),
    ("td", 1, 1, "a"),
    ("td", 1, 1, "ab"),
    ("td", 1, 1, "xyz"),
    ("td", 2, 1, "a"),
    ("td", 1, 3, ""),
)


@lru_cache(maxsize=None)
def shapes(n: int) -> tuple[tuple, ...]:
    """All ordered rooted tree shapes with n nodes (children as tuples)."""
    if n == 1:
        return ((),)
    out = []
    for first in range(1, n):
        for head in shapes(first):
            for rest in _forests(n - 1 - first):
                out.append(((head,) + rest))
    return tuple(out)


@lru_cache(maxsize=None)
def _forests(n: int) -> tuple[tuple, ...]:
    if n == 0:
        return ((),)
    out = []
    for first in range(1, n + 1):
        for head in shapes(first):
            for rest in _forests(n - first):
                out.append((head,) + rest)
    return tuple(out)


def _shape_size(shape: tuple) -> int:
    return 1 + sum(_shape_size(child) for child in shape)


def _build(shape: tuple, counter: list[int], variant: int) -> HtmlNode:
    index = counter[0]
    counter[0] += 1
    tag, rowspan, colspan, content = _ALPHABET[(index * 3 + variant) % len(_ALPHABET)]
    node = HtmlNode(tag) if tag != "td" else HtmlNode(
        "td", rowspan=rowspan, colspan=colspan, content=content
    )
    node.children = [_build(child, counter, variant) for child in shape]
    return node


def tree_pool() -> list[HtmlNode]:
    """A fixed pool of labelled trees, sizes 1..6, >= 71 entries."""
    pool: list[HtmlNode] = []
    variants_by_size = {1: 8, 2: 8, 3: 4, 4: 2, 5: 1, 6: 1}
    for size, variants in variants_by_size.items():
        for shape in shapes(size):
            for variant in range(variants):
                pool.append(_build(shape, [0], variant))
    return pool
