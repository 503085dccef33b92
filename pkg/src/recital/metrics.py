"""String and box agreement measures used across the cooking stage."""

from __future__ import annotations

from fractions import Fraction


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert / delete / substitute, all cost 1)."""
    n, m = len(a), len(b)
    if n > m:
        a, b = b, a
        n, m = m, n
    if n == 0:
        return m
    current = list(range(n + 1))
    for i in range(1, m + 1):
        previous, current = current, [i] + [0] * n
        bi = b[i - 1]
        for j in range(1, n + 1):
            change = previous[j - 1]
            if a[j - 1] != bi:
                change += 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, change)
    return current[n]


def similarity(a: str, b: str) -> Fraction:
    """1 - distance/max-length, exact. Empty vs empty compares equal (1)."""
    if not a and not b:
        return Fraction(1)
    return 1 - Fraction(levenshtein(a, b), max(len(a), len(b)))


Box = tuple  # (x, y, w, h), unit-square coordinates


def box_area(box: Box):
    return box[2] * box[3]


def box_iou(a: Box, b: Box):
    """Intersection over union. Exact when given Fraction coordinates."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0 * ax  # zero of the operand type
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    iou = inter / union
    # float rounding may nudge identical boxes past 1; IoU is bounded by law
    return min(iou, iou * 0 + 1)


def box_in_unit_square(box: Box) -> bool:
    x, y, w, h = box
    return 0 <= x and 0 <= y and w > 0 and h > 0 and x + w <= 1 and y + h <= 1
