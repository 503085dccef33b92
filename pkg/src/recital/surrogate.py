"""Digital surrogates: reading-ordered text and positioned layout documents.

Reading order groups consensus boxes into lines (vertical overlap of at least
half the smaller box height, single linkage), lines top to bottom, boxes left
to right within a line. Questionable texts stay visible in the plain-text
reconstitution but wrapped in uncertainty markers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from recital.config import Config
from recital.cook import Tier
from recital.store import RecordId, Stage, Store
from recital.util import now_ms

TIER_COLORS = {
    Tier.FULLY_CONFIDENT.value: "#2e7d32",
    Tier.ALMOST_CONFIDENT.value: "#f9a825",
    Tier.QUESTIONABLE.value: "#c62828",
}


@dataclass
class LayoutElement:
    box: list[float]
    text: str
    tier: str
    cluster: str


@dataclass
class LayoutDocument:
    page: str
    aspect: float
    elements: list[LayoutElement]
    generated_at: int
    config_digest: str

    def to_payload(self) -> dict:
        return {
            "page": self.page,
            "aspect": self.aspect,
            "elements": [
                {"box": e.box, "text": e.text, "tier": e.tier, "cluster": e.cluster}
                for e in self.elements
            ],
            "generated_at": self.generated_at,
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "LayoutDocument":
        return cls(
            page=payload["page"],
            aspect=payload["aspect"],
            elements=[LayoutElement(e["box"], e["text"], e["tier"], e["cluster"])
                      for e in payload["elements"]],
            generated_at=payload["generated_at"],
            config_digest=payload["config_digest"],
        )

    def serialize(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _vertical_overlap(a: list, b: list) -> bool:
    top = max(a[1], b[1])
    bottom = min(a[1] + a[3], b[1] + b[3])
    overlap = bottom - top
    return overlap >= 0.5 * min(a[3], b[3])


def reading_lines(items: list[tuple[str, list]]) -> list[list[str]]:
    """Group (key, box) pairs into reading lines: single-linkage on vertical
    overlap, lines sorted by top edge, boxes left to right within a line."""
    if not items:
        return []
    ordered = sorted(items, key=lambda kv: (kv[1][1], kv[1][0], kv[0]))
    n = len(ordered)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _vertical_overlap(ordered[i][1], ordered[j][1]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    line_list = [
        sorted(idxs, key=lambda i: (ordered[i][1][0], ordered[i][1][1], ordered[i][0]))
        for idxs in groups.values()
    ]
    line_list.sort(key=lambda idxs: min(ordered[i][1][1] for i in idxs))
    return [[ordered[i][0] for i in idxs] for idxs in line_list]


def reading_order(items: list[tuple[str, list]]) -> list[str]:
    """Flattened reading lines; a permutation of the input keys."""
    return [key for line in reading_lines(items) for key in line]


def _page_element_map(store: Store, page_rid: RecordId) -> tuple[dict[str, dict], list[tuple[str, list]]]:
    transcripts_by_cluster: dict[str, dict] = {}
    for rid, payload in store.scan(Stage.COOKED, "cooked_transcript",
                                   where=lambda p: p["page"] == page_rid.key):
        if store.is_live(rid):
            transcripts_by_cluster[payload["cluster"]] = payload
    elements: dict[str, dict] = {}
    boxes: list[tuple[str, list]] = []
    for rid, payload in store.scan(Stage.COOKED, "mark_cluster",
                                   where=lambda p: p["page"] == page_rid.key):
        ct = transcripts_by_cluster.get(rid.key)
        elements[rid.key] = {
            "box": payload["box"],
            "text": ct["consensus_text"] if ct else "",
            "tier": ct["tier"] if ct else Tier.QUESTIONABLE.value,
            "cluster": rid.key,
        }
        boxes.append((rid.key, payload["box"]))
    return elements, boxes


def collect_page_elements(store: Store, page_rid: RecordId) -> list[dict]:
    """One element per cluster of the page, in reading order, with the live
    consensus text and tier (untranscribed clusters render empty text)."""
    elements, boxes = _page_element_map(store, page_rid)
    return [elements[key] for key in reading_order(boxes)]


def text_reconstitution(store: Store, page_rid: RecordId, config: Config) -> str:
    """Reading-ordered plain text; questionable readings wrapped in markers."""
    open_mark = config.get("surrogate.marker.open")
    close_mark = config.get("surrogate.marker.close")
    elements, boxes = _page_element_map(store, page_rid)
    rendered_lines = []
    for line in reading_lines(boxes):
        words = []
        for key in line:
            el = elements[key]
            text = el["text"]
            if el["tier"] == Tier.QUESTIONABLE.value:
                text = f"{open_mark}{text}{close_mark}"
            if text:
                words.append(text)
        if words:
            rendered_lines.append(" ".join(words))
    return "\n".join(rendered_lines)


def layout_reconstitution(store: Store, page_rid: RecordId, config: Config) -> LayoutDocument:
    page = store.get(page_rid)
    elements = [
        LayoutElement(el["box"], el["text"], el["tier"], el["cluster"])
        for el in collect_page_elements(store, page_rid)
    ]
    return LayoutDocument(
        page=page_rid.key,
        aspect=float(page.get("aspect", 0.75)),
        elements=elements,
        generated_at=now_ms(),
        config_digest=config.digest(),
    )


def render_svg(doc: LayoutDocument) -> str:
    """Scalable-vector rendering: one rect and text per element, tier-coded."""
    width = 1000.0
    height = round(width / doc.aspect, 1) if doc.aspect else 1333.3
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'font-family="serif">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#fdf6e3" stroke="#999"/>',
    ]
    for el in doc.elements:
        x, y, w, h = (el.box[0] * width, el.box[1] * height,
                      el.box[2] * width, el.box[3] * height)
        color = TIER_COLORS.get(el.tier, "#555")
        font = max(10.0, min(h * 0.6, 28.0))
        label = (el.text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" height="{h:.1f}" '
            f'fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{x + 4:.1f}" y="{y + h / 2 + font / 3:.1f}" font-size="{font:.1f}" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
