"""Report figures: network graphs as SVG and the embedding-space scatter.

Network graphs are emitted as hand-written SVG so node coordinates are an
exact affine transform of the model's node positions (testable to the
pixel).  The embedding scatter uses matplotlib with deterministic output
(fixed hash salt, no timestamp metadata).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .ena import EnaModel, NetworkGraph, pair_index

plt.rcParams["svg.hashsalt"] = "cowriting"

_POS_COLOR = "#c0392b"  # first group stronger
_NEG_COLOR = "#2a6fbb"  # second group stronger
_MEAN_COLOR = "#555555"


@dataclass(frozen=True)
class Viewport:
    """Affine map from embedding coordinates to SVG pixels."""

    size: int
    pad: float
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @classmethod
    def fit(cls, points: np.ndarray, size: int = 600, pad: float = 60.0) -> "Viewport":
        x_min, x_max = float(points[:, 0].min()), float(points[:, 0].max())
        y_min, y_max = float(points[:, 1].min()), float(points[:, 1].max())
        if x_max == x_min:
            x_min, x_max = x_min - 0.5, x_max + 0.5
        if y_max == y_min:
            y_min, y_max = y_min - 0.5, y_max + 0.5
        return cls(size, pad, x_min, x_max, y_min, y_max)

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        inner = self.size - 2 * self.pad
        px = self.pad + (x - self.x_min) / (self.x_max - self.x_min) * inner
        # SVG y axis points down
        py = self.size - self.pad - (y - self.y_min) / (self.y_max - self.y_min) * inner
        return px, py


def render_network_svg(
    graph: NetworkGraph,
    model: EnaModel,
    *,
    size: int = 600,
    max_edge_px: float = 8.0,
    max_node_px: float = 14.0,
) -> str:
    """Render one network in the co-registered embedding space as SVG.

    Node size scales with code frequency, edge thickness with |weight|;
    difference graphs color edges by sign.  Axes carry variance explained.
    """
    positions = graph.node_positions[:, :2]
    view = Viewport.fit(positions, size=size)
    pairs = pair_index(len(graph.codes))
    freq = model.raw.sum(axis=0)
    freq = freq / freq.max() if freq.max() > 0 else freq
    w_max = float(np.max(np.abs(graph.edge_weights))) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<title>{escape(graph.label)}</title>',
    ]
    ve = model.variance_explained
    parts.append(
        f'<text x="{size / 2:.1f}" y="{size - 12}" text-anchor="middle" '
        f'font-size="12">dimension 1 ({100 * ve[0]:.1f}% variance)</text>'
    )
    if len(ve) > 1:
        parts.append(
            f'<text x="14" y="{size / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {size / 2:.1f})">dimension 2 '
            f"({100 * ve[1]:.1f}% variance)</text>"
        )
    for p, (i, j) in enumerate(pairs):
        w = float(graph.edge_weights[p])
        if w == 0.0:
            continue
        x1, y1 = view.to_px(*positions[i])
        x2, y2 = view.to_px(*positions[j])
        if graph.is_difference:
            color = _POS_COLOR if w > 0 else _NEG_COLOR
        else:
            color = _MEAN_COLOR
        width = max_edge_px * abs(w) / w_max
        parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{color}" stroke-width="{width:.2f}" stroke-opacity="0.8"/>'
        )
    for k, code in enumerate(graph.codes):
        x, y = view.to_px(*positions[k])
        r = 3.0 + max_node_px * float(freq[k] if k < freq.size else 0)
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="#222222"/>'
        )
        parts.append(
            f'<text x="{x + r + 2:.2f}" y="{y - 2:.2f}" font-size="11">'
            f"{escape(code.value)}</text>"
        )
    cx, cy = view.to_px(float(graph.centroid[0]), float(graph.centroid[1]))
    parts.append(
        f'<rect x="{cx - 5:.2f}" y="{cy - 5:.2f}" width="10" height="10" '
        f'fill="none" stroke="#000" stroke-width="1.5"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def save_scatter(
    model: EnaModel,
    group_of_unit: Sequence[str],
    path: str | Path,
) -> None:
    """Embedding-space scatter of unit scores with per-group centroids."""
    fig, ax = plt.subplots(figsize=(6, 6))
    groups = sorted(set(group_of_unit))
    cmap = plt.get_cmap("tab10")
    scores = model.scores
    for gi, g in enumerate(groups):
        idx = [i for i, lab in enumerate(group_of_unit) if lab == g]
        pts = scores[idx]
        color = cmap(gi % 10)
        ax.scatter(pts[:, 0], pts[:, 1], s=12, alpha=0.5, color=color, label=g)
        cen = pts.mean(axis=0)
        ax.scatter([cen[0]], [cen[1]], marker="s", s=90, color=color,
                   edgecolors="black", zorder=5)
    ve = model.variance_explained
    ax.set_xlabel(f"dimension 1 ({100 * ve[0]:.1f}% variance)")
    if len(ve) > 1:
        ax.set_ylabel(f"dimension 2 ({100 * ve[1]:.1f}% variance)")
    ax.axhline(0, color="gray", lw=0.5)
    ax.axvline(0, color="gray", lw=0.5)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
