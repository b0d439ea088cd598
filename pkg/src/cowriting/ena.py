"""Epistemic network accumulation, embedding, and network comparison.

Code co-occurrences are accumulated per unit within conversations using an
infinite stanza window, sphere-normalized, embedded via mean-centered SVD,
and co-registered so node positions align with unit scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np

from .coding import CODES, Code, CodedEvent


class EnaError(Exception):
    pass


def pair_index(n_codes: int) -> list[tuple[int, int]]:
    """Unordered code pairs (i < j) in fixed lexicographic order."""
    return [(i, j) for i in range(n_codes) for j in range(i + 1, n_codes)]


@dataclass(frozen=True)
class AdjacencyVector:
    unit: tuple[str, str]  # (session_id, author_id)
    values: np.ndarray  # length K(K-1)/2, raw co-occurrence counts


def accumulate(
    coded: Sequence[CodedEvent],
    *,
    codes: Sequence[Code] = CODES,
) -> list[AdjacencyVector]:
    """Accumulate co-occurrence counts per unit with an infinite window.

    Units are (session_id, author_id); conversations are (session_id,
    author_id, sentence_id).  Within a conversation, event t contributes 1
    to pair {i, j} iff code i is present at t and code j was present at any
    event s <= t (or vice versa).  Self-pairs are excluded.
    """
    if not coded:
        raise EnaError("coded table is empty")
    code_pos = {c: k for k, c in enumerate(codes)}
    pairs = pair_index(len(codes))
    convs: dict[Hashable, list[np.ndarray]] = {}
    conv_unit: dict[Hashable, tuple[str, str]] = {}
    for ev in coded:
        key = (ev.session_id, ev.author_id, ev.sentence_id)
        row = np.zeros(len(codes), dtype=bool)
        for c in ev.codes:
            if c in code_pos:
                row[code_pos[c]] = True
        convs.setdefault(key, []).append(row)
        conv_unit[key] = (ev.session_id, ev.author_id)
    totals: dict[tuple[str, str], np.ndarray] = {}
    for key, rows in convs.items():
        unit = conv_unit[key]
        acc = totals.setdefault(unit, np.zeros(len(pairs), dtype=float))
        seen = np.zeros(len(rows[0]), dtype=bool)
        for row in rows:
            seen |= row
            for p, (i, j) in enumerate(pairs):
                if (row[i] and seen[j]) or (row[j] and seen[i]):
                    acc[p] += 1.0
    return [AdjacencyVector(unit=u, values=v) for u, v in sorted(totals.items())]


def sphere_normalize(vectors: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Scale each row to unit L2 norm; zero rows stay zero and are flagged."""
    norms = np.linalg.norm(vectors, axis=1)
    flagged = [int(i) for i in np.flatnonzero(norms == 0)]
    safe = np.where(norms == 0, 1.0, norms)
    return vectors / safe[:, None], flagged


@dataclass
class EnaModel:
    units: list[tuple[str, str]]
    raw: np.ndarray  # N x P raw counts
    normalized: np.ndarray  # N x P sphere-normalized
    rotation: np.ndarray  # P x D orthonormal columns
    scores: np.ndarray  # N x D
    variance_explained: np.ndarray  # D
    codes: list[Code]
    node_positions: Optional[np.ndarray] = None  # K x D
    fit: Optional[np.ndarray] = None  # per-dimension Pearson r
    zero_units: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "units": [list(u) for u in self.units],
            "codes": [c.value for c in self.codes],
            "rotation": self.rotation.tolist(),
            "scores": self.scores.tolist(),
            "variance_explained": self.variance_explained.tolist(),
            "node_positions": None
            if self.node_positions is None
            else self.node_positions.tolist(),
            "fit": None if self.fit is None else self.fit.tolist(),
            "zero_units": self.zero_units,
        }


def project(
    vectors: Sequence[AdjacencyVector],
    *,
    dims: int = 2,
    codes: Sequence[Code] = CODES,
) -> EnaModel:
    """Mean-center the normalized adjacency matrix and embed it via SVD.

    Each rotation column's sign is fixed so its largest-magnitude loading is
    positive, making the projection deterministic.
    """
    if len(vectors) < 2:
        raise EnaError("projection needs at least 2 units")
    raw = np.vstack([v.values for v in vectors]).astype(float)
    normalized, zero_units = sphere_normalize(raw)
    centered = normalized - normalized.mean(axis=0)
    try:
        _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise EnaError(
            f"SVD failed to converge (matrix {centered.shape}, "
            f"fro norm {np.linalg.norm(centered):.3g}): {exc}"
        ) from exc
    d = min(dims, vt.shape[0])
    rotation = vt[:d].T.copy()
    for k in range(d):
        lead = np.argmax(np.abs(rotation[:, k]))
        if rotation[lead, k] < 0:
            rotation[:, k] *= -1
    scores = centered @ rotation
    total = float(np.sum(sing**2))
    var = (sing[:d] ** 2) / total if total > 0 else np.zeros(d)
    return EnaModel(
        units=[v.unit for v in vectors],
        raw=raw,
        normalized=normalized,
        rotation=rotation,
        scores=scores,
        variance_explained=var,
        codes=list(codes),
        zero_units=zero_units,
    )


def centroid_matrix(
    normalized: np.ndarray, n_codes: int
) -> np.ndarray:
    """Linear map A with centroid_u = (A @ x)_u for node coordinates x.

    A[u, k] = sum over pairs containing code k of w_u,pair / 2, divided by
    the unit's total edge weight.  Zero-weight units get a zero row.
    """
    pairs = pair_index(n_codes)
    n = normalized.shape[0]
    a = np.zeros((n, n_codes))
    for p, (i, j) in enumerate(pairs):
        a[:, i] += normalized[:, p] / 2.0
        a[:, j] += normalized[:, p] / 2.0
    w = normalized.sum(axis=1)
    safe = np.where(w == 0, 1.0, w)
    return a / safe[:, None]


def position_nodes(model: EnaModel) -> EnaModel:
    """Least-squares node placement so network centroids track unit scores.

    Solved per dimension as min-norm least squares (rank deficiency is
    tolerated and flagged via matrix rank).  Fit is the Pearson correlation
    between scores and resulting centroids per dimension.
    """
    a = centroid_matrix(model.normalized, len(model.codes))
    positions, *_ = np.linalg.lstsq(a, model.scores, rcond=None)
    centroids = a @ positions
    fit = np.zeros(model.scores.shape[1])
    for k in range(model.scores.shape[1]):
        s, c = model.scores[:, k], centroids[:, k]
        if np.std(s) == 0 or np.std(c) == 0:
            fit[k] = 0.0
        else:
            fit[k] = float(np.corrcoef(s, c)[0, 1])
    model.node_positions = positions
    model.fit = fit
    return model


@dataclass(frozen=True)
class NetworkGraph:
    label: str
    edge_weights: np.ndarray  # length P; signed for difference graphs
    node_positions: np.ndarray  # K x D
    centroid: np.ndarray  # D (mean of member scores)
    codes: tuple[Code, ...]
    is_difference: bool = False


def mean_network(
    model: EnaModel, unit_indices: Sequence[int], label: str
) -> NetworkGraph:
    if len(unit_indices) == 0:
        raise EnaError(f"mean network over empty unit set ({label})")
    if model.node_positions is None:
        raise EnaError("position_nodes must run before building networks")
    idx = np.asarray(unit_indices)
    return NetworkGraph(
        label=label,
        edge_weights=model.normalized[idx].mean(axis=0),
        node_positions=model.node_positions,
        centroid=model.scores[idx].mean(axis=0),
        codes=tuple(model.codes),
    )


def diff_network(a: NetworkGraph, b: NetworkGraph) -> NetworkGraph:
    if a.codes != b.codes:
        raise EnaError("difference of networks over mismatched code sets")
    return NetworkGraph(
        label=f"{a.label} - {b.label}",
        edge_weights=a.edge_weights - b.edge_weights,
        node_positions=a.node_positions,
        centroid=a.centroid - b.centroid,
        codes=a.codes,
        is_difference=True,
    )
