"""Session log ingestion and replay.

Parses line-delimited JSON trace files into canonical events, replays them
into document states (with per-character origin tags), and applies the
corpus-level exclusion rules.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Iterable, Iterator, Optional, Sequence

EVENT_NAMES = frozenset(
    {
        "text-insert",
        "text-delete",
        "cursor-forward",
        "cursor-backward",
        "cursor-select",
        "suggestion-get",
        "suggestion-open",
        "suggestion-close",
        "suggestion-select",
        "suggestion-hover",
        "other",
    }
)

EVENT_SOURCES = frozenset({"user", "api"})

# Expected temperature settings per prompt kind; anything else is accepted
# with a warning.
KNOWN_TEMPERATURES = {
    "argumentative": (0.2, 0.9),
    "creative": (0.3, 0.75),
}

# Adapter from raw CoAuthor log field names to the canonical schema.  Other
# log dialects can be supported by passing a different mapping to
# parse_session.
COAUTHOR_FIELD_MAP = {
    "eventName": "event_name",
    "eventSource": "event_source",
    "eventTimestamp": "timestamp",
    "textDelta": "text",
    "textOffset": "offset",
    "cursorRange": "cursor_range",
    "currentSuggestions": "suggestions",
    "currentDoc": "doc",
}

# Raw event names that carry document snapshots rather than edits.
_INIT_EVENT = "system-initialize"
_FINAL_EVENT = "system-finalize"


class TraceError(Exception):
    """Raised when a session log cannot be parsed or replayed."""


class ReplayError(TraceError):
    """Raised when an event cannot be applied to the document state."""


@dataclass(frozen=True)
class CanonicalEvent:
    event_name: str
    event_source: str
    timestamp: float
    offset: Optional[int] = None
    text: Optional[str] = None
    cursor_range: Optional[tuple[int, int]] = None
    suggestions: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class SessionMeta:
    session_id: str
    author_id: str
    prompt_kind: str
    prompt_id: str
    temperature: float
    ownership_pct: float

    def __post_init__(self) -> None:
        known = KNOWN_TEMPERATURES.get(self.prompt_kind)
        if known is not None and self.temperature not in known:
            warnings.warn(
                f"session {self.session_id}: temperature {self.temperature} "
                f"unexpected for {self.prompt_kind} prompts {known}",
                stacklevel=2,
            )


@dataclass(frozen=True)
class SessionTrace:
    meta: SessionMeta
    events: tuple[CanonicalEvent, ...]
    prompt_text: str
    final_text: str
    parse_issues: tuple[str, ...] = ()


@dataclass(frozen=True)
class DocumentState:
    text: str
    cursor: tuple[int, int]
    event_index: int
    # one origin tag per character: "prompt", "user", or "api"
    origins: tuple[str, ...] = ()


def _coerce_event(record: dict, field_map: dict[str, str]) -> CanonicalEvent:
    row = {field_map.get(k, k): v for k, v in record.items()}
    name = row.get("event_name")
    if not isinstance(name, str) or not name:
        raise ValueError("missing event name")
    if name not in EVENT_NAMES:
        name = "other"
    source = row.get("event_source", "user")
    if source not in EVENT_SOURCES:
        source = "user"
    ts = float(row.get("timestamp", 0))
    offset = row.get("offset")
    if offset is not None:
        offset = int(offset)
        if offset < 0:
            raise ValueError(f"negative offset {offset}")
    cursor = row.get("cursor_range")
    if cursor is not None:
        cursor = (int(cursor[0]), int(cursor[1]))
    suggestions = row.get("suggestions")
    if suggestions is not None:
        suggestions = tuple(str(s) for s in suggestions)
    text = row.get("text")
    if text is not None:
        text = str(text)
    return CanonicalEvent(
        event_name=name,
        event_source=source,
        timestamp=ts,
        offset=offset,
        text=text,
        cursor_range=cursor,
        suggestions=suggestions,
    )


def parse_session(
    raw: Iterable[str],
    meta: SessionMeta,
    *,
    field_map: dict[str, str] = COAUTHOR_FIELD_MAP,
    max_malformed_frac: float = 0.05,
) -> SessionTrace:
    """Parse a line-delimited JSON record stream into a SessionTrace.

    Unrecognized event names are preserved as ``other``.  Malformed lines are
    skipped and reported; if more than ``max_malformed_frac`` of the lines
    are malformed the whole session is rejected.
    """
    events: list[CanonicalEvent] = []
    issues: list[str] = []
    prompt_text = ""
    logged_final: Optional[str] = None
    n_lines = 0
    last_ts = float("-inf")
    for lineno, line in enumerate(raw, start=1):
        if not line.strip():
            continue
        n_lines += 1
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("record is not an object")
            raw_name = record.get("eventName") or record.get("event_name")
            doc_key = "currentDoc" if "currentDoc" in record else "doc"
            if raw_name == _INIT_EVENT:
                prompt_text = str(record.get(doc_key, ""))
            elif raw_name == _FINAL_EVENT:
                logged_final = str(record.get(doc_key, ""))
            event = _coerce_event(record, field_map)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            issues.append(f"line {lineno}: {exc}")
            continue
        if event.timestamp < last_ts:
            issues.append(f"line {lineno}: timestamp decreased")
            continue
        last_ts = event.timestamp
        events.append(event)
    if n_lines and len(issues) / n_lines > max_malformed_frac:
        raise TraceError(
            f"session {meta.session_id}: {len(issues)}/{n_lines} malformed "
            f"lines exceeds threshold {max_malformed_frac:.0%}"
        )
    final_text = _replay_final(events, prompt_text, meta.session_id)
    if logged_final is not None and logged_final != final_text:
        raise TraceError(
            f"session {meta.session_id}: replayed final text does not match "
            "logged final text"
        )
    return SessionTrace(
        meta=meta,
        events=tuple(events),
        prompt_text=prompt_text,
        final_text=logged_final if logged_final is not None else final_text,
        parse_issues=tuple(issues),
    )


def _replay_final(
    events: Sequence[CanonicalEvent], prompt_text: str, session_id: str
) -> str:
    text = prompt_text
    for i, ev in enumerate(events):
        if ev.event_name == "text-insert":
            off = ev.offset if ev.offset is not None else len(text)
            if off > len(text):
                raise ReplayError(
                    f"session {session_id}: event {i} insert offset {off} "
                    f"beyond document length {len(text)}"
                )
            text = text[:off] + (ev.text or "") + text[off:]
        elif ev.event_name == "text-delete":
            off = ev.offset if ev.offset is not None else 0
            length = len(ev.text or "")
            if off + length > len(text):
                raise ReplayError(
                    f"session {session_id}: event {i} delete range "
                    f"[{off}, {off + length}) beyond document length {len(text)}"
                )
            text = text[:off] + text[off + length :]
    return text


def replay(trace: SessionTrace) -> Iterator[DocumentState]:
    """Yield one DocumentState per event, carrying per-character origins.

    Prompt characters are tagged ``prompt``; inserted characters take the
    event source (``user`` or ``api``).  All offsets are Unicode scalar
    indices.
    """
    text = trace.prompt_text
    origins = ["prompt"] * len(text)
    cursor = (len(text), len(text))
    for i, ev in enumerate(trace.events):
        if ev.event_name == "text-insert":
            off = ev.offset if ev.offset is not None else len(text)
            ins = ev.text or ""
            if off > len(text):
                raise ReplayError(
                    f"event {i}: insert offset {off} beyond document "
                    f"length {len(text)}"
                )
            text = text[:off] + ins + text[off:]
            origins[off:off] = [ev.event_source] * len(ins)
            cursor = (off + len(ins), off + len(ins))
        elif ev.event_name == "text-delete":
            off = ev.offset if ev.offset is not None else 0
            length = len(ev.text or "")
            if off + length > len(text):
                raise ReplayError(
                    f"event {i}: delete range [{off}, {off + length}) beyond "
                    f"document length {len(text)}"
                )
            text = text[:off] + text[off + length :]
            del origins[off : off + length]
            cursor = (off, off)
        elif ev.event_name.startswith("cursor-"):
            if ev.cursor_range is not None:
                lo = max(0, min(ev.cursor_range[0], len(text)))
                hi = max(0, min(ev.cursor_range[1], len(text)))
                cursor = (lo, hi)
            elif ev.offset is not None:
                pos = max(0, min(ev.offset, len(text)))
                cursor = (pos, pos)
        yield DocumentState(
            text=text, cursor=cursor, event_index=i, origins=tuple(origins)
        )


def final_state(trace: SessionTrace) -> DocumentState:
    state = DocumentState(
        text=trace.prompt_text,
        cursor=(len(trace.prompt_text),) * 2,
        event_index=-1,
        origins=("prompt",) * len(trace.prompt_text),
    )
    for state in replay(trace):
        pass
    return state


@dataclass(frozen=True)
class Exclusion:
    session_id: str
    reason: str


@dataclass(frozen=True)
class PreprocessResult:
    kept: tuple[SessionTrace, ...]
    excluded: tuple[Exclusion, ...]
    ownership_median: float
    # session_id -> "user" (above median) or "gai"
    ownership_labels: dict[str, str] = field(default_factory=dict)


def preprocess(
    corpus: Sequence[SessionTrace],
    *,
    pin_ownership_median: Optional[float] = None,
) -> PreprocessResult:
    """Apply corpus exclusions and the median ownership split.

    Sessions whose prompt text was entirely deleted during replay are
    excluded (reason ``prompt-removed``), as are sessions with a missing
    author id (reason ``missing-author``).  Ownership labels come from a
    median split over kept sessions unless a pinned boundary is supplied.
    """
    kept: list[SessionTrace] = []
    excluded: list[Exclusion] = []
    for trace in corpus:
        if not trace.meta.author_id:
            excluded.append(Exclusion(trace.meta.session_id, "missing-author"))
            continue
        if trace.prompt_text and _prompt_removed(trace):
            excluded.append(Exclusion(trace.meta.session_id, "prompt-removed"))
            continue
        kept.append(trace)
    if pin_ownership_median is not None:
        boundary = pin_ownership_median
    elif kept:
        boundary = median(t.meta.ownership_pct for t in kept)
    else:
        boundary = float("nan")
    labels = {
        t.meta.session_id: ("user" if t.meta.ownership_pct > boundary else "gai")
        for t in kept
    }
    return PreprocessResult(
        kept=tuple(kept),
        excluded=tuple(excluded),
        ownership_median=boundary,
        ownership_labels=labels,
    )


def _prompt_removed(trace: SessionTrace) -> bool:
    state = final_state(trace)
    if any(o == "prompt" for o in state.origins):
        return False
    # relocated prompt text keeps its wording but loses its origin tags;
    # only count the prompt as removed when no prompt sentence survives
    # verbatim either
    from .sentences import segment

    return not any(s.text in state.text for s in segment(trace.prompt_text))


def read_metadata(path: str | Path) -> dict[str, SessionMeta]:
    """Read the session metadata table (CSV keyed by session_id)."""
    metas: dict[str, SessionMeta] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            meta = SessionMeta(
                session_id=row["session_id"],
                author_id=row.get("author_id", ""),
                prompt_kind=row["prompt_kind"],
                prompt_id=row.get("prompt_id", ""),
                temperature=float(row["temperature"]),
                ownership_pct=float(row["ownership_pct"]),
            )
            metas[meta.session_id] = meta
    return metas


def load_corpus(
    trace_dir: str | Path,
    meta_path: str | Path,
    *,
    max_malformed_frac: float = 0.05,
) -> tuple[list[SessionTrace], list[Exclusion]]:
    """Load every ``<session_id>.jsonl`` named in the metadata table.

    Sessions that fail parsing or replay validation are returned as
    exclusions rather than raised.
    """
    trace_dir = Path(trace_dir)
    metas = read_metadata(meta_path)
    traces: list[SessionTrace] = []
    failures: list[Exclusion] = []
    for session_id, meta in sorted(metas.items()):
        path = trace_dir / f"{session_id}.jsonl"
        if not path.exists():
            failures.append(Exclusion(session_id, "trace-file-missing"))
            continue
        try:
            with open(path, encoding="utf-8") as fh:
                traces.append(
                    parse_session(fh, meta, max_malformed_frac=max_malformed_frac)
                )
        except TraceError as exc:
            failures.append(Exclusion(session_id, str(exc)))
    return traces, failures
