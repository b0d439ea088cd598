"""Binary behavioral coding of canonical events.

Each event receives a 14-flag code vector: name-mapped codes are a pure
function of event name and source; positional codes (compose, revise,
relocate, reflect) come from the replay state and sentence ledger; the
modification codes are scored when a sentence's revision episode closes,
comparing its initial text to its current text.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from .sentences import SentenceLedger, SentenceTracker
from .similarity import (
    DEFAULT_MODIFICATION_THRESHOLD,
    LexicalProvider,
    ProviderError,
    SimilarityProvider,
    is_high_modification,
)
from .trace import CanonicalEvent, DocumentState, SessionTrace, replay


class Code(Enum):
    COMPOSE = "compose"
    RELOCATE = "relocate"
    REFLECT = "reflect"
    SEEK_SUGG = "seek_sugg"
    DISMISS_SUGG = "dismiss_sugg"
    ACCEPT_SUGG = "accept_sugg"
    HOVER_SUGG = "hover_sugg"
    CURSOR_FWD = "cursor_fwd"
    CURSOR_BWD = "cursor_bwd"
    CURSOR_SELECT = "cursor_select"
    REVISE_USER = "revise_user"
    REVISE_SUGG = "revise_sugg"
    LOW_MOD = "low_mod"
    HIGH_MOD = "high_mod"


CODES: tuple[Code, ...] = tuple(Code)

# codes determined by event name (and source) alone
_NAME_MAP: dict[tuple[str, Optional[str]], Code] = {
    ("suggestion-get", None): Code.SEEK_SUGG,
    ("suggestion-close", "user"): Code.DISMISS_SUGG,
    ("suggestion-select", None): Code.ACCEPT_SUGG,
    ("suggestion-hover", None): Code.HOVER_SUGG,
    ("cursor-forward", None): Code.CURSOR_FWD,
    ("cursor-backward", None): Code.CURSOR_BWD,
    ("cursor-select", None): Code.CURSOR_SELECT,
}


def name_mapped_codes(event_name: str, event_source: str) -> frozenset[Code]:
    """Codes implied by event name/source alone (pure function)."""
    out = set()
    for (name, source), code in _NAME_MAP.items():
        if event_name == name and (source is None or event_source == source):
            out.add(code)
    return frozenset(out)


@dataclass(frozen=True)
class CodedEvent:
    session_id: str
    author_id: str
    event_index: int
    sentence_id: Optional[int]
    codes: frozenset[Code]

    def has(self, code: Code) -> bool:
        return code in self.codes


@dataclass
class CodingReport:
    """Events whose modification flags could not be resolved."""

    unresolved: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class _Episode:
    entry_id: int
    last_event: int


def code_session(
    trace: SessionTrace,
    *,
    provider: Optional[SimilarityProvider] = None,
    mod_threshold: float = DEFAULT_MODIFICATION_THRESHOLD,
    reflect_threshold: float = 0.9,
    relocation_window: int = 20,
    report: Optional[CodingReport] = None,
) -> tuple[list[CodedEvent], SentenceLedger]:
    """Code every event of a session; returns the coded list and the ledger.

    Events that map to no code keep an empty code set and are retained so
    conversation windows reflect real event ordering.
    """
    tracker = SentenceTracker(relocation_window=relocation_window)
    tracker.start(trace.prompt_text)
    final_len = len(trace.final_text)
    reflect_at = reflect_threshold * final_len
    coded: list[dict] = []
    episodes: dict[int, _Episode] = {}
    reached_reflect = final_len == 0
    if provider is None:
        provider = LexicalProvider(corpus=_session_corpus(trace))
    sid = trace.meta.session_id
    aid = trace.meta.author_id

    def close_episode(ep: _Episode) -> None:
        entry = tracker.ledger.entries[ep.entry_id]
        cur = entry.current_text
        if cur is None or cur == entry.initial_text:
            return
        try:
            high = is_high_modification(
                entry.initial_text, cur, provider, threshold=mod_threshold
            )
        except ProviderError as exc:
            if report is not None:
                report.unresolved.append((ep.last_event, str(exc)))
            return
        coded[ep.last_event]["codes"].add(Code.HIGH_MOD if high else Code.LOW_MOD)

    for event, state in zip(trace.events, replay(trace)):
        pre_len = _pre_event_length(event, state)
        effect = tracker.step(event, state)
        codes: set[Code] = set(name_mapped_codes(event.event_name, event.event_source))
        is_edit = event.event_name in ("text-insert", "text-delete")
        at_end = False
        if event.event_name == "text-insert":
            trimmed = pre_len - _trailing_ws(state, event)
            at_end = (event.offset if event.offset is not None else pre_len) >= trimmed
            if at_end:
                codes.add(Code.COMPOSE)
        if len(state.text) >= reflect_at and final_len > 0:
            reached_reflect = True
        revising = is_edit and not at_end
        if revising and effect.touched_entry is not None:
            ownership = tracker.ledger.entries[effect.touched_entry].ownership
            if ownership == "user":
                codes.add(Code.REVISE_USER)
            elif ownership == "api":
                codes.add(Code.REVISE_SUGG)
            if reached_reflect and final_len > 0:
                codes.add(Code.REFLECT)
        if effect.relocated:
            codes.add(Code.RELOCATE)
        sentence_id = _event_sentence(tracker, event, state, effect)
        coded.append(
            {
                "event_index": state.event_index,
                "sentence_id": sentence_id,
                "codes": codes,
            }
        )
        # open/extend revision episodes, close those the author moved away from
        for eid, _, _ in effect.revised:
            if eid in episodes:
                episodes[eid].last_event = state.event_index
            else:
                episodes[eid] = _Episode(entry_id=eid, last_event=state.event_index)
        pos = _activity_position(event, state)
        if pos is not None:
            for eid in list(episodes):
                span = _entry_span(tracker, eid)
                if span is None or not (span[0] <= pos <= span[1]):
                    close_episode(episodes.pop(eid))
    for ep in episodes.values():
        close_episode(ep)
    return (
        [
            CodedEvent(
                session_id=sid,
                author_id=aid,
                event_index=c["event_index"],
                sentence_id=c["sentence_id"],
                codes=frozenset(c["codes"]),
            )
            for c in coded
        ],
        tracker.ledger,
    )


def _session_corpus(trace: SessionTrace) -> list[str]:
    from .sentences import segment

    return [s.text for s in segment(trace.final_text)] or [trace.final_text or ""]


def _pre_event_length(event: CanonicalEvent, state: DocumentState) -> int:
    n = len(state.text)
    if event.event_name == "text-insert":
        return n - len(event.text or "")
    if event.event_name == "text-delete":
        return n + len(event.text or "")
    return n


def _trailing_ws(state: DocumentState, event: CanonicalEvent) -> int:
    # trailing whitespace of the pre-event document
    if event.event_name == "text-insert":
        off = event.offset if event.offset is not None else 0
        ins = len(event.text or "")
        pre = state.text[:off] + state.text[off + ins :]
    else:
        pre = state.text
    return len(pre) - len(pre.rstrip())


def _activity_position(event: CanonicalEvent, state: DocumentState) -> Optional[int]:
    if event.event_name in ("text-insert", "text-delete"):
        return event.offset if event.offset is not None else 0
    if event.event_name.startswith("cursor-") and event.cursor_range is not None:
        return event.cursor_range[0]
    if event.event_name.startswith("cursor-") and event.offset is not None:
        return event.offset
    return None


def _entry_span(tracker: SentenceTracker, entry_id: int) -> Optional[tuple[int, int]]:
    try:
        i = tracker.ledger.live_order.index(entry_id)
    except ValueError:
        return None
    return tracker._spans[i]


def _event_sentence(
    tracker: SentenceTracker,
    event: CanonicalEvent,
    state: DocumentState,
    effect,
) -> Optional[int]:
    if effect.touched_entry is not None:
        return effect.touched_entry
    pos = _activity_position(event, state)
    if pos is None:
        pos = len(state.text)
    best: Optional[int] = None
    for (start, end), eid in zip(tracker._spans, tracker.ledger.live_order):
        if start <= pos <= end:
            return eid
        if start <= pos or best is None:
            best = eid
    return best


def code_table(coded: Sequence[CodedEvent]) -> list[dict]:
    """Wide rows (one per event, one 0/1 column per code) for CSV export."""
    rows = []
    for ev in coded:
        row: dict = {
            "session_id": ev.session_id,
            "author_id": ev.author_id,
            "event_index": ev.event_index,
            "sentence_id": "" if ev.sentence_id is None else ev.sentence_id,
        }
        for code in CODES:
            row[code.value] = int(code in ev.codes)
        rows.append(row)
    return rows
