"""Sentence segmentation and per-sentence fate tracking across a session.

The tracker follows every sentence from creation to the end of a session,
recording revisions, removals, mergers, and relocations, and guarantees that
the live ledger always matches the segmentation of the replayed document.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .similarity import lexical_cosine
from .trace import DocumentState, SessionTrace, replay

_TERMINATOR = re.compile(r"[.!?]+[\"'”’)\]]*")
_WORD_BEFORE = re.compile(r"([A-Za-z]+)$")


class TrackingError(Exception):
    """Raised when the ledger diverges from the replayed document."""


def _load_wordset(name: str) -> frozenset[str]:
    text = resources.files("cowriting.data").joinpath(name).read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def default_abbreviations() -> frozenset[str]:
    return _load_wordset("abbreviations.txt")


class Dictionary:
    """Plain-text wordlist, one word per line, case-insensitive lookup."""

    def __init__(self, path: Optional[str | Path] = None) -> None:
        if path is None:
            self._words = _load_wordset("wordlist.txt")
        else:
            raw = Path(path).read_text("utf-8")
            self._words = frozenset(
                w.strip().lower() for w in raw.splitlines() if w.strip()
            )

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._words


@dataclass(frozen=True)
class SentenceSpan:
    index: int
    char_range: tuple[int, int]  # [start, end)
    text: str
    ownership: Optional[str] = None


def segment(
    text: str,
    *,
    origins: Optional[Sequence[str]] = None,
    abbreviations: Optional[frozenset[str]] = None,
) -> list[SentenceSpan]:
    """Split text into sentence spans.

    A sentence ends at terminal punctuation (``.``, ``!``, ``?``, plus any
    closing quotes) followed by whitespace or end of text, except after a
    known abbreviation.  Trailing unterminated text forms a provisional
    final sentence.  When per-character origins are supplied, each span is
    tagged with the majority origin of its characters.
    """
    if abbreviations is None:
        abbreviations = _ABBREVIATIONS
    boundaries: list[int] = []
    for m in _TERMINATOR.finditer(text):
        end = m.end()
        if end < len(text) and not text[end].isspace():
            continue
        if m.group().startswith(".") and "!" not in m.group() and "?" not in m.group():
            before = _WORD_BEFORE.search(text, 0, m.start())
            if before and before.end() == m.start():
                word = before.group(1)
                if word.lower() in abbreviations:
                    continue
                # dotted abbreviation chains: "e.g.", "i.e.", "U.S."
                if (
                    len(word) == 1
                    and before.start() > 0
                    and text[before.start() - 1] == "."
                ):
                    continue
        boundaries.append(end)
    spans: list[SentenceSpan] = []
    pos = 0
    for b in boundaries + [len(text)]:
        chunk = text[pos:b]
        start = pos + (len(chunk) - len(chunk.lstrip()))
        stripped = chunk.strip()
        if stripped:
            spans.append(
                SentenceSpan(
                    index=len(spans),
                    char_range=(start, start + len(stripped)),
                    text=stripped,
                    ownership=_majority_origin(origins, start, start + len(stripped)),
                )
            )
        pos = b
    return spans


def _majority_origin(
    origins: Optional[Sequence[str]], start: int, end: int
) -> Optional[str]:
    if origins is None:
        return None
    counts: dict[str, int] = {}
    for o in origins[start:end]:
        counts[o] = counts.get(o, 0) + 1
    if not counts:
        return None
    return max(counts, key=lambda k: (counts[k], k))


_PUNCT_EDGE = re.compile(r"^\W+|\W+$")


def _tokens(text: str) -> list[str]:
    return [t for t in (_PUNCT_EDGE.sub("", w) for w in text.split()) if t]


def classify_edit(before: str, after: str, dictionary: Dictionary) -> str:
    """Classify a sentence change as ``spelling-correction`` or ``revision``.

    A spelling correction is exactly one token substitution where the
    original token is absent from the dictionary and its replacement is
    present.
    """
    a, b = _tokens(before), _tokens(after)
    if len(a) == len(b):
        diffs = [(x, y) for x, y in zip(a, b) if x != y]
        if len(diffs) == 1:
            orig, repl = diffs[0]
            if orig not in dictionary and repl in dictionary:
                return "spelling-correction"
    return "revision"


@dataclass(frozen=True)
class RevisionRecord:
    event_index: int
    kind: str  # revision | merger | removal | relocation | spelling-correction
    before: str
    after: str
    tie_broken: bool = False


@dataclass
class LedgerEntry:
    entry_id: int
    initial_text: str
    current_text: Optional[str]  # None == removed
    ownership: str
    created_at: int
    history: list[RevisionRecord] = field(default_factory=list)

    @property
    def removed(self) -> bool:
        return self.current_text is None


@dataclass
class SentenceLedger:
    entries: list[LedgerEntry] = field(default_factory=list)
    live_order: list[int] = field(default_factory=list)  # entry ids, doc order

    def entry(self, entry_id: int) -> LedgerEntry:
        return self.entries[entry_id]

    def live_entries(self) -> list[LedgerEntry]:
        return [self.entries[i] for i in self.live_order]

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "entry_id": e.entry_id,
                    "initial_text": e.initial_text,
                    "current_text": e.current_text,
                    "ownership": e.ownership,
                    "created_at": e.created_at,
                    "history": [
                        {
                            "event_index": r.event_index,
                            "kind": r.kind,
                            "before": r.before,
                            "after": r.after,
                            "tie_broken": r.tie_broken,
                        }
                        for r in e.history
                    ],
                }
                for e in self.entries
            ],
            "live_order": list(self.live_order),
        }


def detect_relocation(
    prev_live: Sequence[tuple[int, str]], cur_live: Sequence[tuple[int, str]]
) -> list[int]:
    """Entry ids live in both snapshots whose text is unchanged but whose
    live ordinal index differs."""
    prev_index = {eid: (i, text) for i, (eid, text) in enumerate(prev_live)}
    out = []
    for i, (eid, text) in enumerate(cur_live):
        if eid in prev_index:
            pi, ptext = prev_index[eid]
            if ptext == text and pi != i:
                out.append(eid)
    return out


@dataclass(frozen=True)
class EventEffect:
    """What one event did to the ledger (consumed by the coder)."""

    event_index: int
    touched_entry: Optional[int] = None  # entry containing the edit start
    created: tuple[int, ...] = ()
    removed: tuple[int, ...] = ()
    revised: tuple[tuple[int, str, str], ...] = ()  # (entry_id, before, after)
    relocated: tuple[int, ...] = ()


class SentenceTracker:
    """Stateful per-session tracker; feed events in replay order."""

    def __init__(
        self,
        *,
        dictionary: Optional[Dictionary] = None,
        abbreviations: Optional[frozenset[str]] = None,
        relocation_window: int = 20,
    ) -> None:
        self.dictionary = dictionary or _default_dictionary()
        self.abbreviations = abbreviations or _ABBREVIATIONS
        self.relocation_window = relocation_window
        self.ledger = SentenceLedger()
        # live spans: parallel to ledger.live_order, (start, end) in doc coords
        self._spans: list[tuple[int, int]] = []
        self._recently_removed: deque[tuple[int, str, int]] = deque()
        self._event_index = -1

    def start(self, prompt_text: str) -> None:
        origins = ["prompt"] * len(prompt_text)
        for span in segment(
            prompt_text, origins=origins, abbreviations=self.abbreviations
        ):
            self._new_entry(span.text, "prompt", span.char_range, created_at=-1)

    def _new_entry(
        self,
        text: str,
        ownership: str,
        char_range: tuple[int, int],
        created_at: int,
        position: Optional[int] = None,
    ) -> LedgerEntry:
        entry = LedgerEntry(
            entry_id=len(self.ledger.entries),
            initial_text=text,
            current_text=text,
            ownership=ownership,
            created_at=created_at,
        )
        self.ledger.entries.append(entry)
        if position is None:
            position = len(self.ledger.live_order)
        self.ledger.live_order.insert(position, entry.entry_id)
        self._spans.insert(position, char_range)
        return entry

    def step(self, event, state: DocumentState) -> EventEffect:
        """Update the ledger for one replayed event."""
        self._event_index = state.event_index
        if event.event_name not in ("text-insert", "text-delete"):
            return EventEffect(event_index=state.event_index)
        prev_live = [
            (eid, self.ledger.entries[eid].current_text or "")
            for eid in self.ledger.live_order
        ]
        offset = event.offset if event.offset is not None else 0
        touched = self._entry_at(offset)
        shifted = self._shift_spans(event)
        effect = self._reconcile(event, state, shifted, touched)
        cur_live = [
            (eid, self.ledger.entries[eid].current_text or "")
            for eid in self.ledger.live_order
        ]
        moved = detect_relocation(prev_live, cur_live)
        relocated = tuple(sorted(set(moved) | set(effect.relocated)))
        if relocated != effect.relocated:
            effect = EventEffect(
                event_index=effect.event_index,
                touched_entry=effect.touched_entry,
                created=effect.created,
                removed=effect.removed,
                revised=effect.revised,
                relocated=relocated,
            )
        return effect

    def _entry_at(self, offset: int) -> Optional[int]:
        for (start, end), eid in zip(self._spans, self.ledger.live_order):
            if start <= offset <= end:
                return eid
        return None

    def _shift_spans(self, event) -> list[tuple[int, int]]:
        o = event.offset if event.offset is not None else 0
        n = len(event.text or "")
        out = []
        if event.event_name == "text-insert":
            # an insert at a span's right edge does not extend it: appended
            # text belongs to a new sentence unless it lands strictly inside
            for start, end in self._spans:
                out.append(
                    (start + n if o < start else start, end + n if o < end else end)
                )
        else:
            cut_end = o + n

            def shift(p: int) -> int:
                return p - max(0, min(p, cut_end) - o)

            for start, end in self._spans:
                out.append((shift(start), shift(end)))
        return out

    def _reconcile(
        self,
        event,
        state: DocumentState,
        shifted: list[tuple[int, int]],
        touched: Optional[int],
    ) -> EventEffect:
        new_spans = segment(
            state.text, origins=state.origins, abbreviations=self.abbreviations
        )
        old_ids = list(self.ledger.live_order)
        # map each old entry to the new span with the largest overlap
        claims: dict[int, list[int]] = {j: [] for j in range(len(new_spans))}
        unmatched_old: list[int] = []
        for (start, end), eid in zip(shifted, old_ids):
            best_j, best_ov = -1, 0
            for j, span in enumerate(new_spans):
                s, e = span.char_range
                ov = min(end, e) - max(start, s)
                if ov > best_ov:
                    best_j, best_ov = j, ov
            if best_j >= 0:
                claims[best_j].append(eid)
            else:
                unmatched_old.append(eid)
        created: list[int] = []
        removed: list[int] = []
        revised: list[tuple[int, str, str]] = []
        relocated: list[int] = []
        new_order: list[int] = []
        new_ranges: list[tuple[int, int]] = []
        idx = self._event_index
        for eid in unmatched_old:
            self._remove_entry(eid, idx)
            removed.append(eid)
        for j, span in enumerate(new_spans):
            owners = claims[j]
            if not owners:
                eid, was_relocation = self._create_for_span(span, event, idx)
                created.append(eid)
                if was_relocation:
                    relocated.append(eid)
                new_order.append(eid)
            elif len(owners) == 1:
                eid = owners[0]
                entry = self.ledger.entries[eid]
                before = entry.current_text or ""
                if before != span.text:
                    kind = classify_edit(before, span.text, self.dictionary)
                    entry.history.append(
                        RevisionRecord(idx, kind, before, span.text)
                    )
                    entry.current_text = span.text
                    revised.append((eid, before, span.text))
                new_order.append(eid)
            else:
                eid = self._merge(owners, span.text, idx)
                for loser in owners:
                    if loser != eid:
                        removed.append(loser)
                revised.append(
                    (eid, self.ledger.entries[eid].history[-1].before, span.text)
                )
                new_order.append(eid)
            new_ranges.append(span.char_range)
        self.ledger.live_order = new_order
        self._spans = new_ranges
        self._expire_removed(idx)
        return EventEffect(
            event_index=idx,
            touched_entry=touched,
            created=tuple(created),
            removed=tuple(removed),
            revised=tuple(revised),
            relocated=tuple(relocated),
        )

    def _create_for_span(self, span: SentenceSpan, event, idx: int) -> tuple[int, bool]:
        # a reappearing recently-removed sentence is a relocation, not new text
        for rid, text, _ in self._recently_removed:
            if text == span.text:
                old = self.ledger.entries[rid]
                entry = LedgerEntry(
                    entry_id=len(self.ledger.entries),
                    initial_text=old.initial_text,
                    current_text=span.text,
                    ownership=old.ownership,
                    created_at=idx,
                    history=old.history
                    + [RevisionRecord(idx, "relocation", span.text, span.text)],
                )
                self.ledger.entries.append(entry)
                return entry.entry_id, True
        ownership = span.ownership or event.event_source
        entry = LedgerEntry(
            entry_id=len(self.ledger.entries),
            initial_text=span.text,
            current_text=span.text,
            ownership=ownership,
            created_at=idx,
        )
        self.ledger.entries.append(entry)
        return entry.entry_id, False

    def _merge(self, owners: list[int], merged_text: str, idx: int) -> int:
        corpus = [
            self.ledger.entries[eid].current_text or ""
            for eid in self.ledger.live_order
        ] + [merged_text]
        scored = []
        for eid in owners:
            cand = self.ledger.entries[eid].current_text or ""
            scored.append((lexical_cosine(merged_text, cand, corpus).value, -eid))
        best = max(scored)
        tie = sum(1 for s in scored if abs(s[0] - best[0]) < 1e-12) > 1
        winner = -max(s[1] for s in scored if abs(s[0] - best[0]) < 1e-12)
        for eid in owners:
            entry = self.ledger.entries[eid]
            before = entry.current_text or ""
            if eid == winner:
                entry.history.append(
                    RevisionRecord(idx, "merger", before, merged_text, tie_broken=tie)
                )
                entry.current_text = merged_text
            else:
                entry.history.append(RevisionRecord(idx, "merger", before, ""))
                entry.current_text = None
                self._recently_removed.append((eid, before, idx))
        return winner

    def _remove_entry(self, eid: int, idx: int) -> None:
        entry = self.ledger.entries[eid]
        before = entry.current_text or ""
        entry.history.append(RevisionRecord(idx, "removal", before, ""))
        entry.current_text = None
        self._recently_removed.append((eid, before, idx))

    def _expire_removed(self, idx: int) -> None:
        while (
            self._recently_removed
            and idx - self._recently_removed[0][2] > self.relocation_window
        ):
            self._recently_removed.popleft()

    def validate(self, final_text: str) -> None:
        live = [e.current_text for e in self.ledger.live_entries()]
        expected = [s.text for s in segment(final_text, abbreviations=self.abbreviations)]
        if live != expected:
            raise TrackingError(
                f"ledger live sentences {live!r} do not match final document "
                f"segmentation {expected!r}"
            )


def track(
    trace: SessionTrace,
    *,
    dictionary: Optional[Dictionary] = None,
    relocation_window: int = 20,
) -> SentenceLedger:
    """Track every sentence across the whole session and validate the result."""
    tracker = SentenceTracker(
        dictionary=dictionary, relocation_window=relocation_window
    )
    tracker.start(trace.prompt_text)
    for event, state in zip(trace.events, replay(trace)):
        tracker.step(event, state)
    tracker.validate(trace.final_text)
    return tracker.ledger


_ABBREVIATIONS = _load_wordset("abbreviations.txt")

_DICT: Optional[Dictionary] = None


def _default_dictionary() -> Dictionary:
    global _DICT
    if _DICT is None:
        _DICT = Dictionary()
    return _DICT
