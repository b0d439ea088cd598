"""Synthetic session generator with per-event ground-truth codes.

Emits sessions in the exact trace-ingest input format (line-delimited JSON
plus a metadata CSV).  Sentences come from a seeded template grammar over a
fixed vocabulary so lexical similarity behaves predictably, and every
emitted event carries a known intended code set for oracle-based testing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .coding import Code
from .trace import SessionMeta

# conventional low/high sampling temperatures per prompt kind
_TEMPERATURES = {
    "argumentative": (0.2, 0.9),
    "creative": (0.3, 0.75),
}

ACTIONS = (
    "compose",
    "seek",
    "accept",
    "dismiss",
    "hover",
    "revise_own",
    "revise_sugg",
    "relocate",
)

_SUBJECTS = [
    "the writer", "the reader", "the editor", "a student", "the author",
    "a teacher", "the critic", "a friend", "the narrator", "the speaker",
]
_VERBS = [
    "explores", "describes", "questions", "supports", "revises",
    "considers", "explains", "develops", "compares", "imagines",
]
_OBJECTS = [
    "the idea", "a new argument", "the story", "an old theme", "the claim",
    "a strange plot", "the evidence", "a bold view", "the scene", "a memory",
]
_EXTRAS = [
    "with care", "in detail", "over time", "at length", "without fear",
    "for clarity", "in context", "by example", "with purpose", "at once",
]


@dataclass(frozen=True)
class BehaviorProfile:
    name: str
    actions: dict[str, float]  # probabilities over ACTIONS, sum to 1
    modification_depth: float  # P(high modification) on suggestion revision
    mean_events: float = 1862.0
    spread_events: float = 60.0
    temperature: float = 0.3
    prompt_kind: str = "creative"
    vocabulary_seed: int = 0

    def __post_init__(self) -> None:
        total = sum(self.actions.get(a, 0.0) for a in ACTIONS)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"profile {self.name}: action probabilities sum {total}")

    @classmethod
    def from_file(cls, path: str | Path) -> "BehaviorProfile":
        data = json.loads(Path(path).read_text("utf-8"))
        return cls(**data)

    @classmethod
    def bundled(cls, name: str) -> "BehaviorProfile":
        text = (
            resources.files("cowriting.data")
            .joinpath(f"profiles/{name}.json")
            .read_text("utf-8")
        )
        return cls(**json.loads(text))


@dataclass
class GroundTruth:
    """Intended per-event codes, final text, and sentence fates."""

    codes: list[set[Code]] = field(default_factory=list)
    final_text: str = ""
    sentence_fates: list[dict] = field(default_factory=list)


class _Doc:
    """Mirror of the replay document, tracking sentence ownership."""

    def __init__(self, prompt: str) -> None:
        self.text = prompt
        self.origins = ["prompt"] * len(prompt)

    def insert(self, offset: int, s: str, source: str) -> None:
        self.text = self.text[:offset] + s + self.text[offset:]
        self.origins[offset:offset] = [source] * len(s)

    def delete(self, offset: int, length: int) -> None:
        self.text = self.text[:offset] + self.text[offset + length :]
        del self.origins[offset : offset + length]


def _sentence(rng: np.random.Generator) -> str:
    parts = [
        rng.choice(_SUBJECTS),
        rng.choice(_VERBS),
        rng.choice(_OBJECTS),
        rng.choice(_EXTRAS),
    ]
    s = " ".join(str(p) for p in parts) + "."
    return s[0].upper() + s[1:]


@dataclass
class _Sentence:
    start: int  # char offset of first character
    text: str
    source: str  # prompt | user | api
    revised: bool = False


class _SessionBuilder:
    def __init__(self, profile: BehaviorProfile, seed: int, session_id: str):
        self.rng = np.random.default_rng(seed)
        self.profile = profile
        self.session_id = session_id
        self.records: list[dict] = []
        self.truth = GroundTruth()
        self.ts = 0.0
        prompt = " ".join(_sentence(self.rng) for _ in range(2))
        self.doc = _Doc(prompt)
        self.sentences: list[_Sentence] = []
        pos = 0
        for part in prompt.split(". "):
            text = part if part.endswith(".") else part + "."
            self.sentences.append(_Sentence(start=pos, text=text, source="prompt"))
            pos += len(text) + 1
        self.records.append(
            {
                "eventName": "system-initialize",
                "eventSource": "api",
                "eventTimestamp": 0,
                "currentDoc": prompt,
            }
        )
        self.truth.codes.append(set())
        self.pending_suggestion: Optional[str] = None

    def _emit(self, record: dict, codes: set[Code]) -> None:
        self.ts += float(self.rng.integers(80, 400))
        record["eventTimestamp"] = self.ts
        self.records.append(record)
        self.truth.codes.append(codes)

    def _end_offset(self) -> int:
        return len(self.doc.text)

    def _append_sentence(self, text: str, source: str, codes: set[Code]) -> None:
        insert = " " + text if self.doc.text and not self.doc.text.endswith(" ") else text
        off = self._end_offset()
        self._emit(
            {
                "eventName": "text-insert",
                "eventSource": source,
                "textOffset": off,
                "textDelta": insert,
            },
            codes,
        )
        start = off + (1 if insert.startswith(" ") else 0)
        self.doc.insert(off, insert, source)
        self.sentences.append(_Sentence(start=start, text=text, source=source))

    def _live_index(self, sent: _Sentence) -> int:
        return self.sentences.index(sent)

    def _shift_after(self, from_start: int, delta: int) -> None:
        for s in self.sentences:
            if s.start > from_start:
                s.start += delta

    def act_compose(self) -> None:
        self._append_sentence(_sentence(self.rng), "user", {Code.COMPOSE})

    def act_seek(self) -> None:
        suggs = [_sentence(self.rng) for _ in range(3)]
        self.pending_suggestion = str(self.rng.choice(suggs))
        self._emit(
            {
                "eventName": "suggestion-get",
                "eventSource": "user",
                "currentSuggestions": suggs,
            },
            {Code.SEEK_SUGG},
        )

    def act_hover(self) -> None:
        self._emit(
            {"eventName": "suggestion-hover", "eventSource": "user"},
            {Code.HOVER_SUGG},
        )

    def act_dismiss(self) -> None:
        self._emit(
            {"eventName": "suggestion-close", "eventSource": "user"},
            {Code.DISMISS_SUGG},
        )
        self.pending_suggestion = None

    def act_accept(self) -> None:
        if self.pending_suggestion is None:
            self.act_seek()
        text = self.pending_suggestion or _sentence(self.rng)
        self.pending_suggestion = None
        self._emit(
            {"eventName": "suggestion-select", "eventSource": "user"},
            {Code.ACCEPT_SUGG},
        )
        self._append_sentence(text, "api", {Code.COMPOSE})

    def _revise(self, source_filter: str, code: Code) -> None:
        candidates = [
            s
            for s in self.sentences
            if s.source == source_filter and not s.revised and len(s.text) > 8
        ]
        if not candidates:
            self.act_compose()
            return
        sent = candidates[int(self.rng.integers(0, len(candidates)))]
        sent.revised = True
        high = self.rng.random() < self.profile.modification_depth
        old_body = sent.text[:-1]  # keep the terminator
        words = old_body.split()
        if high:
            # replace every content word: similarity clearly below threshold
            new_words = _sentence(self.rng)[:-1].split()
            new_body = " ".join(new_words)
        else:
            # gentle tweak: add one word, keeping all original tokens so
            # lexical similarity stays well above the threshold
            extra = str(self.rng.choice(_EXTRAS)).split()[-1]
            new_body = old_body + " " + extra
        if new_body == old_body:
            new_body = old_body + " indeed"
        off = sent.start
        self._emit(
            {
                "eventName": "text-delete",
                "eventSource": "user",
                "textOffset": off,
                "textDelta": old_body,
            },
            {code},
        )
        self.doc.delete(off, len(old_body))
        self._shift_after(sent.start, -len(old_body))
        mod = Code.HIGH_MOD if high else Code.LOW_MOD
        self._emit(
            {
                "eventName": "text-insert",
                "eventSource": "user",
                "textOffset": off,
                "textDelta": new_body,
            },
            {code, mod},
        )
        self.doc.insert(off, new_body, "user")
        self._shift_after(sent.start - 1, len(new_body))
        sent.start = off
        sent.text = new_body + "."
        # move the cursor out of the sentence to close the revision episode
        self._emit(
            {
                "eventName": "cursor-forward",
                "eventSource": "user",
                "cursorRange": [len(self.doc.text), len(self.doc.text)],
            },
            {Code.CURSOR_FWD},
        )

    def act_revise_own(self) -> None:
        self._revise("user", Code.REVISE_USER)

    def act_revise_sugg(self) -> None:
        self._revise("api", Code.REVISE_SUGG)

    def act_relocate(self) -> None:
        movable = [s for s in self.sentences[:-1] if len(self.sentences) > 2]
        if not movable:
            self.act_compose()
            return
        sent = movable[int(self.rng.integers(0, len(movable)))]
        cut = sent.text
        off = sent.start
        # remove the sentence plus its trailing space when present
        extra = 1 if self.doc.text[off + len(cut) : off + len(cut) + 1] == " " else 0
        self._emit(
            {
                "eventName": "text-delete",
                "eventSource": "user",
                "textOffset": off,
                "textDelta": self.doc.text[off : off + len(cut) + extra],
            },
            {Code.RELOCATE},
        )
        self.doc.delete(off, len(cut) + extra)
        self.sentences.remove(sent)
        self._shift_after(off - 1, -(len(cut) + extra))
        insert = (" " if self.doc.text else "") + cut
        end = self._end_offset()
        self._emit(
            {
                "eventName": "text-insert",
                "eventSource": "user",
                "textOffset": end,
                "textDelta": insert,
            },
            {Code.RELOCATE},
        )
        start = end + (1 if insert.startswith(" ") else 0)
        self.doc.insert(end, insert, "user")
        sent.start = start
        self.sentences.append(sent)

    def build(self) -> tuple[list[dict], GroundTruth]:
        target = max(
            10,
            int(
                self.rng.normal(self.profile.mean_events, self.profile.spread_events)
            ),
        )
        names = list(ACTIONS)
        probs = np.array([self.profile.actions.get(a, 0.0) for a in names])
        probs = probs / probs.sum()
        dispatch = {
            "compose": self.act_compose,
            "seek": self.act_seek,
            "accept": self.act_accept,
            "dismiss": self.act_dismiss,
            "hover": self.act_hover,
            "revise_own": self.act_revise_own,
            "revise_sugg": self.act_revise_sugg,
            "relocate": self.act_relocate,
        }
        while len(self.records) < target:
            action = str(self.rng.choice(names, p=probs))
            dispatch[action]()
        self.records.append(
            {
                "eventName": "system-finalize",
                "eventSource": "api",
                "eventTimestamp": self.ts + 100,
                "currentDoc": self.doc.text,
            }
        )
        self.truth.codes.append(set())
        self.truth.final_text = self.doc.text
        self.truth.sentence_fates = [
            {"text": s.text, "source": s.source, "revised": s.revised}
            for s in self.sentences
        ]
        # reflect ground truth: revisions once the doc reached 90% final length
        self._mark_reflect()
        return self.records, self.truth

    def _mark_reflect(self) -> None:
        final_len = len(self.truth.final_text)
        length = 0
        reached = final_len == 0
        for rec, codes in zip(self.records, self.truth.codes):
            name = rec.get("eventName")
            if name == "system-initialize":
                length = len(rec.get("currentDoc", ""))
            elif name == "text-insert":
                length += len(rec.get("textDelta", ""))
            elif name == "text-delete":
                length -= len(rec.get("textDelta", ""))
            if final_len and length >= 0.9 * final_len:
                reached = True
            if reached and codes & {Code.REVISE_USER, Code.REVISE_SUGG}:
                codes.add(Code.REFLECT)


def generate_session(
    profile: BehaviorProfile, seed: int, *, session_id: Optional[str] = None
) -> tuple[list[dict], GroundTruth, SessionMeta]:
    """Generate one session: raw records, ground truth, and metadata.

    Deterministic per (profile, seed).
    """
    sid = session_id or f"{profile.name}-{seed:05d}"
    builder = _SessionBuilder(profile, seed, sid)
    records, truth = builder.build()
    user_chars = sum(1 for o in builder.doc.origins if o == "user")
    api_chars = sum(1 for o in builder.doc.origins if o == "api")
    total = user_chars + api_chars
    ownership = 100.0 * user_chars / total if total else 100.0
    meta = SessionMeta(
        session_id=sid,
        author_id="",  # assigned by generate_corpus
        prompt_kind=profile.prompt_kind,
        prompt_id=f"prompt-{seed % 7}",
        temperature=profile.temperature,
        ownership_pct=round(ownership, 4),
    )
    return records, truth, meta


def generate_corpus(
    profiles: list[BehaviorProfile],
    sessions_per_profile: int,
    seed: int,
    out_dir: str | Path,
    *,
    authors_per_profile: int = 15,
) -> Path:
    """Write trace files plus metadata.csv in the trace-ingest input format.

    Ground truth is written alongside as ``<session>.truth.json``.  Returns
    the metadata path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    ss = np.random.SeedSequence(seed)
    child_seeds = ss.generate_state(len(profiles) * sessions_per_profile)
    k = 0
    for p_i, profile in enumerate(profiles):
        for s_i in range(sessions_per_profile):
            sid = f"{profile.name}-{s_i:04d}"
            records, truth, meta = generate_session(
                profile, int(child_seeds[k]), session_id=sid
            )
            k += 1
            author = f"{profile.name}-author-{s_i % authors_per_profile:03d}"
            # cycle sessions through prompt kind x temperature so the three
            # comparison variables (ownership follows behavior) stay
            # unconfounded in the corpus metadata
            kind = ("creative", "argumentative")[(s_i // 2) % 2]
            temps = _TEMPERATURES[kind]
            meta = SessionMeta(
                session_id=meta.session_id,
                author_id=author,
                prompt_kind=kind,
                prompt_id=meta.prompt_id,
                temperature=temps[s_i % 2],
                ownership_pct=meta.ownership_pct,
            )
            with open(out / f"{sid}.jsonl", "w", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
            with open(out / f"{sid}.truth.json", "w", encoding="utf-8") as fh:
                json.dump(
                    {
                        "codes": [sorted(c.value for c in cs) for cs in truth.codes],
                        "final_text": truth.final_text,
                        "sentence_fates": truth.sentence_fates,
                    },
                    fh,
                    sort_keys=True,
                )
            rows.append(meta)
    meta_path = out / "metadata.csv"
    with open(meta_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["session_id", "author_id", "prompt_kind", "prompt_id", "temperature", "ownership_pct"]
        )
        for m in rows:
            writer.writerow(
                [m.session_id, m.author_id, m.prompt_kind, m.prompt_id, m.temperature, m.ownership_pct]
            )
    return meta_path
