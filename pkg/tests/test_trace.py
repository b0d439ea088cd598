import json

import pytest
from hypothesis import given, strategies as st

from cowriting.trace import (
    Exclusion,
    ReplayError,
    SessionMeta,
    SessionTrace,
    TraceError,
    CanonicalEvent,
    final_state,
    parse_session,
    preprocess,
    replay,
)


def meta(sid="s1", author="a1", owner=50.0):
    return SessionMeta(
        session_id=sid,
        author_id=author,
        prompt_kind="creative",
        prompt_id="p1",
        temperature=0.3,
        ownership_pct=owner,
    )


def lines(*records):
    return [json.dumps(r) for r in records]


class TestParse:
    def test_suggestion_get_name_preserved(self):
        trace = parse_session(
            lines({"eventName": "suggestion-get", "eventSource": "user",
                   "eventTimestamp": 1}),
            meta(),
        )
        assert trace.events[0].event_name == "suggestion-get"

    def test_empty_stream_is_identity(self):
        trace = parse_session([], meta())
        assert trace.events == ()
        assert trace.final_text == trace.prompt_text == ""

    def test_single_insert(self):
        trace = parse_session(
            lines({"eventName": "text-insert", "eventSource": "user",
                   "eventTimestamp": 1, "textOffset": 0, "textDelta": "Hi"}),
            meta(),
        )
        assert trace.final_text == "Hi"

    def test_unknown_event_name_maps_to_other(self):
        trace = parse_session(
            lines({"eventName": "window-focus", "eventSource": "user",
                   "eventTimestamp": 1}),
            meta(),
        )
        assert trace.events[0].event_name == "other"

    def test_malformed_line_reported_with_line_number(self):
        trace = parse_session(
            lines(*[{"eventName": "other", "eventTimestamp": i} for i in range(30)])
            + ["{not json"],
            meta(),
        )
        assert len(trace.parse_issues) == 1
        assert "line 31" in trace.parse_issues[0]

    def test_too_many_malformed_lines_rejects_session(self):
        with pytest.raises(TraceError):
            parse_session(["{bad", "{worse"], meta())

    def test_event_count_conservation(self):
        good = [{"eventName": "other", "eventTimestamp": i} for i in range(40)]
        raw = lines(*good) + ["oops", "{"]
        trace = parse_session(raw, meta())
        assert len(trace.events) == len(raw) - len(trace.parse_issues)

    def test_logged_final_mismatch_raises(self):
        with pytest.raises(TraceError):
            parse_session(
                lines(
                    {"eventName": "text-insert", "eventSource": "user",
                     "eventTimestamp": 1, "textOffset": 0, "textDelta": "Hi"},
                    {"eventName": "system-finalize", "eventTimestamp": 2,
                     "currentDoc": "Bye"},
                ),
                meta(),
            )


def ev(name, ts=0, **kw):
    return CanonicalEvent(event_name=name, event_source=kw.pop("source", "user"),
                          timestamp=ts, **kw)


def trace_of(events, prompt=""):
    final = prompt
    t = SessionTrace(meta=meta(), events=tuple(events), prompt_text=prompt,
                     final_text=final)
    states = list(replay(t))
    final = states[-1].text if states else prompt
    return SessionTrace(meta=meta(), events=tuple(events), prompt_text=prompt,
                        final_text=final)


class TestReplay:
    def test_insert_then_delete_inverse(self):
        t = trace_of([
            ev("text-insert", 1, offset=0, text="ab"),
            ev("text-delete", 2, offset=0, text="ab"),
        ])
        assert t.final_text == ""

    def test_prepend_ordering(self):
        t = trace_of([
            ev("text-insert", 1, offset=0, text="b"),
            ev("text-insert", 2, offset=0, text="a"),
        ])
        assert t.final_text == "ab"

    def test_out_of_bounds_names_event_index(self):
        t = SessionTrace(meta=meta(), events=(
            ev("text-insert", 1, offset=5, text="x"),
        ), prompt_text="", final_text="")
        with pytest.raises(ReplayError, match="event 0"):
            list(replay(t))

    def test_origins_track_sources(self):
        t = trace_of([
            ev("text-insert", 1, offset=3, text="XY", source="api"),
        ], prompt="abc")
        state = final_state(t)
        assert state.text == "abcXY"
        assert state.origins == ("prompt",) * 3 + ("api",) * 2

    def test_unicode_offsets_are_scalar_indices(self):
        t = trace_of([
            ev("text-insert", 1, offset=2, text="x"),
        ], prompt="\U0001f600éa")
        assert t.final_text == "\U0001f600éxa"

    @given(st.lists(st.text(alphabet="ab ", min_size=1, max_size=4), max_size=20))
    def test_replay_deterministic(self, texts):
        events = []
        doc_len = 0
        for i, s in enumerate(texts):
            events.append(ev("text-insert", i, offset=doc_len, text=s))
            doc_len += len(s)
        t1 = trace_of(events)
        t2 = trace_of(events)
        assert t1.final_text == t2.final_text
        assert len(t1.final_text) == doc_len


class TestPreprocess:
    def test_prompt_fully_removed_excluded(self):
        t = trace_of([
            ev("text-delete", 1, offset=0, text="Old prompt."),
            ev("text-insert", 2, offset=0, text="Fresh start."),
        ], prompt="Old prompt.")
        result = preprocess([t])
        assert result.kept == ()
        assert result.excluded[0].reason == "prompt-removed"

    def test_missing_author_excluded(self):
        t = SessionTrace(meta=meta(author=""), events=(), prompt_text="p",
                         final_text="p")
        result = preprocess([t])
        assert result.excluded[0].reason == "missing-author"

    def test_single_valid_session_kept(self):
        t = trace_of([ev("text-insert", 1, offset=11, text=" More.")],
                     prompt="A sentence.")
        result = preprocess([t])
        assert len(result.kept) == 1 and not result.excluded

    def test_median_split_labels(self):
        ts = []
        for i, pct in enumerate([60.0, 76.0, 90.0]):
            t = trace_of([], prompt="Keep.")
            ts.append(SessionTrace(meta=meta(sid=f"s{i}", owner=pct),
                                   events=(), prompt_text="Keep.",
                                   final_text="Keep."))
        result = preprocess(ts)
        assert result.ownership_median == 76.0
        assert result.ownership_labels["s2"] == "user"
        assert result.ownership_labels["s0"] == "gai"
        assert result.ownership_labels["s1"] == "gai"  # boundary is not above

    def test_pinned_median_override(self):
        t = SessionTrace(meta=meta(owner=80.0), events=(), prompt_text="P.",
                         final_text="P.")
        result = preprocess([t], pin_ownership_median=76.0)
        assert result.ownership_median == 76.0
        assert result.ownership_labels["s1"] == "user"

    def test_relocated_prompt_not_counted_removed(self):
        # cut the prompt sentence and paste it verbatim at the end
        t = trace_of([
            ev("text-insert", 1, offset=7, text=" Tail."),
            ev("text-delete", 2, offset=0, text="Prompt. "),
            ev("text-insert", 3, offset=5, text=" Prompt."),
        ], prompt="Prompt.")
        result = preprocess([t])
        assert len(result.kept) == 1
