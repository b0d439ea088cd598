"""Synthetic-trace generator tests."""

import json

import numpy as np
import pytest

from cowriting.synth import ACTIONS, BehaviorProfile, generate_corpus, generate_session
from cowriting.trace import load_corpus, parse_session, read_metadata


def profile(mean_events=40.0, **overrides):
    actions = {
        "compose": 0.30,
        "seek": 0.20,
        "accept": 0.20,
        "dismiss": 0.05,
        "hover": 0.05,
        "revise_own": 0.08,
        "revise_sugg": 0.10,
        "relocate": 0.02,
    }
    actions.update(overrides.pop("actions", {}))
    return BehaviorProfile(
        name="t",
        actions=actions,
        modification_depth=0.3,
        mean_events=mean_events,
        spread_events=5.0,
        **overrides,
    )


class TestProfile:
    def test_probabilities_must_sum_to_one(self):
        bad = {a: 0.0 for a in ACTIONS}
        bad["compose"] = 0.5
        with pytest.raises(ValueError):
            BehaviorProfile(name="bad", actions=bad, modification_depth=0.1)

    def test_bundled_profiles_load(self):
        telling = BehaviorProfile.bundled("telling")
        transforming = BehaviorProfile.bundled("transforming")
        assert telling.actions["accept"] == 0.35
        assert telling.modification_depth == 0.05
        assert transforming.actions["revise_sugg"] == 0.30
        assert transforming.modification_depth == 0.7

    def test_default_session_length(self):
        actions = {a: 0.0 for a in ACTIONS}
        actions["compose"] = 1.0
        p = BehaviorProfile(name="d", actions=actions, modification_depth=0.0)
        assert p.mean_events == 1862.0


class TestGenerateSession:
    def test_deterministic(self):
        p = profile()
        r1, t1, m1 = generate_session(p, seed=42)
        r2, t2, m2 = generate_session(p, seed=42)
        assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)
        assert t1.final_text == t2.final_text
        assert t1.codes == t2.codes
        assert m1 == m2

    def test_seed_changes_output(self):
        p = profile()
        r1, _, _ = generate_session(p, seed=1)
        r2, _, _ = generate_session(p, seed=2)
        assert json.dumps(r1) != json.dumps(r2)

    def test_records_replay_cleanly(self):
        p = profile()
        for seed in range(4):
            records, truth, meta = generate_session(p, seed=seed)
            trace = parse_session([json.dumps(r) for r in records], meta)
            assert trace.final_text == truth.final_text
            assert len(trace.events) == len(truth.codes)

    def test_compose_only_profile(self):
        actions = {a: 0.0 for a in ACTIONS}
        actions["compose"] = 1.0
        p = BehaviorProfile(
            name="c", actions=actions, modification_depth=0.0,
            mean_events=30.0, spread_events=3.0,
        )
        records, truth, _ = generate_session(p, seed=0)
        names = {r["eventName"] for r in records}
        assert "suggestion-get" not in names
        assert "suggestion-select" not in names
        assert any("compose" in c for cs in truth.codes for c in {x.value for x in cs})

    def test_session_length_tracks_mean(self):
        p = profile(mean_events=80.0)
        lengths = [
            len(generate_session(p, seed=s)[0]) for s in range(100)
        ]
        assert abs(np.mean(lengths) - 80.0) / 80.0 < 0.05

    def test_ownership_pct_consistent_with_replay(self):
        from cowriting.trace import replay, SessionTrace

        p = profile()
        records, _, meta = generate_session(p, seed=9)
        trace = parse_session([json.dumps(r) for r in records], meta)
        *_, last = replay(trace)
        user = sum(1 for o in last.origins if o == "user")
        api = sum(1 for o in last.origins if o == "api")
        assert meta.ownership_pct == pytest.approx(
            100.0 * user / (user + api), abs=1e-3
        )


class TestGenerateCorpus:
    def test_file_layout(self, tmp_path):
        profiles = [
            BehaviorProfile.bundled("telling"),
            BehaviorProfile.bundled("transforming"),
        ]
        meta_path = generate_corpus(profiles, 5, seed=0, out_dir=tmp_path)
        assert meta_path.name == "metadata.csv"
        traces = sorted(tmp_path.glob("*.jsonl"))
        truths = sorted(tmp_path.glob("*.truth.json"))
        assert len(traces) == 10 and len(truths) == 10
        rows = read_metadata(meta_path)
        assert len(rows) == 10

    def test_corpus_loads_and_replays(self, tmp_path):
        profiles = [BehaviorProfile.bundled("telling")]
        meta_path = generate_corpus(profiles, 3, seed=1, out_dir=tmp_path)
        sessions, exclusions = load_corpus(tmp_path, meta_path)
        assert len(sessions) == 3 and not exclusions
        for trace in sessions:
            truth = json.loads(
                (tmp_path / f"{trace.meta.session_id}.truth.json").read_text()
            )
            assert trace.final_text == truth["final_text"]

    def test_deterministic_bytes(self, tmp_path):
        profiles = [BehaviorProfile.bundled("telling")]
        a, b = tmp_path / "a", tmp_path / "b"
        generate_corpus(profiles, 2, seed=7, out_dir=a)
        generate_corpus(profiles, 2, seed=7, out_dir=b)
        for fa in sorted(a.iterdir()):
            assert fa.read_bytes() == (b / fa.name).read_bytes()

    def test_authors_cycle(self, tmp_path):
        profiles = [BehaviorProfile.bundled("telling")]
        meta_path = generate_corpus(
            profiles, 6, seed=2, out_dir=tmp_path, authors_per_profile=3
        )
        rows = read_metadata(meta_path)
        authors = {m.author_id for m in rows.values()}
        assert len(authors) == 3
