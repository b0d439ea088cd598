"""Command-line pipeline: ingest -> code -> ena -> stats -> report.

Each stage reads and writes documented file artifacts in the output
directory, so stages can be rerun and inspected independently.  Exit codes:
0 ok, 2 usage, 3 data validation, 4 numerical.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import coding, ena, figures, stats, synth, trace
from .sentences import TrackingError
from .similarity import (
    DEFAULT_MODIFICATION_THRESHOLD,
    FallbackProvider,
    LexicalProvider,
    ProviderError,
    RemoteProvider,
)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

ENDPOINT_ENV = "COWRITING_EMBED_ENDPOINT"


def _fail(code: int, kind: str, message: str) -> None:
    click.echo(json.dumps({"error": kind, "message": message}), err=True)
    sys.exit(code)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        _fail(EXIT_USAGE, "missing-input", f"{what} not found: {path}")
    return path


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


@click.group()
def main() -> None:
    """Analytics for human-AI co-writing trace logs."""


@main.command("synth")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--profiles", default="telling,transforming", show_default=True,
              help="comma-separated bundled profile names or JSON file paths")
@click.option("--sessions", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_synth(out: Path, profiles: str, sessions: int, seed: int) -> None:
    """Generate a synthetic corpus in the ingest input format."""
    profs = []
    for name in profiles.split(","):
        name = name.strip()
        if name.endswith(".json"):
            profs.append(synth.BehaviorProfile.from_file(name))
        else:
            profs.append(synth.BehaviorProfile.bundled(name))
    meta_path = synth.generate_corpus(profs, sessions, seed, out)
    click.echo(f"wrote {len(profs) * sessions} sessions, metadata at {meta_path}")


@main.command("ingest")
@click.option("--input", "input_dir", required=True, type=click.Path(path_type=Path))
@click.option("--meta", required=True, type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--pin-ownership-median", type=float, default=None,
              help="fixed ownership split boundary instead of the corpus median")
def cmd_ingest(input_dir: Path, meta: Path, out: Path,
               pin_ownership_median: float | None) -> None:
    """Parse, replay-validate, and preprocess a corpus of session logs."""
    _require(input_dir, "trace directory")
    _require(meta, "metadata table")
    out.mkdir(parents=True, exist_ok=True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            traces, failures = trace.load_corpus(input_dir, meta)
            result = trace.preprocess(traces, pin_ownership_median=pin_ownership_median)
    except trace.TraceError as exc:
        _fail(EXIT_DATA, "trace-error", str(exc))
    excluded = [
        {"session_id": e.session_id, "reason": e.reason}
        for e in list(failures) + list(result.excluded)
    ]
    _write_json(out / "exclusions.json", {
        "excluded": excluded,
        "kept": len(result.kept),
        "ownership_median": result.ownership_median,
    })
    sessions = [
        {
            "session_id": t.meta.session_id,
            "author_id": t.meta.author_id,
            "prompt_kind": t.meta.prompt_kind,
            "prompt_id": t.meta.prompt_id,
            "temperature": t.meta.temperature,
            "ownership_pct": t.meta.ownership_pct,
            "ownership_label": result.ownership_labels[t.meta.session_id],
            "trace_file": str(Path(input_dir) / f"{t.meta.session_id}.jsonl"),
        }
        for t in result.kept
    ]
    _write_json(out / "sessions.json", sessions)
    rows = []
    for t in result.kept:
        for i, ev in enumerate(t.events):
            rows.append({
                "session_id": t.meta.session_id,
                "event_index": i,
                "event_name": ev.event_name,
                "event_source": ev.event_source,
                "timestamp": ev.timestamp,
                "offset": "" if ev.offset is None else ev.offset,
                "text": "" if ev.text is None else ev.text,
                "cursor_start": "" if ev.cursor_range is None else ev.cursor_range[0],
                "cursor_end": "" if ev.cursor_range is None else ev.cursor_range[1],
                "n_suggestions": 0 if ev.suggestions is None else len(ev.suggestions),
            })
    _write_csv(out / "events.csv", rows, list(rows[0].keys()) if rows else
               ["session_id", "event_index", "event_name", "event_source",
                "timestamp", "offset", "text", "cursor_start", "cursor_end",
                "n_suggestions"])
    click.echo(f"kept {len(result.kept)} sessions, excluded {len(excluded)}")


def _load_sessions(out: Path) -> list[dict]:
    path = _require(out / "sessions.json", "ingest artifact sessions.json")
    return json.loads(path.read_text("utf-8"))


def _reparse(entry: dict) -> trace.SessionTrace:
    meta = trace.SessionMeta(
        session_id=entry["session_id"],
        author_id=entry["author_id"],
        prompt_kind=entry["prompt_kind"],
        prompt_id=entry["prompt_id"],
        temperature=entry["temperature"],
        ownership_pct=entry["ownership_pct"],
    )
    with open(entry["trace_file"], encoding="utf-8") as fh:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return trace.parse_session(fh, meta)


def _code_one(args) -> tuple[str, list[dict], dict, list]:
    entry, mod_threshold, reflect_threshold, provider_spec = args
    t = _reparse(entry)
    provider = _make_provider(provider_spec, t)
    report = coding.CodingReport()
    coded, ledger = coding.code_session(
        t,
        provider=provider,
        mod_threshold=mod_threshold,
        reflect_threshold=reflect_threshold,
        report=report,
    )
    return (
        entry["session_id"],
        coding.code_table(coded),
        ledger.to_dict(),
        report.unresolved,
    )


def _make_provider(spec: dict, t: trace.SessionTrace):
    if spec["provider"] == "lexical":
        return None  # code_session builds the per-session lexical provider
    remote = RemoteProvider(spec["endpoint"], timeout=spec["timeout"])
    if spec["fallback"]:
        from .sentences import segment

        corpus = [s.text for s in segment(t.final_text)] or [""]
        return FallbackProvider(remote, LexicalProvider(corpus), allow_fallback=True)
    return remote


@main.command("code")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--provider", type=click.Choice(["lexical", "remote"]),
              default="lexical", show_default=True)
@click.option("--endpoint", default=None, help="embedding service URL")
@click.option("--fallback/--no-fallback", default=False,
              help="fall back to the lexical provider on remote failure")
@click.option("--timeout", default=10.0, show_default=True)
@click.option("--mod-threshold", default=DEFAULT_MODIFICATION_THRESHOLD,
              show_default=True)
@click.option("--reflect-threshold", default=0.9, show_default=True)
@click.option("--jobs", default=1, show_default=True)
def cmd_code(out: Path, provider: str, endpoint: str | None, fallback: bool,
             timeout: float, mod_threshold: float, reflect_threshold: float,
             jobs: int) -> None:
    """Assign the 14 behavioral codes to every event of every kept session."""
    if not 0 < mod_threshold < 1 or not 0 < reflect_threshold < 1:
        _fail(EXIT_USAGE, "bad-threshold", "thresholds must lie in (0, 1)")
    sessions = _load_sessions(out)
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if provider == "remote" and not endpoint:
        _fail(EXIT_USAGE, "missing-endpoint",
              f"remote provider needs --endpoint or ${ENDPOINT_ENV}")
    spec = {"provider": provider, "endpoint": endpoint, "fallback": fallback,
            "timeout": timeout}
    tasks = [(s, mod_threshold, reflect_threshold, spec) for s in sessions]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_code_one, tasks))
        else:
            results = [_code_one(t) for t in tasks]
    except TrackingError as exc:
        _fail(EXIT_DATA, "tracking-error", str(exc))
    except ProviderError as exc:
        _fail(EXIT_DATA, "provider-error", str(exc))
    rows: list[dict] = []
    unresolved = {}
    ledger_dir = out / "ledgers"
    ledger_dir.mkdir(parents=True, exist_ok=True)
    for sid, table, ledger, issues in results:
        rows.extend(table)
        _write_json(ledger_dir / f"{sid}.json", ledger)
        if issues:
            unresolved[sid] = issues
    columns = ["session_id", "author_id", "event_index", "sentence_id"] + [
        c.value for c in coding.CODES
    ]
    _write_csv(out / "coded.csv", rows, columns)
    _write_json(out / "coding_report.json", {"unresolved": unresolved})
    click.echo(f"coded {len(rows)} events across {len(results)} sessions")


def _read_coded(out: Path) -> list[coding.CodedEvent]:
    path = _require(out / "coded.csv", "coding artifact coded.csv")
    events: list[coding.CodedEvent] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            codes = frozenset(c for c in coding.CODES if row[c.value] == "1")
            events.append(coding.CodedEvent(
                session_id=row["session_id"],
                author_id=row["author_id"],
                event_index=int(row["event_index"]),
                sentence_id=None if row["sentence_id"] == "" else int(row["sentence_id"]),
                codes=codes,
            ))
    return events


@main.command("ena")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--dims", default=2, show_default=True)
def cmd_ena(out: Path, dims: int) -> None:
    """Accumulate networks, embed them, and co-register node positions."""
    coded = _read_coded(out)
    if not coded:
        _fail(EXIT_USAGE, "empty-coded-table", "coded.csv contains no events")
    try:
        vectors = ena.accumulate(coded)
        model = ena.position_nodes(ena.project(vectors, dims=dims))
    except ena.EnaError as exc:
        _fail(EXIT_NUMERICAL, "ena-error", str(exc))
    _write_json(out / "ena_model.json", model.to_dict())
    pairs = ena.pair_index(len(model.codes))
    rows = []
    for v in vectors:
        row = {"session_id": v.unit[0], "author_id": v.unit[1]}
        for p, (i, j) in enumerate(pairs):
            row[f"{model.codes[i].value}|{model.codes[j].value}"] = v.values[p]
        rows.append(row)
    _write_csv(out / "adjacency.csv", rows, list(rows[0].keys()))
    click.echo(
        f"embedded {len(vectors)} units; variance explained "
        + ", ".join(f"{100 * v:.1f}%" for v in model.variance_explained)
    )


def _temperature_labels(sessions: list[dict]) -> dict[str, str]:
    by_kind: dict[str, set[float]] = {}
    for s in sessions:
        by_kind.setdefault(s["prompt_kind"], set()).add(s["temperature"])
    labels = {}
    for s in sessions:
        temps = sorted(by_kind[s["prompt_kind"]])
        if len(temps) == 1:
            labels[s["session_id"]] = "low"
        else:
            mid = (temps[0] + temps[-1]) / 2
            labels[s["session_id"]] = "high" if s["temperature"] > mid else "low"
    return labels


PREDICTORS = (
    stats.Predictor("prompt_kind", ("argumentative", "creative")),
    stats.Predictor("ownership_label", ("gai", "user")),
    stats.Predictor("temperature_label", ("low", "high")),
)


@main.command("stats")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--bootstrap", "n_boot", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--interactions/--no-interactions", default=False)
def cmd_stats(out: Path, n_boot: int, seed: int, interactions: bool) -> None:
    """Mixed-model group comparisons of the ENA scores per dimension."""
    if n_boot < 200:
        _fail(EXIT_USAGE, "bad-bootstrap", "bootstrap count must be >= 200")
    model_path = _require(out / "ena_model.json", "ena artifact ena_model.json")
    model = json.loads(model_path.read_text("utf-8"))
    sessions = {s["session_id"]: s for s in _load_sessions(out)}
    temp_labels = _temperature_labels(list(sessions.values()))
    units = model["units"]
    scores = np.asarray(model["scores"])
    rows = []
    for sid, aid in units:
        s = sessions.get(sid)
        if s is None:
            _fail(EXIT_DATA, "unknown-unit", f"unit session {sid} missing from sessions.json")
        rows.append({
            "session_id": sid,
            "author_id": aid,
            "prompt_kind": s["prompt_kind"],
            "ownership_label": s["ownership_label"],
            "temperature_label": temp_labels[sid],
        })
    x, names = stats.design_matrix(rows, PREDICTORS, interactions=interactions)
    groups = [r["author_id"] for r in rows]
    results = {}
    coef_rows = []
    try:
        for dim in range(scores.shape[1]):
            y = scores[:, dim]
            fit = stats.fit_random_intercept(y, x, groups, names=names)
            boot = stats.bootstrap_fit(y, x, groups, b=n_boot, seed=seed + dim,
                                       names=names)
            try:
                icc_res = stats.icc(y, groups, seed=seed + dim)
                icc_out = {"estimate": icc_res.icc, "ci": list(icc_res.ci),
                           "groups": icc_res.groups,
                           "mean_group_size": icc_res.mean_group_size}
            except stats.StatsError as exc:
                icc_out = {"error": str(exc)}
            dim_key = f"dimension_{dim + 1}"
            results[dim_key] = {
                "coefficients": {
                    name: {
                        "estimate": float(fit.beta[j]),
                        "se": float(fit.se[j]),
                        "ci": list(boot.ci[name]),
                        "p": boot.p[name],
                        "d": stats.cohens_d(float(fit.beta[j]), fit.var_random,
                                            fit.var_residual),
                    }
                    for j, name in enumerate(names)
                },
                "var_random": fit.var_random,
                "var_residual": fit.var_residual,
                "loglik": fit.loglik,
                "aic": fit.aic,
                "bic": fit.bic,
                "n_obs": fit.n_obs,
                "n_groups": fit.n_groups,
                "boundary": fit.boundary,
                "bootstrap_dropped": boot.dropped,
                "icc": icc_out,
            }
            for j, name in enumerate(names):
                coef_rows.append({
                    "dimension": dim + 1,
                    "term": name,
                    "estimate": float(fit.beta[j]),
                    "se": float(fit.se[j]),
                    "ci_low": boot.ci[name][0],
                    "ci_high": boot.ci[name][1],
                    "p": boot.p[name],
                    "d": stats.cohens_d(float(fit.beta[j]), fit.var_random,
                                        fit.var_residual),
                })
    except (stats.StatsError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_NUMERICAL, "stats-error", str(exc))
    _write_json(out / "stats.json", results)
    _write_csv(out / "coefficients.csv", coef_rows,
               ["dimension", "term", "estimate", "se", "ci_low", "ci_high", "p", "d"])
    click.echo(f"fit {scores.shape[1]} models over {len(rows)} units")


@main.command("report")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def cmd_report(out: Path) -> None:
    """Render embedding scatter, mean networks, and difference networks."""
    model_path = _require(out / "ena_model.json", "ena artifact ena_model.json")
    raw = json.loads(model_path.read_text("utf-8"))
    coded = _read_coded(out)
    vectors = ena.accumulate(coded)
    try:
        model = ena.position_nodes(ena.project(vectors, dims=len(raw["variance_explained"])))
    except ena.EnaError as exc:
        _fail(EXIT_NUMERICAL, "ena-error", str(exc))
    sessions = {s["session_id"]: s for s in _load_sessions(out)}
    temp_labels = _temperature_labels(list(sessions.values()))
    fig_dir = out / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    variables = {
        "ownership": lambda sid: sessions[sid]["ownership_label"],
        "prompt_kind": lambda sid: sessions[sid]["prompt_kind"],
        "temperature": lambda sid: temp_labels[sid],
    }
    pairs = ena.pair_index(len(model.codes))
    edge_rows = []
    for var, labeler in variables.items():
        labels = [labeler(u[0]) for u in model.units]
        levels = sorted(set(labels))
        graphs = {}
        for level in levels:
            idx = [i for i, lab in enumerate(labels) if lab == level]
            g = ena.mean_network(model, idx, f"{var}={level}")
            graphs[level] = g
            (fig_dir / f"mean_{var}_{level}.svg").write_text(
                figures.render_network_svg(g, model), "utf-8")
        if len(levels) == 2:
            d = ena.diff_network(graphs[levels[0]], graphs[levels[1]])
            (fig_dir / f"diff_{var}.svg").write_text(
                figures.render_network_svg(d, model), "utf-8")
            for p, (i, j) in enumerate(pairs):
                edge_rows.append({
                    "comparison": var,
                    "code_a": model.codes[i].value,
                    "code_b": model.codes[j].value,
                    f"mean_{levels[0]}": float(graphs[levels[0]].edge_weights[p]),
                    f"mean_{levels[1]}": float(graphs[levels[1]].edge_weights[p]),
                    "difference": float(d.edge_weights[p]),
                })
        group_of_unit = [labeler(u[0]) for u in model.units]
        figures.save_scatter(model, group_of_unit, fig_dir / f"scatter_{var}.svg")
    # every figure's numbers are also emitted as data
    node_rows = [
        {"code": c.value,
         **{f"dim_{k + 1}": float(model.node_positions[i, k])
            for k in range(model.node_positions.shape[1])}}
        for i, c in enumerate(model.codes)
    ]
    _write_csv(fig_dir / "node_positions.csv", node_rows, list(node_rows[0].keys()))
    if edge_rows:
        cols = sorted({k for r in edge_rows for k in r}, key=lambda k: (k != "comparison", k))
        for r in edge_rows:
            for c in cols:
                r.setdefault(c, "")
        _write_csv(fig_dir / "edge_weights.csv", edge_rows, cols)
    score_rows = [
        {"session_id": u[0], "author_id": u[1],
         **{f"dim_{k + 1}": float(model.scores[i, k])
            for k in range(model.scores.shape[1])}}
        for i, u in enumerate(model.units)
    ]
    _write_csv(fig_dir / "scores.csv", score_rows, list(score_rows[0].keys()))
    bundle = {"figures": sorted(p.name for p in fig_dir.glob("*.svg"))}
    stats_path = out / "stats.json"
    if stats_path.exists():
        bundle["stats"] = json.loads(stats_path.read_text("utf-8"))
    _write_json(out / "report.json", bundle)
    click.echo(f"wrote {len(bundle['figures'])} figures to {fig_dir}")


if __name__ == "__main__":
    main()
