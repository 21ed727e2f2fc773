"""Command-line front end.

Exit codes: 0 success, 1 validation/input error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from evidkit import __version__
from evidkit import analysis, attribution, compare, corpus as corpus_mod, matching, synthkit
from evidkit.report import config_hash, sha256_path, write_csv, write_json, write_jsonl
from evidkit.textproc import default_norm_config, load_norm_config


class InputError(Exception):
    pass


# --- helpers -----------------------------------------------------------------

def _path(p: str) -> Path:
    path = Path(p)
    if not path.exists():
        raise InputError(f"no such file or directory: {p}")
    return path


def _load_corpus(path: str, scheme: str, schema_map: Optional[str]) -> corpus_mod.Corpus:
    mapping = corpus_mod.load_schema_map(_path(schema_map)) if schema_map else None
    return corpus_mod.load_corpus(_path(path), corpus_mod.Scheme.parse(scheme), mapping)


def _load_results(path: str) -> list[matching.MatchResult]:
    out = []
    with open(_path(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                try:
                    out.append(matching.MatchResult.from_json(json.loads(line)))
                except (KeyError, ValueError) as exc:
                    raise InputError(f"{path}:{lineno}: bad match record: {exc}") from exc
    return out


def _named(specs: Sequence[str]) -> dict[str, str]:
    """NAME=PATH pairs; a bare PATH is named after its file stem."""
    out = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        if name in out:
            raise InputError(f"duplicate result set name {name!r}")
        out[name] = path
    return out


class Emitter:
    def __init__(self, args):
        self.out = Path(args.out)
        self.json = args.format in ("json", "both")
        self.csv = args.format in ("csv", "both")
        self.files: list[str] = []

    def table(self, name: str, obj, header=None, rows=None):
        self.out.mkdir(parents=True, exist_ok=True)
        if self.json:
            self.files.append(str(write_json(obj, self.out / f"{name}.json")))
        if self.csv and header is not None:
            self.files.append(str(write_csv(header, rows, self.out / f"{name}.csv")))

    def jsonl(self, name: str, rows):
        self.files.append(str(write_jsonl(rows, self.out / f"{name}.jsonl")))

    def csv_raw(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / f"{name}.csv"
        path.write_text(text, encoding="utf-8")
        self.files.append(str(path))


INPUT_ARGS = ("corpus", "complete", "sufficient", "attr", "calib_corpus", "calib_attr",
              "threshold_file", "norm_config", "schema_map", "spec", "a", "b", "results",
              "common_with")


def _metadata(args, emitter: Emitter) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    inputs = {}
    for key in INPUT_ARGS:
        val = config.get(key)
        if not val:
            continue
        for item in (val if isinstance(val, list) else [val]):
            path = (item.partition("=")[2] or item) if key == "results" else item
            inputs[item] = sha256_path(path)
    meta = {
        "command": args.command_path,
        "config": config,
        "config_hash": config_hash(config),
        "inputs_sha256": inputs,
        "outputs": sorted(str(Path(f).name) for f in emitter.files),
        "versions": {
            "evidkit": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "seed": config.get("seed"),
        "rng": synthkit.RNG_ALGORITHM if config.get("seed") is not None else None,
    }
    emitter.out.mkdir(parents=True, exist_ok=True)
    write_json(meta, emitter.out / "run_metadata.json")


def _hist_rows(h: analysis.Histogram):
    return [(h.bin_edges[i], h.bin_edges[i + 1], h.counts[i], h.normalized[i]) for i in range(len(h.counts))]


HIST_HEADER = ("bin_lo", "bin_hi", "count", "normalized")


# --- subcommands -------------------------------------------------------------

def cmd_validate(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    print(f"ok: {len(c.admissions)} admissions, {c.n_notes} notes, {c.n_spans} spans")
    return 0


def cmd_stats(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    st = corpus_mod.corpus_stats(c)
    rows = [(cat, st.notes_per_category[cat], st.spans_per_category[cat],
             st.avg_spans_per_note_by_category[cat]) for cat in st.spans_per_category]
    em.table("stats", st, ("category", "notes", "spans", "avg_spans_per_note"), rows)
    print(f"spans={st.total_spans} notes={st.n_notes} labels/doc={st.avg_labels_per_document:.3g} "
          f"evidence_tokens={st.avg_evidence_tokens:.3g}")
    return 0


def cmd_position(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    note_ids = None
    if args.common_with:
        other = _load_corpus(args.common_with, "Unspecified", args.schema_map)
        note_ids = set(c.index.by_note) & set(other.index.by_note)
    h = analysis.position_distribution(c, args.category, args.bins, args.anchor, note_ids)
    em.table("position", h, HIST_HEADER, _hist_rows(h))
    print(f"{h.total} spans in {len(h.counts)} bins")
    return 0


def cmd_overlap(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    norm = load_norm_config(_path(args.norm_config)) if args.norm_config else default_norm_config()
    rep = analysis.description_overlap(c, norm)
    em.table("overlap", rep, ("code", "description", "span_count", "median_overlap"),
             [(r.code, r.description, r.span_count, r.median_overlap) for r in rep.rows])
    hist = analysis.overlap_histogram(rep.rows, args.bins)
    em.table("overlap_histogram", hist, HIST_HEADER, _hist_rows(hist))
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{len(rep.rows)} codes, {rep.skipped_missing_description} spans without description")
    return 0


def cmd_diversity(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    rows = analysis.diversity(c)
    em.table("diversity", {"rows": rows}, ("code", "total_occurrences", "unique_strings", "examples"),
             [(r.code, r.total_occurrences, r.unique_strings, r.examples) for r in rows])
    print(f"{len(rows)} codes")
    return 0


def cmd_subset(args, em: Emitter) -> int:
    s = _load_corpus(args.sufficient, "Sufficient", args.schema_map)
    c = _load_corpus(args.complete, "Complete", args.schema_map)
    rep = corpus_mod.common_subset(s, c, args.containment, args.uniqueness)
    em.table("subset", rep, ("note_id", "hadm_id", "sufficient_codes", "complete_codes",
                             "identical_codes", "subset_codes"),
             [tuple(r.values()) for r in rep.per_note])
    print(f"common admissions={rep.common_admissions} unique notes={rep.unique_note_ids} "
          f"common notes={rep.common_note_ids} unique cases={rep.unique_code_cases} "
          f"identical={rep.identical_code_cases} subset={rep.strict_subset_cases}")
    return 0


def _validation_pairs(c: corpus_mod.Corpus, records):
    gold = matching.gold_cases(c)
    pairs = []
    for rec in records:
        spans = gold.get(rec.key)
        if spans is None:
            continue
        ids: set[int] = set()
        for b, e in spans:
            ids |= rec.token_ids_for_chars(b, e)
        pairs.append((rec, ids))
    return pairs


def _calibrate(corpus_path, attr_path, args) -> attribution.ThresholdConfig:
    c = _load_corpus(corpus_path, args.scheme, args.schema_map)
    recs = attribution.read_attributions(_path(attr_path))
    pairs = _validation_pairs(c, recs)
    grid = None
    if args.grid_size:
        grid = attribution.default_grid([r.resolved_scores() for r, _ in pairs], args.grid_size)
    return attribution.calibrate_threshold(pairs, grid, per_code=args.per_code)


def cmd_calibrate(args, em: Emitter) -> int:
    cfg = _calibrate(args.corpus, args.attr, args)
    em.out.mkdir(parents=True, exist_ok=True)
    em.files.append(str(write_json(cfg.to_json(), em.out / "threshold.json")))
    print(f"tau={cfg.threshold:.6g} f1={cfg.f1:.6g}")
    return 0


def _threshold(args) -> attribution.ThresholdConfig | float:
    if args.tau is not None:
        return args.tau
    if args.threshold_file:
        return attribution.load_threshold(_path(args.threshold_file))
    return _calibrate(args.calib_corpus, args.calib_attr, args)


def _post(args) -> attribution.PostConfig:
    return attribution.PostConfig(args.expand_words, args.drop_punct, args.dedupe)


def cmd_extract(args, em: Emitter) -> int:
    threshold = _threshold(args)
    texts = {}
    if args.corpus:
        texts = {k: n.text for k, n in _load_corpus(args.corpus, args.scheme, args.schema_map).index.by_note.items()}
    recs = attribution.read_attributions(_path(args.attr))
    evidence = []
    for rec in recs:
        tau = threshold.threshold_for(rec.code) if isinstance(threshold, attribution.ThresholdConfig) else threshold
        evidence.append(attribution.extract_evidence(rec, tau, _post(args), texts.get(rec.note_id)))
    em.jsonl("evidence", [e.to_json() for e in evidence])
    dups = analysis.duplicate_report(evidence)
    em.table("duplicates", {"groups": dups}, ("note_id", "code", "surface", "count", "positions"),
             [(g.note_id, g.code, g.surface, g.count, g.positions) for g in dups])
    print(f"{len(evidence)} records, {sum(1 for e in evidence if not e.token_ids)} empty")
    return 0


def cmd_match(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    threshold = _threshold(args)
    recs = attribution.read_attributions(_path(args.attr))
    batch = matching.build_cases(c, recs, threshold, _post(args), args.cutoff)
    results = matching.match_cases(batch.cases, matching.MatchConfig(args.k, args.unit))
    em.jsonl("matches", [r.to_json() for r in results])
    dist = matching.match_counts(results)
    em.table("distribution", dist, ("match", "count", "fraction"), dist.rows())
    em.csv_raw("no_match_worksheet", matching.export_no_match(results))
    dups = analysis.duplicate_report(batch.evidence)
    em.table("duplicates", {"groups": dups}, ("note_id", "code", "surface", "count", "positions"),
             [(g.note_id, g.code, g.surface, g.count, g.positions) for g in dups])
    conf = compare.code_level_confusion(results, args.cutoff, len(batch.false_positives))
    summary = {
        "threshold": threshold.to_json() if isinstance(threshold, attribution.ThresholdConfig) else threshold,
        "cases": len(results),
        "missing_attribution": batch.missing_attribution,
        "unaligned_cases": batch.unaligned,
        "dropped_spans": batch.dropped_spans,
        "false_positives": len(batch.false_positives),
        "confusion": conf,
        "micro": dict(zip(("precision", "recall", "f1"), compare.micro_prf(results)[:3])),
    }
    em.table("match_summary", summary)
    print(" ".join(f"{t}={n}" for t, n, _ in dist.rows()) + f" total={dist.total}")
    return 0


def cmd_agreement(args, em: Emitter) -> int:
    m = compare.agreement_matrix(_load_results(args.a), _load_results(args.b))
    labels = [t.value for t in m.labels]
    em.table("agreement", {"labels": labels, "counts": m.counts, "total": m.total,
                           "diagonal_rate": m.diagonal_rate},
             ("a\\b", *labels), [(labels[i], *m.counts[i]) for i in range(len(labels))])
    if em.csv:
        em.files.append(str(write_csv(("row", "col", "count"), m.long_rows(), em.out / "agreement_long.csv")))
    print(f"shared={m.total} diagonal_rate={m.diagonal_rate:.6g}")
    return 0


def cmd_probability(args, em: Emitter) -> int:
    pbm = compare.probability_by_match(_load_results(args.results))
    rows = [(t.value, v.count, v.mean, v.std) for t, v in pbm.by_type.items()]
    em.table("probability", pbm, ("match", "count", "mean", "std"), rows)
    for t, n, mean, std in rows:
        if n:
            print(f"{t}: {mean:.3f} (±{std:.3f}) n={n}")
    return 0


def cmd_length(args, em: Emitter) -> int:
    sets = {name: _load_results(p) for name, p in _named(args.results).items()}
    res = compare.recall_by_length(sets, args.bins, args.source, args.macro)
    em.table("recall_by_length", res, ("bin", "lo", "hi", "n_cases", "recall_mean", "recall_std", "source"),
             [(r.bin, r.lo, r.hi, r.n_cases, r.recall_mean, r.recall_std, r.source) for r in res.rows])
    if res.note:
        print(f"note: {res.note}", file=sys.stderr)
    print(f"{res.effective_bins} bins")
    return 0


def cmd_rank(args, em: Emitter) -> int:
    sets = {name: _load_results(p) for name, p in _named(args.results).items()}
    rows = compare.rank_models(sets)
    em.table("ranking", {"rows": rows}, ("rank", "name", "precision", "recall", "f1"),
             [(i + 1, r.name, r.precision, r.recall, r.f1) for i, r in enumerate(rows)])
    for i, r in enumerate(rows, 1):
        print(f"{i}. {r.name} f1={r.f1:.4f} p={r.precision:.4f} r={r.recall:.4f}")
    return 0


def cmd_confusion(args, em: Emitter) -> int:
    rows = []
    for name, p in _named(args.results).items():
        conf = compare.code_level_confusion(_load_results(p), args.cutoff)
        rows.append((name, conf.tp, conf.fn, conf.fp, conf.total_gold))
    em.table("confusion", {"rows": [dict(zip(("name", "tp", "fn", "fp", "total_gold"), r)) for r in rows]},
             ("name", "tp", "fn", "fp", "total_gold"), rows)
    for r in rows:
        print(f"{r[0]}: TP={r[1]} FN={r[2]} FP={r[3]} of {r[4]}")
    return 0


def cmd_synth_corpus(args, em: Emitter) -> int:
    spec = synthkit.SynthSpec.load(_path(args.spec)) if args.spec else synthkit.SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    args.seed = spec.seed
    c, planted = synthkit.generate_corpus(spec)
    em.out.mkdir(parents=True, exist_ok=True)
    path = em.out / "corpus.json"
    path.write_text(corpus_mod.serialize_corpus(c) + "\n", encoding="utf-8")
    em.files.append(str(path))
    em.files.append(str(write_json({"spec": spec.to_json(), **planted}, em.out / "planted.json")))
    print(f"{c.n_notes} notes, {c.n_spans} spans -> {path}")
    return 0


def cmd_synth_attr(args, em: Emitter) -> int:
    c = _load_corpus(args.corpus, args.scheme, args.schema_map)
    recs = synthkit.generate_attributions(c, args.fidelity, args.seed, args.disjoint, args.gradients)
    em.out.mkdir(parents=True, exist_ok=True)
    path = em.out / "attributions.jsonl"
    attribution.write_attributions(recs, path)
    em.files.append(str(path))
    print(f"{len(recs)} attribution records -> {path}")
    return 0


def cmd_report(args, em: Emitter) -> int:
    """Every analysis that the given inputs allow, in one output directory."""
    base = em.out
    sub = lambda name: argparse.Namespace(**{**vars(args), "out": str(base / name)})  # noqa: E731
    steps = [("stats", cmd_stats), ("diversity", cmd_diversity)]
    args.category, args.anchor, args.common_with = None, "begin", None
    steps.append(("position", cmd_position))
    steps.append(("overlap", cmd_overlap))
    if args.complete:
        args.sufficient = args.corpus
        steps.append(("subset", cmd_subset))
    if args.attr:
        steps.append(("match", cmd_match))
    for name, fn in steps:
        sub_args = sub(name)
        sub_em = Emitter(sub_args)
        fn(sub_args, sub_em)
        em.files.extend(sub_em.files)
    return 0


# --- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, corpus: bool = True) -> None:
    if corpus:
        p.add_argument("--corpus", required=True, help="corpus JSON file or directory of per-admission files")
    p.add_argument("--scheme", default="Unspecified", help="Sufficient|Complete|Unspecified (aliases Inpatient, Profee)")
    p.add_argument("--schema-map", help="JSON key-rename config mapping canonical keys to source keys")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both", help="report formats")


def _threshold_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", type=float, help="explicit attribution threshold")
    g.add_argument("--threshold-file", help="threshold.json written by `calibrate`")
    g.add_argument("--calib-corpus", help="validation corpus to calibrate on (needs --calib-attr)")
    p.add_argument("--calib-attr", help="validation attribution JSONL")
    p.add_argument("--grid-size", type=int, default=attribution.DEFAULT_GRID_SIZE,
                   help="number of score quantiles in the calibration grid")
    p.add_argument("--per-code", action="store_true", help="also calibrate one threshold per code")


def _post_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--expand-words", action="store_true", help="expand selected subword tokens to whole words")
    p.add_argument("--drop-punct", action="store_true", help="drop punctuation-only tokens")
    p.add_argument("--dedupe", action="store_true", help="keep only the first of repeated surfaces")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evidkit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"evidkit {__version__}")
    sp = ap.add_subparsers(dest="command", required=True)

    p = sp.add_parser("validate", help="check a corpus file")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = sp.add_parser("stats", help="corpus statistics")
    _common(p)
    p.set_defaults(func=cmd_stats)

    an = sp.add_parser("analyze", help="dataset analyses").add_subparsers(dest="analysis", required=True)
    p = an.add_parser("position", help="relative evidence position histogram")
    _common(p)
    p.add_argument("--category", help="only notes of this document category")
    p.add_argument("--bins", type=int, default=analysis.DEFAULT_BINS)
    p.add_argument("--anchor", choices=("begin", "midpoint"), default="begin")
    p.add_argument("--common-with", help="restrict to notes also present in this corpus")
    p.set_defaults(func=cmd_position)
    p = an.add_parser("overlap", help="evidence / code description overlap")
    _common(p)
    p.add_argument("--norm-config", help="NormConfig JSON (stopwords, lemma_table, keep_numbers, lowercase)")
    p.add_argument("--bins", type=int, default=10, help="bins of the median-overlap histogram")
    p.set_defaults(func=cmd_overlap)
    p = an.add_parser("diversity", help="occurrences vs unique evidence strings per code")
    _common(p)
    p.set_defaults(func=cmd_diversity)
    p = an.add_parser("subset", help="sufficient vs complete annotation comparison")
    _common(p, corpus=False)
    p.add_argument("--sufficient", required=True)
    p.add_argument("--complete", required=True)
    p.add_argument("--containment", choices=("contain", "exact"), default="contain")
    p.add_argument("--uniqueness", choices=("note_code", "code"), default="note_code")
    p.set_defaults(func=cmd_subset)

    p = sp.add_parser("calibrate", help="fit the attribution threshold on validation data")
    _common(p)
    p.add_argument("--attr", required=True, help="validation attribution JSONL")
    p.add_argument("--grid-size", type=int, default=attribution.DEFAULT_GRID_SIZE)
    p.add_argument("--per-code", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sp.add_parser("extract", help="threshold attributions into model evidence")
    _common(p, corpus=False)
    p.add_argument("--attr", required=True)
    p.add_argument("--corpus", help="corpus supplying note text for word expansion and surfaces")
    _threshold_args(p)
    _post_args(p)
    p.set_defaults(func=cmd_extract)

    p = sp.add_parser("match", help="classify model evidence against gold evidence")
    _common(p)
    p.add_argument("--attr", required=True)
    p.add_argument("--k", type=int, default=matching.DEFAULT_K, help="context window in tokens")
    p.add_argument("--unit", choices=("token", "char"), default="token", help="context window unit")
    p.add_argument("--cutoff", type=float, default=matching.DEFAULT_CUTOFF, help="prediction probability cutoff")
    _threshold_args(p)
    _post_args(p)
    p.set_defaults(func=cmd_match)

    cp = sp.add_parser("compare", help="cross-model comparisons").add_subparsers(dest="comparison", required=True)
    p = cp.add_parser("agreement", help="5x5 match-type agreement matrix")
    _common(p, corpus=False)
    p.add_argument("--a", required=True, help="match JSONL of model A (rows)")
    p.add_argument("--b", required=True, help="match JSONL of model B (columns)")
    p.set_defaults(func=cmd_agreement)
    p = cp.add_parser("probability", help="output probability per match type")
    _common(p, corpus=False)
    p.add_argument("--results", required=True)
    p.set_defaults(func=cmd_probability)
    p = cp.add_parser("length", help="recall vs evidence word count")
    _common(p, corpus=False)
    p.add_argument("--results", nargs="+", required=True, help="NAME=PATH match JSONL files")
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--source", choices=("gt_length", "model_length"), default="gt_length")
    p.add_argument("--macro", action="store_true", help="macro-average recall over codes within a bin")
    p.set_defaults(func=cmd_length)
    p = cp.add_parser("rank", help="rank result sets by micro token F1")
    _common(p, corpus=False)
    p.add_argument("--results", nargs="+", required=True, help="NAME=PATH match JSONL files")
    p.set_defaults(func=cmd_rank)
    p = cp.add_parser("confusion", help="code-level TP/FN/FP")
    _common(p, corpus=False)
    p.add_argument("--results", nargs="+", required=True, help="NAME=PATH match JSONL files")
    p.add_argument("--cutoff", type=float, default=matching.DEFAULT_CUTOFF)
    p.set_defaults(func=cmd_confusion)

    sy = sp.add_parser("synth", help="synthetic data").add_subparsers(dest="kind", required=True)
    p = sy.add_parser("corpus", help="generate a synthetic corpus")
    _common(p, corpus=False)
    p.add_argument("--spec", help="SynthSpec JSON")
    p.add_argument("--seed", type=int, help="overrides the spec seed")
    p.set_defaults(func=cmd_synth_corpus)
    p = sy.add_parser("attributions", help="generate synthetic attributions for a corpus")
    _common(p)
    p.add_argument("--fidelity", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--disjoint", action="store_true", help="decoy tokens avoid the gold tokens")
    p.add_argument("--gradients", action="store_true", help="emit attention + input_grad instead of scores")
    p.set_defaults(func=cmd_synth_attr)

    p = sp.add_parser("report", help="run every applicable analysis into one directory")
    _common(p)
    p.add_argument("--complete", help="complete-scheme corpus for the subset analysis")
    p.add_argument("--attr", help="attribution JSONL for matching")
    p.add_argument("--k", type=int, default=matching.DEFAULT_K)
    p.add_argument("--unit", choices=("token", "char"), default="token")
    p.add_argument("--cutoff", type=float, default=matching.DEFAULT_CUTOFF)
    p.add_argument("--bins", type=int, default=analysis.DEFAULT_BINS)
    p.add_argument("--norm-config")
    p.add_argument("--containment", choices=("contain", "exact"), default="contain")
    p.add_argument("--uniqueness", choices=("note_code", "code"), default="note_code")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float)
    g.add_argument("--threshold-file")
    g.add_argument("--calib-corpus")
    p.add_argument("--calib-attr")
    p.add_argument("--grid-size", type=int, default=attribution.DEFAULT_GRID_SIZE)
    p.add_argument("--per-code", action="store_true")
    _post_args(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "calib_corpus", None) and not getattr(args, "calib_attr", None):
        parser.error("--calib-corpus requires --calib-attr")
    if getattr(args, "calib_attr", None) and not getattr(args, "calib_corpus", None):
        parser.error("--calib-attr requires --calib-corpus")
    if args.command == "report" and args.attr and not (args.tau is not None or args.threshold_file or args.calib_corpus):
        parser.error("report with --attr needs --tau, --threshold-file or --calib-corpus")
    args.command_path = " ".join(
        x for x in (args.command, getattr(args, "analysis", None), getattr(args, "comparison", None),
                    getattr(args, "kind", None)) if x
    )
    em = Emitter(args)
    try:
        code = args.func(args, em)
    except (InputError, corpus_mod.CorpusError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _metadata(args, em)
    return code


if __name__ == "__main__":
    sys.exit(main())
