"""Command-line surface for the report-to-TKG pipeline.

Subcommands: parse (reports to attack graphs), identify (graphs to
matches and TKGs), templates-init / templates-update (template store
lifecycle), sweep and ablate (threshold and component studies).
Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .align import AlignParams
from .evaluate import ablation_study, simplify_suite, sweep_thresholds
from .extraction import AttackGraph, merge_implicit_corefs
from .ingest import IngestError, normalize_document
from .ioc import RuleSet
from .pipeline import ExtractionConfig, extract_graph_from_document, sniff_format
from .synth import DEFAULT_SEED, synth_suite, synth_templates
from .templates import TemplateError, TemplateStore, bootstrap_from_examples, update_template
from .tkg import build_tkg, export_dot, export_json, matches_to_dict


class InputError(Exception):
    """User-correctable problem: bad path, bad file, bad flag combination."""


def _add_align_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gamma", type=float, default=0.5,
                        help="base score for type-matched nodes (default 0.5)")
    parser.add_argument("--node-threshold", type=float, default=0.65,
                        help="node alignment candidate gate (default 0.65)")
    parser.add_argument("--graph-threshold", type=float, default=0.85,
                        help="technique match gate (default 0.85)")
    parser.add_argument("--path-mode", choices=("directed", "undirected"),
                        default="directed")
    parser.add_argument("--max-candidates", type=int, default=5)
    parser.add_argument("--ablate", action="append", default=[],
                        choices=("no_ioc", "no_nlp", "no_dependencies",
                                 "no_simplification"),
                        help="disable one component (repeatable)")


def _align_params(args) -> AlignParams:
    try:
        return AlignParams(
            gamma=args.gamma,
            node_threshold=args.node_threshold,
            graph_threshold=args.graph_threshold,
            max_candidates_per_node=args.max_candidates,
            path_mode=args.path_mode,
            ablation=frozenset(args.ablate),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_store(path: str) -> TemplateStore:
    p = Path(path)
    if not p.exists():
        raise InputError(f"templates file not found: {p}")
    try:
        return TemplateStore.load(p)
    except (TemplateError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot load templates from {p}: {exc}") from exc


def cmd_parse(args) -> int:
    ruleset = None
    if args.ruleset:
        if not Path(args.ruleset).exists():
            raise InputError(f"ruleset file not found: {args.ruleset}")
        ruleset = RuleSet.default(extra_path=args.ruleset)
    cfg = ExtractionConfig(
        ruleset=ruleset,
        alpha=args.alpha,
        gamma=args.gamma,
        node_threshold=args.node_threshold,
        simplify="no_simplification" not in args.ablate,
        parse_mode=args.parse_mode,
        parse_dir=Path(args.parse_dir) if args.parse_dir else None,
    )
    if args.parse_mode == "sidecar_files" and cfg.parse_dir is None:
        raise InputError("--parse-mode sidecar_files requires --parse-dir")
    out = _out_dir(args)
    failures: list[str] = []
    for name in args.reports:
        if name == "-":
            raw = sys.stdin.buffer.read()
            doc_id, source = "stdin", "<stdin>"
            fmt = args.format if args.format != "auto" else "plain"
        else:
            path = Path(name)
            if not path.exists():
                failures.append(f"{name}: file not found")
                continue
            raw = path.read_bytes()
            doc_id, source = path.stem, str(path)
            fmt = args.format if args.format != "auto" else sniff_format(path)
        try:
            doc = normalize_document(raw, format_hint=fmt, doc_id=doc_id,
                                     source=source)
            result = extract_graph_from_document(doc, cfg)
        except (IngestError, FileNotFoundError, ValueError) as exc:
            failures.append(f"{name}: {exc}")
            continue
        target = out / f"{doc_id}.graph.json"
        target.write_text(result.graph.to_json(), encoding="utf-8")
        print(f"{name}: {len(result.graph.nodes)} nodes, "
              f"{len(result.graph.edges)} edges -> {target}")
    for failure in failures:
        print(f"error: {failure}", file=sys.stderr)
    if failures and len(failures) == len(args.reports):
        return 1
    return 0


def cmd_protect(args) -> int:
    """Write IoC-protected text files for the NLP sidecar to parse."""
    ruleset = RuleSet.default(extra_path=args.ruleset) if args.ruleset else None
    cfg = ExtractionConfig(ruleset=ruleset)
    out = _out_dir(args)
    from .ioc import protect_iocs, scan_iocs

    for name in args.reports:
        path = Path(name)
        if not path.exists():
            raise InputError(f"report not found: {path}")
        fmt = args.format if args.format != "auto" else sniff_format(path)
        doc = normalize_document(path.read_bytes(), format_hint=fmt,
                                 doc_id=path.stem, source=str(path))
        protected = protect_iocs(doc.text, scan_iocs(doc.text, cfg.resolved_ruleset()))
        target = out / f"{path.stem}.protected.txt"
        target.write_text(protected.text, encoding="utf-8")
        print(f"{name}: {len(protected.table)} IoCs protected -> {target}")
    return 0


def _load_graph(path: Path) -> AttackGraph:
    try:
        return AttackGraph.from_json(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InputError(f"cannot load graph from {path}: {exc}") from exc


def _graph_stem(path: Path) -> str:
    return path.name.removesuffix(".json").removesuffix(".graph")


def cmd_identify(args) -> int:
    store = _load_store(args.templates)
    if len(store) == 0:
        raise InputError(f"no templates in {args.templates}")
    params = _align_params(args)
    out = _out_dir(args)
    from .align import identify_techniques

    for name in args.graphs:
        path = Path(name)
        if not path.exists():
            raise InputError(f"graph file not found: {path}")
        graph = _load_graph(path)
        matches = identify_techniques(graph, store, params)
        report = matches_to_dict(matches, store, graph, params)
        (out / f"{_graph_stem(path)}.matches.json").write_text(
            json.dumps(report, indent=2) + "\n", encoding="utf-8"
        )
        tkg = build_tkg(graph, matches, store)
        if args.format == "dot":
            (out / f"{_graph_stem(path)}.tkg.dot").write_text(export_dot(tkg), encoding="utf-8")
        elif args.format == "text":
            for m in matches:
                print(f"{_graph_stem(path)}: {m.technique_id} total={m.assignment.total:.3f} "
                      f"nodes={','.join(m.matched_nodes)}")
        else:
            (out / f"{_graph_stem(path)}.tkg.json").write_text(export_json(tkg), encoding="utf-8")
        techniques = sorted({m.technique_id for m in matches})
        print(f"{name}: {len(matches)} matches ({', '.join(techniques) or 'none'})")
    return 0


def cmd_templates_init(args) -> int:
    params = _align_params(args)
    if args.graphs_dir:
        store, errors = _bootstrap_from_graphs(Path(args.graphs_dir), params)
    else:
        examples = Path(args.examples_dir)
        if not examples.is_dir():
            raise InputError(f"examples directory not found: {examples}")
        store, errors = bootstrap_from_examples(examples, params)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    if len(store) == 0:
        raise InputError("no templates could be initialized")
    from .templates import lint_template

    for template in store:
        for finding in lint_template(template):
            print(f"lint: {finding}", file=sys.stderr)
    store.save(args.out)
    print(f"initialized {len(store)} templates -> {args.out}")
    return 0


def _bootstrap_from_graphs(graphs_dir: Path, params):
    """Init templates from single-technique graph JSON files.

    Files are named ``<technique_id>__<anything>.json``; all graphs for one
    technique id fold into one template in sorted filename order.
    """
    if not graphs_dir.is_dir():
        raise InputError(f"graphs directory not found: {graphs_dir}")
    from .templates import TemplateStore, init_template

    grouped: dict[str, list] = {}
    errors: list[str] = []
    for path in sorted(graphs_dir.glob("*.json")):
        technique_id = path.name.split("__")[0].removesuffix(".json")
        try:
            grouped.setdefault(technique_id, []).append(_load_graph(path))
        except InputError as exc:
            errors.append(str(exc))
    store = TemplateStore()
    for technique_id in sorted(grouped):
        try:
            store.add(init_template(technique_id, grouped[technique_id], params))
        except TemplateError as exc:
            errors.append(f"{technique_id}: {exc}")
    return store, errors


def cmd_templates_update(args) -> int:
    store = _load_store(args.templates)
    graph = _load_graph(Path(args.graph))
    try:
        report = json.loads(Path(args.matches).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read match report {args.matches}: {exc}") from exc

    class _Pairs:
        def __init__(self, pairs):
            self.pairs = pairs

    for entry in report:
        technique_id = entry["technique_id"]
        if technique_id not in store.templates:
            raise InputError(f"match report names unknown technique {technique_id}")
        pairs = {p["template_node"]: p["graph_node"] for p in entry["pairs"]}
        try:
            store.replace(update_template(store.get(technique_id), _Pairs(pairs), graph))
        except TemplateError as exc:
            raise InputError(str(exc)) from exc

    store.revision += 1
    src = Path(args.templates)
    target = src.with_name(f"{src.stem.split('.v')[0]}.v{store.revision}.json")
    if target.exists():
        raise InputError(f"version collision: {target} already exists")
    store.save(target)
    print(f"updated {len(report)} matches -> {target}")
    return 0


def _suite_and_store(args):
    """Labeled suite plus template store, from files or the seeded generator."""
    if args.labels:
        if not args.templates:
            raise InputError("--labels requires --templates")
        labels_path = Path(args.labels)
        if not labels_path.exists():
            raise InputError(f"labels file not found: {labels_path}")
        mapping = json.loads(labels_path.read_text(encoding="utf-8"))
        if not mapping:
            raise InputError("labels file is empty")
        suite = []
        for graph_file, technique_ids in sorted(mapping.items()):
            graph_path = labels_path.parent / graph_file
            if not graph_path.exists():
                raise InputError(f"labeled graph not found: {graph_path}")
            suite.append((_load_graph(graph_path), set(technique_ids)))
        return suite, _load_store(args.templates)
    store = synth_templates(args.synth_templates, seed=args.seed)
    suite = synth_suite(store, n_graphs=args.synth_graphs, seed=args.seed)
    if args.templates:
        store = _load_store(args.templates)
    return suite, store


def cmd_sweep(args) -> int:
    params = _align_params(args)
    suite, store = _suite_and_store(args)
    rows = sweep_thresholds(simplify_suite(suite, params.node_threshold, params.gamma),
                            store, params)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["sweep", "threshold", "precision", "recall", "f1", "seconds"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} sweep rows -> {args.out}")
    return 0


def cmd_ablate(args) -> int:
    params = _align_params(args)
    suite, store = _suite_and_store(args)
    rows = ablation_study(suite, store, params)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["variant", "node_threshold", "graph_threshold",
                        "precision", "recall", "f1"],
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} variant rows -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctikg",
        description="Attack graphs and technique knowledge graphs from CTI reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse report files into attack graph JSON")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("auto", "plain", "markdown", "html"),
                   default="auto")
    p.add_argument("--parse-mode", choices=("heuristic", "sidecar_files"),
                   default="heuristic")
    p.add_argument("--parse-dir", help="directory of <doc_id>.parse.json sidecar files")
    p.add_argument("--ruleset", help="extra IoC rules (category<TAB>regex lines)")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="LCA-vs-position mix for dependency distance")
    p.add_argument("--out", default=".")
    _add_align_flags(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("protect",
                       help="write IoC-protected text (input for the NLP sidecar)")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("auto", "plain", "markdown", "html"),
                   default="auto")
    p.add_argument("--ruleset", help="extra IoC rules (category<TAB>regex lines)")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser("identify", help="identify techniques in attack graphs")
    p.add_argument("graphs", nargs="+")
    p.add_argument("--templates", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("json", "dot", "text"), default="json")
    _add_align_flags(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("templates-init",
                       help="bootstrap templates from example texts or graph JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--examples-dir",
                       help="directory of <technique_id>.txt files, one example per line")
    group.add_argument("--graphs-dir",
                       help="directory of <technique_id>__*.json single-technique graphs")
    p.add_argument("--out", required=True)
    _add_align_flags(p)
    p.set_defaults(func=cmd_templates_init)

    p = sub.add_parser("templates-update",
                       help="fold a match report into a new template file version")
    p.add_argument("--templates", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--matches", required=True)
    _add_align_flags(p)
    p.set_defaults(func=cmd_templates_update)

    for name, fn, help_text in (
        ("sweep", cmd_sweep, "threshold sweep: CSV of threshold vs P/R/F1 and time"),
        ("ablate", cmd_ablate, "ablation study: CSV of variant vs P/R/F1"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--templates", help="template store (default: synthetic)")
        p.add_argument("--labels",
                       help="JSON mapping graph files to technique id lists")
        p.add_argument("--synth-templates", type=int, default=10)
        p.add_argument("--synth-graphs", type=int, default=24)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--out", required=True)
        _add_align_flags(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
