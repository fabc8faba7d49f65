"""End-to-end report parsing: text to simplified attack graph.

Pipeline order matters: IoC protection runs before sentence segmentation
so indicator-internal dots never split sentences, and co-reference
merging runs last so cross-sentence subgraphs join up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .extraction import (
    AttackGraph,
    Gazetteer,
    build_attack_graph,
    extract_entities,
    extract_intra_sentence_dependencies,
    link_explicit_corefs,
    merge_implicit_corefs,
)
from .ingest import Document, normalize_document, segment_text
from .ioc import ProtectedText, RuleSet, protect_iocs, scan_iocs
from .parsing import ParsedDocument, heuristic_parse, load_parse

_DEFAULTS: dict[str, object] = {}


def default_ruleset() -> RuleSet:
    if "ruleset" not in _DEFAULTS:
        _DEFAULTS["ruleset"] = RuleSet.default()
    return _DEFAULTS["ruleset"]


def default_gazetteer() -> Gazetteer:
    if "gazetteer" not in _DEFAULTS:
        path = resources.files("ctikg.data").joinpath("gazetteer.tsv")
        _DEFAULTS["gazetteer"] = Gazetteer.from_file(path)
    return _DEFAULTS["gazetteer"]


@dataclass
class ExtractionConfig:
    """Everything the text-to-graph pipeline needs besides the text."""

    ruleset: RuleSet | None = None
    gazetteer: Gazetteer | None = None
    alpha: float = 0.5
    gamma: float = 0.5
    node_threshold: float = 0.65
    simplify: bool = True
    parse_mode: str = "heuristic"  # or "sidecar_files"
    parse_dir: Path | None = None

    def resolved_ruleset(self) -> RuleSet:
        return self.ruleset if self.ruleset is not None else default_ruleset()

    def resolved_gazetteer(self) -> Gazetteer:
        return self.gazetteer if self.gazetteer is not None else default_gazetteer()


@dataclass
class ParseResult:
    document: Document
    protected: ProtectedText
    parsed: ParsedDocument
    graph: AttackGraph


def extract_graph_from_document(
    doc: Document,
    config: ExtractionConfig | None = None,
    parsed: ParsedDocument | None = None,
) -> ParseResult:
    cfg = config or ExtractionConfig()
    matches = scan_iocs(doc.text, cfg.resolved_ruleset())
    protected = protect_iocs(doc.text, matches)
    if parsed is None:
        if cfg.parse_mode == "sidecar_files":
            if cfg.parse_dir is None:
                raise ValueError("sidecar_files mode needs parse_dir")
            parse_path = Path(cfg.parse_dir) / f"{doc.id}.parse.json"
            if not parse_path.exists():
                raise FileNotFoundError(f"missing sidecar parse file: {parse_path}")
            parsed = load_parse(parse_path)
        else:
            spans = segment_text(protected.text)
            parsed = heuristic_parse(protected, spans)
    entities = extract_entities(parsed, protected.table, cfg.resolved_gazetteer())
    partition = link_explicit_corefs(entities, parsed)
    deps = extract_intra_sentence_dependencies(entities, parsed, alpha=cfg.alpha)
    graph = build_attack_graph(entities, deps, partition, doc_id=doc.id)
    if cfg.simplify:
        graph = merge_implicit_corefs(graph, node_threshold=cfg.node_threshold,
                                      gamma=cfg.gamma)
    return ParseResult(document=doc, protected=protected, parsed=parsed, graph=graph)


def extract_graph_from_text(
    text: str,
    doc_id: str = "",
    config: ExtractionConfig | None = None,
) -> AttackGraph:
    doc = normalize_document(text, format_hint="plain", doc_id=doc_id)
    return extract_graph_from_document(doc, config).graph


def sniff_format(path: Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".html", ".htm"):
        return "html"
    if suffix in (".md", ".markdown"):
        return "markdown"
    return "plain"
