"""ctikg: attack graphs and technique knowledge graphs from CTI report text."""

from .align import (
    AlignParams,
    Assignment,
    TechniqueMatch,
    brute_force_align,
    graph_alignment_score,
    identify_techniques,
    min_hop,
    node_alignment_score,
    set_similarity,
    term_similarity,
)
from .estimators import ReportGraphExtractor, TechniqueIdentifier
from .extraction import (
    AttackGraph,
    Dependency,
    Entity,
    Gazetteer,
    build_attack_graph,
    extract_entities,
    extract_intra_sentence_dependencies,
    link_explicit_corefs,
    merge_implicit_corefs,
)
from .ingest import Document, SentenceSpan, normalize_document, segment_sentences, segment_text
from .ioc import IoCMatch, ProtectedText, RuleSet, protect_iocs, refang, restore_iocs, scan_iocs
from .parsing import ParsedDocument, heuristic_parse, load_parse, validate_parsed
from .pipeline import ExtractionConfig, extract_graph_from_document, extract_graph_from_text
from .templates import (
    TechniqueTemplate,
    TemplateStore,
    bootstrap_from_examples,
    init_template,
    load_templates,
    save_templates,
    update_template,
)
from .tkg import TKG, build_tkg, export_dot, export_json

__version__ = "0.1.0"

__all__ = [
    "AlignParams",
    "Assignment",
    "AttackGraph",
    "Dependency",
    "Document",
    "Entity",
    "ExtractionConfig",
    "Gazetteer",
    "IoCMatch",
    "ParsedDocument",
    "ProtectedText",
    "ReportGraphExtractor",
    "RuleSet",
    "SentenceSpan",
    "TKG",
    "TechniqueIdentifier",
    "TechniqueMatch",
    "TechniqueTemplate",
    "TemplateStore",
    "brute_force_align",
    "build_attack_graph",
    "build_tkg",
    "bootstrap_from_examples",
    "export_dot",
    "export_json",
    "extract_entities",
    "extract_graph_from_document",
    "extract_graph_from_text",
    "extract_intra_sentence_dependencies",
    "graph_alignment_score",
    "heuristic_parse",
    "identify_techniques",
    "init_template",
    "link_explicit_corefs",
    "load_parse",
    "load_templates",
    "merge_implicit_corefs",
    "min_hop",
    "node_alignment_score",
    "normalize_document",
    "protect_iocs",
    "refang",
    "restore_iocs",
    "save_templates",
    "scan_iocs",
    "segment_sentences",
    "segment_text",
    "set_similarity",
    "term_similarity",
    "update_template",
    "validate_parsed",
]
