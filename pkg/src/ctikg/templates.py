"""Technique templates: per-technique graphs aggregating intelligence.

A template node carries the IoC terms and natural-language descriptions
seen for one entity role across source graphs, plus an occurrence count
used as a confidence weight during alignment.  Templates are initialized
from single-technique attack graphs and updated in place-free fashion as
new reports match.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .extraction import ENTITY_TYPES, AttackGraph

TECHNIQUE_ID_RE = re.compile(r"^T\d{4}(?:[./]\d{3})?$")


class TemplateError(ValueError):
    pass


@dataclass
class TemplateNode:
    id: str
    etype: str
    ioc_terms: set[str] = field(default_factory=set)
    nlp_terms: set[str] = field(default_factory=set)
    occur: int = 1


@dataclass
class TemplateEdge:
    src: str
    dst: str
    occur: int = 1


@dataclass
class TechniqueTemplate:
    technique_id: str
    name: str = ""
    nodes: dict[str, TemplateNode] = field(default_factory=dict)
    edges: list[TemplateEdge] = field(default_factory=list)
    sources: int = 0

    def sorted_nodes(self) -> list[TemplateNode]:
        return sorted(self.nodes.values(), key=lambda n: n.id)

    def to_dict(self) -> dict:
        return {
            "technique_id": self.technique_id,
            "name": self.name,
            "sources": self.sources,
            "nodes": [
                {
                    "id": n.id,
                    "etype": n.etype,
                    "ioc_terms": sorted(n.ioc_terms),
                    "nlp_terms": sorted(n.nlp_terms),
                    "occur": n.occur,
                }
                for n in self.sorted_nodes()
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "occur": e.occur}
                for e in sorted(self.edges, key=lambda e: (e.src, e.dst))
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "template") -> "TechniqueTemplate":
        tid = data.get("technique_id", "")
        if not TECHNIQUE_ID_RE.match(tid):
            raise TemplateError(f"{where}: malformed technique_id {tid!r}")
        t = cls(technique_id=tid, name=data.get("name", ""),
                sources=int(data.get("sources", 0)))
        for i, nd in enumerate(data.get("nodes", [])):
            if nd["etype"] not in ENTITY_TYPES:
                raise TemplateError(f"{where}/nodes/{i}: unknown etype {nd['etype']!r}")
            if int(nd.get("occur", 1)) < 1:
                raise TemplateError(f"{where}/nodes/{i}: occur must be >= 1")
            node = TemplateNode(
                id=nd["id"],
                etype=nd["etype"],
                ioc_terms=set(nd.get("ioc_terms", [])),
                nlp_terms=set(nd.get("nlp_terms", [])),
                occur=int(nd.get("occur", 1)),
            )
            if node.id in t.nodes:
                raise TemplateError(f"{where}/nodes/{i}: duplicate node id {node.id!r}")
            t.nodes[node.id] = node
        for i, ed in enumerate(data.get("edges", [])):
            if ed["src"] not in t.nodes or ed["dst"] not in t.nodes:
                raise TemplateError(f"{where}/edges/{i}: endpoint not a known node")
            if int(ed.get("occur", 1)) < 1:
                raise TemplateError(f"{where}/edges/{i}: occur must be >= 1")
            t.edges.append(TemplateEdge(src=ed["src"], dst=ed["dst"],
                                        occur=int(ed.get("occur", 1))))
        return t

    def copy(self) -> "TechniqueTemplate":
        return TechniqueTemplate.from_dict(self.to_dict())


def lint_template(template: TechniqueTemplate) -> list[str]:
    """Non-fatal template health report.

    Flags disconnected components (aggregation should eventually tie a
    technique's entities together) and occurrence counts that exceed the
    number of source graphs.
    """
    findings: list[str] = []
    for node in template.sorted_nodes():
        if node.occur > template.sources:
            findings.append(
                f"{template.technique_id}: node {node.id} occur {node.occur} "
                f"exceeds sources {template.sources}"
            )
    for edge in template.edges:
        if edge.occur > template.sources:
            findings.append(
                f"{template.technique_id}: edge {edge.src}->{edge.dst} occur "
                f"{edge.occur} exceeds sources {template.sources}"
            )
    if template.nodes:
        adjacency: dict[str, set[str]] = {nid: set() for nid in template.nodes}
        for edge in template.edges:
            adjacency[edge.src].add(edge.dst)
            adjacency[edge.dst].add(edge.src)
        seen: set[str] = set()
        components: list[list[str]] = []
        for start in sorted(template.nodes):
            if start in seen:
                continue
            stack, component = [start], []
            while stack:
                nid = stack.pop()
                if nid in seen:
                    continue
                seen.add(nid)
                component.append(nid)
                stack.extend(adjacency[nid] - seen)
            components.append(sorted(component))
        if len(components) > 1:
            for component in components:
                findings.append(
                    f"{template.technique_id}: disconnected component "
                    f"{{{', '.join(component)}}}"
                )
    return findings


def init_template(technique_id: str, graphs: list[AttackGraph], params,
                  name: str = "") -> TechniqueTemplate:
    """Seed a template from the first graph, then fold the rest in by alignment.

    Aligned graph nodes merge their term sets into the template node and
    bump its occurrence count; unaligned graph nodes are appended as fresh
    template nodes.  Edges follow the node mapping the same way.  Graph
    order is taken as given so the result is reproducible.
    """
    from .align import align_template

    if not graphs:
        raise TemplateError("init_template needs at least one graph")
    if not TECHNIQUE_ID_RE.match(technique_id):
        raise TemplateError(f"malformed technique_id {technique_id!r}")

    template = TechniqueTemplate(technique_id=technique_id, name=name)
    counter = 0

    def fresh_id() -> str:
        nonlocal counter
        nid = f"t{counter:03d}"
        counter += 1
        return nid

    for graph in graphs:
        if not template.nodes:
            mapping: dict[str, str] = {}  # graph node id -> template node id
        else:
            assignments, _ = align_template(template, graph, params, min_total=0.0)
            best = assignments[0] if assignments else None
            mapping = {gid: tid for tid, gid in best.pairs.items()} if best else {}

        for gnode in graph.sorted_nodes():
            tid = mapping.get(gnode.id)
            if tid is None:
                tid = fresh_id()
                template.nodes[tid] = TemplateNode(
                    id=tid,
                    etype=gnode.etype,
                    ioc_terms=set(gnode.ioc_terms),
                    nlp_terms=set(gnode.nlp_terms),
                    occur=1,
                )
                mapping[gnode.id] = tid
            else:
                tnode = template.nodes[tid]
                tnode.ioc_terms |= gnode.ioc_terms
                tnode.nlp_terms |= gnode.nlp_terms
                tnode.occur += 1

        existing = {(e.src, e.dst): e for e in template.edges}
        seen_pairs: set[tuple[str, str]] = set()
        for gedge in sorted(graph.edges, key=lambda e: (e.src, e.dst)):
            pair = (mapping[gedge.src], mapping[gedge.dst])
            if pair[0] == pair[1] or pair in seen_pairs:
                continue
            seen_pairs.add(pair)
            if pair in existing:
                existing[pair].occur += 1
            else:
                edge = TemplateEdge(src=pair[0], dst=pair[1], occur=1)
                template.edges.append(edge)
                existing[pair] = edge
        template.sources += 1
    return template


def update_template(template: TechniqueTemplate, match, graph: AttackGraph) -> TechniqueTemplate:
    """Fold a matched graph into the template without changing its shape.

    Aligned nodes absorb new terms and count one more occurrence; aligned
    edges likewise.  Node and edge sets never grow here, unlike init.
    Returns a new template (stores treat templates as immutable values).
    """
    out = template.copy()
    pairs = match.assignment.pairs if hasattr(match, "assignment") else match.pairs
    for tid, gid in pairs.items():
        if tid not in out.nodes:
            raise TemplateError(f"match references unknown template node {tid!r}")
        if gid not in graph.nodes:
            raise TemplateError(f"match references unknown graph node {gid!r}")
        tnode = out.nodes[tid]
        gnode = graph.nodes[gid]
        tnode.ioc_terms |= {t.casefold() for t in gnode.ioc_terms}
        tnode.nlp_terms |= {t.casefold() for t in gnode.nlp_terms}
        tnode.occur += 1
    inverse = {gid: tid for tid, gid in pairs.items()}
    template_edges = {(e.src, e.dst): e for e in out.edges}
    for gedge in graph.edges:
        ti, tj = inverse.get(gedge.src), inverse.get(gedge.dst)
        if ti is None or tj is None:
            continue
        edge = template_edges.get((ti, tj))
        if edge is not None:
            edge.occur += 1
    out.sources += 1
    return out


class TemplateStore:
    """An ordered set of technique templates with JSON persistence."""

    def __init__(self, templates: list[TechniqueTemplate] | None = None, revision: int = 1):
        self.templates: dict[str, TechniqueTemplate] = {}
        self.revision = revision
        for t in templates or []:
            self.add(t)

    def add(self, template: TechniqueTemplate) -> None:
        if template.technique_id in self.templates:
            raise TemplateError(f"duplicate technique_id {template.technique_id!r}")
        self.templates[template.technique_id] = template

    def replace(self, template: TechniqueTemplate) -> None:
        self.templates[template.technique_id] = template

    def get(self, technique_id: str) -> TechniqueTemplate:
        return self.templates[technique_id]

    def __iter__(self):
        return iter(sorted(self.templates.values(), key=lambda t: t.technique_id))

    def __len__(self) -> int:
        return len(self.templates)

    def to_dict(self) -> dict:
        return {
            "revision": self.revision,
            "templates": [t.to_dict() for t in self],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TemplateStore":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        store = cls(revision=int(data.get("revision", 1)))
        for i, td in enumerate(data.get("templates", [])):
            store.add(TechniqueTemplate.from_dict(td, where=f"/templates/{i}"))
        return store


def save_templates(store: TemplateStore, path) -> None:
    store.save(path)


def load_templates(path) -> TemplateStore:
    return TemplateStore.load(path)


def bootstrap_from_examples(examples_dir, params, pipeline=None) -> tuple[TemplateStore, list[str]]:
    """Build a template store from per-technique example files.

    Each ``<technique_id>.txt`` holds one procedure example per line; every
    line runs through the full parse pipeline into a single-technique graph
    before template initialization.  Per-file failures are collected, not
    fatal.  Returns the store plus any error strings.
    """
    from pathlib import Path

    if pipeline is None:
        from .pipeline import extract_graph_from_text

        pipeline = extract_graph_from_text

    store = TemplateStore()
    errors: list[str] = []
    for path in sorted(Path(examples_dir).glob("*.txt")):
        technique_id = path.stem.split("__")[0]
        name = path.stem.split("__")[1].replace("_", " ") if "__" in path.stem else ""
        try:
            graphs = []
            for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
                line = line.strip()
                if not line:
                    continue
                graphs.append(pipeline(line, doc_id=f"{technique_id}#{i}"))
            if not graphs:
                raise TemplateError("no example lines")
            store.add(init_template(technique_id, graphs, params, name=name))
        except Exception as exc:  # noqa: BLE001 - per-file isolation
            errors.append(f"{path.name}: {exc}")
    return store, errors
