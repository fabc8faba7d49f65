"""Technique knowledge graphs and graph exports.

A TKG is the attack graph plus annotations: every node aligned to a
template node is offered the template's alternative terms, and each match
records which graph nodes it covers.  The base graph is never mutated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .extraction import AttackGraph


@dataclass
class Annotation:
    node: str
    technique_id: str
    template_node: str
    alt_ioc_terms: list[str]
    alt_nlp_terms: list[str]


@dataclass
class TechniqueSpan:
    technique_id: str
    nodes: list[str]
    total: float


@dataclass
class TKG:
    base: AttackGraph
    annotations: list[Annotation] = field(default_factory=list)
    technique_spans: list[TechniqueSpan] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = self.base.to_dict()
        data["annotations"] = [
            {
                "node": a.node,
                "technique_id": a.technique_id,
                "template_node": a.template_node,
                "alt_ioc_terms": sorted(a.alt_ioc_terms),
                "alt_nlp_terms": sorted(a.alt_nlp_terms),
            }
            for a in sorted(
                self.annotations, key=lambda a: (a.node, a.technique_id, a.template_node)
            )
        ]
        data["technique_spans"] = [
            {"technique_id": s.technique_id, "nodes": sorted(s.nodes), "total": s.total}
            for s in sorted(
                self.technique_spans, key=lambda s: (s.technique_id, -s.total, s.nodes)
            )
        ]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_tkg(graph: AttackGraph, matches, store) -> TKG:
    """Attach template knowledge to matched graph regions.

    Each aligned pair contributes the template node's terms minus the
    graph node's own; nodes matched by several techniques carry several
    annotations.
    """
    tkg = TKG(base=graph)
    for match in matches:
        template = store.get(match.technique_id)
        covered = []
        for tid, gid in sorted(match.assignment.pairs.items()):
            if gid not in graph.nodes:
                raise ValueError(f"match references unknown graph node {gid!r}")
            if tid not in template.nodes:
                raise ValueError(
                    f"match references unknown template node {tid!r} "
                    f"in {match.technique_id}"
                )
            tnode = template.nodes[tid]
            gnode = graph.nodes[gid]
            own_ioc = {t.casefold() for t in gnode.ioc_terms}
            own_nlp = {t.casefold() for t in gnode.nlp_terms}
            tkg.annotations.append(
                Annotation(
                    node=gid,
                    technique_id=match.technique_id,
                    template_node=tid,
                    alt_ioc_terms=sorted(
                        t for t in tnode.ioc_terms if t.casefold() not in own_ioc
                    ),
                    alt_nlp_terms=sorted(
                        t for t in tnode.nlp_terms if t.casefold() not in own_nlp
                    ),
                )
            )
            covered.append(gid)
        tkg.technique_spans.append(
            TechniqueSpan(
                technique_id=match.technique_id,
                nodes=covered,
                total=match.assignment.total,
            )
        )
    return tkg


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _node_label(node) -> str:
    terms = sorted(node.ioc_terms) + sorted(node.nlp_terms)
    first = terms[0] if terms else node.id
    return f"{node.etype}|{first}"


def export_dot(obj: AttackGraph | TKG) -> str:
    """Deterministic Graphviz DOT rendering; TKG annotations become tooltips."""
    if isinstance(obj, TKG):
        graph = obj.base
        notes: dict[str, list[str]] = {}
        for a in sorted(obj.annotations, key=lambda a: (a.node, a.technique_id, a.template_node)):
            alts = ", ".join((a.alt_ioc_terms + a.alt_nlp_terms)[:4])
            notes.setdefault(a.node, []).append(f"{a.technique_id}: {alts}" if alts else a.technique_id)
    else:
        graph = obj
        notes = {}
    if not graph.nodes and not graph.edges:
        return "digraph g {}\n"
    lines = ["digraph g {"]
    for node in graph.sorted_nodes():
        attrs = [f'label="{_dot_escape(_node_label(node))}"']
        if node.id in notes:
            attrs.append(f'tooltip="{_dot_escape("; ".join(notes[node.id]))}"')
        lines.append(f'  "{node.id}" [{" ".join(attrs)}];')
    for edge in sorted(graph.edges, key=lambda e: (e.src, e.dst)):
        attrs = f' [weight={edge.weight}]' if edge.weight != 1 else ""
        lines.append(f'  "{edge.src}" -> "{edge.dst}"{attrs};')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_json(obj: AttackGraph | TKG) -> str:
    """JSON rendering matching the graph interchange schema.

    Plain attack graphs gain an empty annotations array so consumers can
    treat every export uniformly.
    """
    if isinstance(obj, TKG):
        return obj.to_json()
    data = obj.to_dict()
    data["annotations"] = []
    data["technique_spans"] = []
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def matches_to_dict(matches, store, graph: AttackGraph, params) -> list[dict]:
    """Match report JSON structure for a list of technique matches."""
    from .align import node_alignment_score

    out = []
    for m in matches:
        template = store.get(m.technique_id)
        out.append(
            {
                "technique_id": m.technique_id,
                "total": m.assignment.total,
                "node_score": m.assignment.node_score,
                "edge_score": m.assignment.edge_score,
                "pairs": [
                    {
                        "template_node": tid,
                        "graph_node": gid,
                        "score": node_alignment_score(
                            template.nodes[tid], graph.nodes[gid], params
                        ),
                    }
                    for tid, gid in sorted(m.assignment.pairs.items())
                ],
            }
        )
    return out
