"""Synthetic technique templates and perturbed report graphs.

A labeled corpus of CTI reports is not something a test suite can ship,
so threshold sweeps and ablations run against generated data instead:
templates are instantiated into attack graphs with controlled noise
(term mutations, dropped nodes, rewired edges, duplicate co-reference
nodes) and labeled with the techniques they embed.

Every odd-indexed template is a *sibling* of its predecessor: nearly the
same node terms but reversed dependency structure.  Siblings are what
make the harnesses informative — they score high on node evidence alone
and only the edge level tells them apart, so loose thresholds and the
no_dependencies ablation both pay a measurable price.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .extraction import ENTITY_TYPES, AttackGraph, Dependency, Entity
from .templates import TechniqueTemplate, TemplateEdge, TemplateNode, TemplateStore

DEFAULT_SEED = 20240


def _rng_token(rng: random.Random, length: int) -> str:
    return "".join(rng.choices(string.ascii_lowercase, k=length))


def _rng_word(rng: random.Random) -> str:
    return _rng_token(rng, rng.randint(8, 14))


def _rng_ioc(rng: random.Random, etype: str) -> str:
    # Affixes stay short relative to the random core so two *distinct*
    # nodes of one type never look similar enough to co-reference-merge.
    core = _rng_token(rng, rng.randint(10, 16))
    if etype == "network_connection":
        return core + rng.choice(
            (".com", ".net", ".io", ".org", ".xyz", ".top", ".cc", ".su",
             ".ru", ".info", ".biz", ".site")
        )
    if etype == "registry":
        hive = rng.choice(("hklm", "hkcu", "hkcr", "hku"))
        return hive + "\\" + core + "\\" + _rng_token(rng, rng.randint(8, 14))
    if etype == "file":
        return core + rng.choice((".dll", ".dat", ".tmp", ".bin", ".cfg", ".db", ".log"))
    if etype == "executable":
        return core + rng.choice((".exe", ".ps1", ".bat", ".scr", ".msi"))
    return core


def _mutate_term(term: str, rng: random.Random, strength: float) -> str:
    chars = list(term)
    for i, c in enumerate(chars):
        if c.isalnum() and rng.random() < strength:
            chars[i] = rng.choice(string.ascii_lowercase)
    return "".join(chars)


def sibling_of(technique_index: int) -> int | None:
    """Index of the structural twin, if the template has one."""
    if technique_index % 2 == 1:
        return technique_index - 1
    return technique_index + 1


def synth_templates(count: int, seed: int = DEFAULT_SEED) -> TemplateStore:
    """A store of synthetic templates T9000..; odd indexes are siblings.

    A sibling shares its parent's shape and near-identical natural-language
    terms (similarity ~0.9) but carries fresh IoC terms and reversed edges.
    """
    rng = random.Random(seed)
    store = TemplateStore()
    templates: list[TechniqueTemplate] = []
    for i in range(count):
        technique_id = f"T9{i:03d}"
        parent = templates[i - 1] if i % 2 == 1 and i - 1 < len(templates) else None
        template = TechniqueTemplate(technique_id=technique_id, sources=1)
        if parent is None:
            template.name = f"synthetic {i}"
            n_nodes = rng.randint(3, 6)
            ids = [f"t{j:03d}" for j in range(n_nodes)]
            max_occur = 1
            for tid in ids:
                etype = rng.choice(ENTITY_TYPES)
                occur = rng.randint(1, 4)
                max_occur = max(max_occur, occur)
                node = TemplateNode(id=tid, etype=etype, occur=occur)
                # Mixed evidence: some nodes speak only IoC, some only prose,
                # so ablating either arm costs real signal.
                if rng.random() < 0.85:
                    node.nlp_terms = {_rng_word(rng) for _ in range(rng.randint(1, 2))}
                if rng.random() < 0.85 or not node.nlp_terms:
                    node.ioc_terms = {_rng_ioc(rng, etype)}
                template.nodes[tid] = node
            for a, b in zip(ids, ids[1:]):
                template.edges.append(TemplateEdge(src=a, dst=b, occur=rng.randint(1, 3)))
            for _ in range(rng.randint(0, 2)):
                a, b = rng.sample(ids, 2)
                if not any(e.src == a and e.dst == b for e in template.edges):
                    template.edges.append(TemplateEdge(src=a, dst=b, occur=1))
            template.sources = max_occur
        else:
            template.name = f"synthetic {i} (sibling of {parent.technique_id})"
            # Alternate the confusion channel per sibling pair: one pair is
            # near-identical in prose terms, the next in IoC terms.  Every
            # single-evidence ablation therefore keeps at least one live
            # false-positive channel; only edge structure separates both.
            prose_flavor = (i // 2) % 2 == 0
            for tid, pnode in parent.nodes.items():
                node = TemplateNode(id=tid, etype=pnode.etype, occur=pnode.occur)
                if prose_flavor:
                    node.nlp_terms = {
                        _mutate_term(t, rng, 0.08) for t in sorted(pnode.nlp_terms)
                    }
                    if node.nlp_terms:
                        if pnode.ioc_terms:
                            node.ioc_terms = {_rng_ioc(rng, pnode.etype)}
                    else:
                        node.ioc_terms = {
                            _mutate_term(t, rng, 0.08) for t in sorted(pnode.ioc_terms)
                        }
                else:
                    node.ioc_terms = {
                        _mutate_term(t, rng, 0.08) for t in sorted(pnode.ioc_terms)
                    }
                    if node.ioc_terms:
                        if pnode.nlp_terms:
                            node.nlp_terms = {_rng_word(rng)}
                    else:
                        node.nlp_terms = {
                            _mutate_term(t, rng, 0.08) for t in sorted(pnode.nlp_terms)
                        }
                template.nodes[tid] = node
            # Half the edges flip: sibling scores land between clean true
            # matches and noise, which is what makes thresholds matter.
            template.edges = [
                TemplateEdge(src=e.dst, dst=e.src, occur=e.occur)
                if idx % 2
                else TemplateEdge(src=e.src, dst=e.dst, occur=e.occur)
                for idx, e in enumerate(parent.edges)
            ]
            template.sources = parent.sources
        templates.append(template)
        store.add(template)
    return store


@dataclass
class PerturbParams:
    node_drop_p: float = 0.03
    term_mutation_p: float = 0.5
    term_mutation_strength: float = 0.10
    edge_rewire_p: float = 0.03
    duplicate_p: float = 0.45


def instantiate_template(
    template: TechniqueTemplate,
    rng: random.Random,
    perturb: PerturbParams,
    id_offset: int = 0,
) -> tuple[list[Entity], list[Dependency]]:
    """One noisy realization of a template as graph nodes and edges.

    Duplicate nodes model unresolved co-references: the duplicate takes
    over the original's outgoing edges and a lightly mutated copy of its
    terms, which graph simplification is expected to merge back.
    """
    keep = [tid for tid in sorted(template.nodes) if rng.random() >= perturb.node_drop_p]
    if not keep:
        keep = [sorted(template.nodes)[0]]
    mapping: dict[str, str] = {}
    entities: list[Entity] = []
    counter = id_offset

    def new_entity(tnode: TemplateNode) -> Entity:
        nonlocal counter
        ent = Entity(id=f"e{counter:03d}", etype=tnode.etype)
        counter += 1
        for term in sorted(tnode.ioc_terms):
            if rng.random() < perturb.term_mutation_p:
                term = _mutate_term(term, rng, perturb.term_mutation_strength)
            ent.ioc_terms.add(term)
        for term in sorted(tnode.nlp_terms):
            if rng.random() < perturb.term_mutation_p:
                term = _mutate_term(term, rng, perturb.term_mutation_strength)
            ent.nlp_terms.add(term)
        return ent

    for tid in keep:
        ent = new_entity(template.nodes[tid])
        mapping[tid] = ent.id
        entities.append(ent)

    edges: list[Dependency] = []
    for edge in template.edges:
        if edge.src not in mapping or edge.dst not in mapping:
            continue
        src, dst = mapping[edge.src], mapping[edge.dst]
        if rng.random() < perturb.edge_rewire_p and len(entities) > 2:
            dst = rng.choice([e.id for e in entities if e.id != src])
        if src != dst:
            edges.append(Dependency(src=src, dst=dst, sentence=0))

    # Split a few nodes into co-reference duplicates (unsimplified state).
    # The duplicate walks off with the outgoing edges and part of the term
    # evidence; a lightly mutated anchor term keeps the pair mergeable, so
    # co-reference simplification can reunite what the split broke.
    by_id = {e.id: e for e in entities}
    for tid in keep:
        if rng.random() >= perturb.duplicate_p:
            continue
        orig = by_id[mapping[tid]]
        dup = Entity(id=f"e{counter:03d}", etype=orig.etype)
        counter += 1
        for terms, dup_terms in ((orig.ioc_terms, dup.ioc_terms),
                                 (orig.nlp_terms, dup.nlp_terms)):
            ordered = sorted(terms)
            if len(ordered) > 1:
                moved = set(ordered[len(ordered) // 2:])
                dup_terms |= moved
                terms -= moved
        anchor_pool = sorted(orig.ioc_terms) or sorted(orig.nlp_terms)
        anchor = _mutate_term(anchor_pool[0], rng, 0.08)
        if orig.ioc_terms:
            dup.ioc_terms.add(anchor)
        else:
            dup.nlp_terms.add(anchor)
        entities.append(dup)
        for e in edges:
            if e.src == orig.id:
                e.src = dup.id
    return entities, edges


def synth_suite(
    store: TemplateStore,
    n_graphs: int = 24,
    techniques_per_graph: tuple[int, int] = (2, 3),
    seed: int = DEFAULT_SEED,
    perturb: PerturbParams | None = None,
) -> list[tuple[AttackGraph, set[str]]]:
    """Labeled multi-technique graphs, left unsimplified on purpose.

    Callers decide whether to run co-reference simplification, which is
    exactly what the ablation harness needs to toggle.  Sibling templates
    never co-occur in one graph: they exist to be confused for each other,
    and a graph containing both would make the labels ambiguous.
    """
    rng = random.Random(seed)
    perturb = perturb or PerturbParams()
    ordered = [t.technique_id for t in store]
    index_of = {tid: i for i, tid in enumerate(ordered)}
    suite: list[tuple[AttackGraph, set[str]]] = []
    for g_idx in range(n_graphs):
        k = rng.randint(*techniques_per_graph)
        labels: list[str] = []
        candidates = list(ordered)
        while candidates and len(labels) < k:
            pick = rng.choice(candidates)
            labels.append(pick)
            sib = sibling_of(index_of[pick])
            banned = {pick}
            if sib is not None and 0 <= sib < len(ordered):
                banned.add(ordered[sib])
            candidates = [c for c in candidates if c not in banned]
        graph = AttackGraph(doc_id=f"synth{g_idx:03d}")
        offset = 0
        prev_tail: str | None = None
        for technique_id in labels:
            entities, edges = instantiate_template(
                store.get(technique_id), rng, perturb, id_offset=offset
            )
            offset += len(entities) + 2
            for e in entities:
                graph.nodes[e.id] = e
            graph.edges.extend(edges)
            if prev_tail is not None and entities:
                graph.edges.append(
                    Dependency(src=prev_tail, dst=entities[0].id, sentence=0)
                )
            if entities:
                prev_tail = entities[-1].id
        suite.append((graph, set(labels)))
    return suite
