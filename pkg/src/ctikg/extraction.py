"""Attack-relevant entity and dependency extraction.

Builds a per-report attack graph out of a parsed document: IoC
placeholders and gazetteer hits become typed entities, intra-sentence
dependencies connect each entity to its nearest neighbour, co-reference
chains merge mentions of the same thing, and a final simplification pass
collapses nodes that plainly describe one entity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

from .ioc import IoCMatch

ENTITY_TYPES = ("actor", "executable", "file", "network_connection", "registry", "other")

# IoC category -> entity type.  CVE identifiers keep their category so the
# graph can still tell vulnerabilities apart from other "other" nodes.
CATEGORY_ETYPE = {
    "ipv4": "network_connection",
    "ipv6": "network_connection",
    "url": "network_connection",
    "domain": "network_connection",
    "email": "network_connection",
    "md5": "file",
    "sha1": "file",
    "sha256": "file",
    "file_path_windows": "file",
    "file_path_unix": "file",
    "filename_document": "file",
    "filename_executable": "executable",
    "registry_key": "registry",
    "cve": "other",
}

PRONOUNS = {"it", "its", "this", "that", "they", "them", "these", "those", "itself"}


class Mention(NamedTuple):
    sentence: int
    start: int  # token index, inclusive
    end: int    # token index, exclusive


@dataclass
class Entity:
    id: str
    etype: str
    ioc_terms: set[str] = field(default_factory=set)
    nlp_terms: set[str] = field(default_factory=set)
    mentions: list[Mention] = field(default_factory=list)
    ioc_category: str | None = None

    def first_mention(self) -> Mention:
        return min(self.mentions) if self.mentions else Mention(0, 0, 0)


@dataclass
class Dependency:
    src: str
    dst: str
    sentence: int
    weight: int = 1


@dataclass
class AttackGraph:
    doc_id: str
    nodes: dict[str, Entity] = field(default_factory=dict)
    edges: list[Dependency] = field(default_factory=list)

    def adjacency(self, directed: bool = True) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for e in self.edges:
            adj[e.src].append(e.dst)
            if not directed:
                adj[e.dst].append(e.src)
        return adj

    def sorted_nodes(self) -> list[Entity]:
        return sorted(self.nodes.values(), key=lambda n: n.id)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "nodes": [
                {
                    "id": n.id,
                    "etype": n.etype,
                    "ioc_terms": sorted(n.ioc_terms),
                    "nlp_terms": sorted(n.nlp_terms),
                }
                for n in self.sorted_nodes()
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "weight": e.weight}
                for e in sorted(self.edges, key=lambda e: (e.src, e.dst))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "AttackGraph":
        g = cls(doc_id=data.get("doc_id", ""))
        for nd in data["nodes"]:
            etype = nd["etype"]
            if etype not in ENTITY_TYPES:
                raise ValueError(f"unknown entity type in graph JSON: {etype!r}")
            g.nodes[nd["id"]] = Entity(
                id=nd["id"],
                etype=etype,
                ioc_terms=set(nd.get("ioc_terms", [])),
                nlp_terms=set(nd.get("nlp_terms", [])),
            )
        for ed in data.get("edges", []):
            if ed["src"] not in g.nodes or ed["dst"] not in g.nodes:
                raise ValueError(f"edge references unknown node: {ed}")
            g.edges.append(
                Dependency(src=ed["src"], dst=ed["dst"], sentence=-1,
                           weight=int(ed.get("weight", 1)))
            )
        return g

    @classmethod
    def from_json(cls, text: str) -> "AttackGraph":
        return cls.from_dict(json.loads(text))


class Gazetteer:
    """Case-insensitive phrase table mapping attack vocabulary to entity types."""

    def __init__(self, entries: dict[str, str]):
        self.phrases: dict[tuple[str, ...], str] = {}
        for phrase, etype in entries.items():
            if etype not in ENTITY_TYPES:
                raise ValueError(f"gazetteer maps {phrase!r} to unknown type {etype!r}")
            key = tuple(_norm_token(t) for t in phrase.split())
            self.phrases[key] = etype
        self.max_len = max((len(k) for k in self.phrases), default=1)

    @classmethod
    def from_file(cls, path) -> "Gazetteer":
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                try:
                    phrase, etype = line.split("\t")
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected 'phrase<TAB>etype'") from None
                entries[phrase.strip()] = etype.strip()
        return cls(entries)


def _norm_token(text: str) -> str:
    """Lowercase and strip a naive plural so 'macros' hits the 'macro' entry."""
    t = text.casefold()
    if len(t) > 3 and t.endswith("s") and not t.endswith("ss") and not t.endswith("us"):
        return t[:-1]
    return t


def extract_entities(parsed, ioc_table, gazetteer: Gazetteer) -> list[Entity]:
    """Turn IoC placeholders and gazetteer hits into typed entities.

    Every protected IoC becomes its own entity (duplicates merge later in
    simplification); remaining tokens are scanned against the gazetteer,
    longest phrase first.  Entity ids follow first-mention order.
    """
    entities: list[Entity] = []
    ioc_token_spans: set[tuple[int, int]] = set()

    # Locate each placeholder's token by character span.
    for span, match in ioc_table:
        loc = _locate_token(parsed, span)
        if loc is None:
            continue
        sent_idx, tok_idx = loc
        ioc_token_spans.add((sent_idx, tok_idx))
        etype = CATEGORY_ETYPE[match.category]
        entities.append(
            Entity(
                id="",
                etype=etype,
                ioc_terms={match.value.casefold()},
                mentions=[Mention(sent_idx, tok_idx, tok_idx + 1)],
                ioc_category=match.category,
            )
        )

    # Gazetteer scan over the remaining tokens, longest window first.
    for sent_idx, sentence in enumerate(parsed.sentences):
        tokens = sentence.tokens
        i = 0
        while i < len(tokens):
            if (sent_idx, i) in ioc_token_spans:
                i += 1
                continue
            hit = None
            for width in range(min(gazetteer.max_len, len(tokens) - i), 0, -1):
                if any((sent_idx, j) in ioc_token_spans for j in range(i, i + width)):
                    continue
                if width == 1 and tokens[i].pos not in ("NOUN", "ADJ", "NUM", "X"):
                    continue  # bare verbs/pronouns never carry an entity
                key = tuple(_norm_token(tokens[j].text) for j in range(i, i + width))
                if key in gazetteer.phrases:
                    hit = (width, gazetteer.phrases[key])
                    break
            if hit is None:
                i += 1
                continue
            width, etype = hit
            surface = " ".join(tokens[j].text for j in range(i, i + width)).casefold()
            entities.append(
                Entity(
                    id="",
                    etype=etype,
                    nlp_terms={surface},
                    mentions=[Mention(sent_idx, i, i + width)],
                )
            )
            i += width

    entities.sort(key=lambda e: e.first_mention())
    for idx, entity in enumerate(entities):
        entity.id = f"e{idx:03d}"
    return entities


def _locate_token(parsed, span: tuple[int, int]):
    """Find the (sentence, token) whose character span covers the placeholder."""
    begin, end = span
    for sent_idx, sentence in enumerate(parsed.sentences):
        if not (sentence.start <= begin < sentence.end or sentence.start < end <= sentence.end):
            continue
        for tok_idx, tok in enumerate(sentence.tokens):
            if tok.start <= begin < tok.end or begin <= tok.start < end:
                return sent_idx, tok_idx
    return None


def link_explicit_corefs(entities: list[Entity], parsed) -> list[set[str]]:
    """Partition entities by explicit co-reference chains.

    Entities whose mentions fall in the same chain share a cell.  Chain
    mentions that hit no entity (pronouns) are recorded as extra mentions
    of the earliest entity in the chain so dependency extraction can see
    them.  Returns disjoint cells covering every entity id.
    """
    parent: dict[str, str] = {e.id: e.id for e in entities}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    by_id = {e.id: e for e in entities}
    for chain in parsed.coref_chains:
        members: list[str] = []
        unmatched: list[Mention] = []
        for cm in chain:
            m = Mention(cm.sentence, cm.token_start, cm.token_end)
            owner = _entity_at(entities, m)
            if owner is not None:
                members.append(owner.id)
            else:
                unmatched.append(m)
        for a, b in zip(members, members[1:]):
            union(a, b)
        if members and unmatched:
            host = by_id[min(members)]
            for m in unmatched:
                if m not in host.mentions:
                    host.mentions.append(m)

    cells: dict[str, set[str]] = {}
    for eid in parent:
        cells.setdefault(find(eid), set()).add(eid)
    return sorted(cells.values(), key=min)


def _entity_at(entities: list[Entity], mention: Mention):
    for e in entities:
        for m in e.mentions:
            if m.sentence == mention.sentence and m.start < mention.end and mention.start < m.end:
                return e
    return None


def extract_intra_sentence_dependencies(
    entities: list[Entity], parsed, alpha: float = 0.5
) -> list[Dependency]:
    """Connect each entity to its nearest other entity within a sentence.

    Distance mixes dependency-tree hops to the lowest common ancestor with
    plain token-position distance (weight alpha on the tree part).  A
    sentence with a single entity contributes nothing.  Edge direction
    follows narrative order: earlier mention to later mention.
    """
    per_sentence: dict[int, list[tuple[Entity, Mention]]] = {}
    for e in entities:
        for m in e.mentions:
            per_sentence.setdefault(m.sentence, []).append((e, m))

    deps: list[Dependency] = []
    for sent_idx in sorted(per_sentence):
        occupants = per_sentence[sent_idx]
        distinct = {e.id for e, _ in occupants}
        if len(distinct) < 2:
            continue
        sentence = parsed.sentences[sent_idx]
        heads = [t.head for t in sentence.tokens]

        def mention_head(m: Mention) -> int:
            for i in range(m.start, m.end):
                if not (m.start <= heads[i] < m.end) or heads[i] == i:
                    return i
            return m.end - 1

        # Pairwise distances between entities (min over their mention pairs).
        dist: dict[tuple[str, str], float] = {}
        pos: dict[tuple[str, str], tuple[Mention, Mention]] = {}
        for (ea, ma), (eb, mb) in _pairs(occupants):
            if ea.id == eb.id:
                continue
            ha, hb = mention_head(ma), mention_head(mb)
            hops = _lca_hops(heads, ha, hb)
            gap = abs(ha - hb)
            d = alpha * hops + (1.0 - alpha) * gap
            key = (min(ea.id, eb.id), max(ea.id, eb.id))
            if key not in dist or d < dist[key]:
                dist[key] = d
                pos[key] = (ma, mb) if ea.id <= eb.id else (mb, ma)

        # Each entity picks its nearest neighbour; mutual picks dedupe.
        chosen: set[tuple[str, str]] = set()
        for eid in sorted(distinct):
            candidates = [
                (d, key) for key, d in dist.items() if eid in key
            ]
            if not candidates:
                continue
            _, key = min(candidates, key=lambda item: (item[0], item[1]))
            chosen.add(key)

        for key in sorted(chosen):
            ma, mb = pos[key]
            a_id, b_id = key
            if (ma.sentence, ma.start) <= (mb.sentence, mb.start):
                src, dst = a_id, b_id
            else:
                src, dst = b_id, a_id
            deps.append(Dependency(src=src, dst=dst, sentence=sent_idx))
    return deps


def _pairs(items):
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            yield items[i], items[j]


def _lca_hops(heads: list[int], a: int, b: int) -> int:
    """Summed hop counts from two tokens to their lowest common ancestor."""

    def path(i: int) -> list[int]:
        out = [i]
        seen = {i}
        while heads[i] != i:
            i = heads[i]
            if i in seen:
                break
            seen.add(i)
            out.append(i)
        return out

    pa, pb = path(a), path(b)
    ancestors = {tok: depth for depth, tok in enumerate(pa)}
    for depth_b, tok in enumerate(pb):
        if tok in ancestors:
            return ancestors[tok] + depth_b
    return len(pa) + len(pb)


ETYPE_RANK = {etype: i for i, etype in enumerate(ENTITY_TYPES)}


def build_attack_graph(
    entities: list[Entity],
    deps: list[Dependency],
    partition: list[set[str]],
    doc_id: str = "",
) -> AttackGraph:
    """Collapse co-reference cells into nodes and fold duplicate edges.

    IoC-typed members win the type vote (IoC categories are higher
    precision than gazetteer hits), ties keep the first mention's type.
    Self-loops produced by a merge are dropped.
    """
    by_id = {e.id: e for e in entities}
    rep: dict[str, str] = {}
    merged: dict[str, Entity] = {}
    for cell in partition:
        members = sorted(cell, key=lambda eid: (by_id[eid].first_mention(), eid))
        head = members[0]
        ioc_typed = [by_id[m] for m in members if by_id[m].ioc_category is not None]
        etype = ioc_typed[0].etype if ioc_typed else by_id[head].etype
        node = Entity(
            id=head,
            etype=etype,
            ioc_category=ioc_typed[0].ioc_category if ioc_typed else None,
        )
        for m in members:
            rep[m] = head
            node.ioc_terms |= by_id[m].ioc_terms
            node.nlp_terms |= by_id[m].nlp_terms
            node.mentions.extend(by_id[m].mentions)
        node.mentions.sort()
        node.nlp_terms = _dedup_case_insensitive(node.nlp_terms)
        node.ioc_terms = _dedup_case_insensitive(node.ioc_terms)
        merged[head] = node

    graph = AttackGraph(doc_id=doc_id, nodes=merged)
    folded: dict[tuple[str, str], Dependency] = {}
    for d in deps:
        src, dst = rep[d.src], rep[d.dst]
        if src == dst:
            continue
        key = (src, dst)
        if key in folded:
            folded[key].weight += d.weight
            folded[key].sentence = min(folded[key].sentence, d.sentence)
        else:
            folded[key] = Dependency(src=src, dst=dst, sentence=d.sentence, weight=d.weight)
    graph.edges = [folded[k] for k in sorted(folded)]
    return graph


def _dedup_case_insensitive(terms: set[str]) -> set[str]:
    seen: dict[str, str] = {}
    for t in sorted(terms):
        seen.setdefault(t.casefold(), t)
    return set(seen.values())


def merge_implicit_corefs(
    graph: AttackGraph, node_threshold: float = 0.65, gamma: float = 0.5
) -> AttackGraph:
    """Merge node pairs of equal type whose alignment score clears the threshold.

    Highest-scoring pair first, rescoring after every merge until no pair
    qualifies, so the result is a fixpoint (idempotent by construction).
    Only pairs touching a merged node can change score, so the scan is
    incremental; term-level similarities are memoized since mention-heavy
    graphs repeat the same vocabulary.
    """
    from .align import AlignParams, term_similarity

    params = AlignParams(gamma=gamma, node_threshold=node_threshold)
    g = AttackGraph(
        doc_id=graph.doc_id,
        nodes={
            nid: Entity(
                id=n.id,
                etype=n.etype,
                ioc_terms=set(n.ioc_terms),
                nlp_terms=set(n.nlp_terms),
                mentions=list(n.mentions),
                ioc_category=n.ioc_category,
            )
            for nid, n in graph.nodes.items()
        },
        edges=[Dependency(e.src, e.dst, e.sentence, e.weight) for e in graph.edges],
    )

    term_memo: dict[tuple[str, str], float] = {}

    def sim(a: str, b: str) -> float:
        key = (a, b) if a <= b else (b, a)
        cached = term_memo.get(key)
        if cached is None:
            cached = term_memo[key] = term_similarity(a, b)
        return cached

    def set_sim(terms_a, terms_b) -> float:
        if not terms_a or not terms_b:
            return 0.0
        return max(sim(x, y) for x in terms_a for y in terms_b)

    def pair_score(a: Entity, b: Entity) -> float | None:
        if a.etype != b.etype:
            return None
        s = params.gamma + (1.0 - params.gamma) * max(
            set_sim(a.ioc_terms, b.ioc_terms), set_sim(a.nlp_terms, b.nlp_terms)
        )
        return s if s >= node_threshold else None

    scores: dict[tuple[str, str], float] = {}
    ids = sorted(g.nodes)
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            s = pair_score(g.nodes[ids[i]], g.nodes[ids[j]])
            if s is not None:
                scores[(ids[i], ids[j])] = s

    while scores:
        best_score = max(scores.values())
        keep, drop = min(pair for pair, s in scores.items() if s == best_score)
        _merge_nodes(g, keep, drop)
        scores = {
            pair: s for pair, s in scores.items()
            if keep not in pair and drop not in pair
        }
        merged = g.nodes[keep]
        for other in sorted(g.nodes):
            if other == keep:
                continue
            s = pair_score(merged, g.nodes[other])
            if s is not None:
                scores[(min(keep, other), max(keep, other))] = s
    return g


def _merge_nodes(g: AttackGraph, keep: str, drop: str) -> None:
    a, b = g.nodes[keep], g.nodes[drop]
    a.ioc_terms = _dedup_case_insensitive(a.ioc_terms | b.ioc_terms)
    a.nlp_terms = _dedup_case_insensitive(a.nlp_terms | b.nlp_terms)
    a.mentions = sorted(set(a.mentions) | set(b.mentions))
    if a.ioc_category is None:
        a.ioc_category = b.ioc_category
    del g.nodes[drop]
    folded: dict[tuple[str, str], Dependency] = {}
    for e in g.edges:
        src = keep if e.src == drop else e.src
        dst = keep if e.dst == drop else e.dst
        if src == dst:
            continue
        key = (src, dst)
        if key in folded:
            folded[key].weight += e.weight
            folded[key].sentence = min(folded[key].sentence, e.sentence)
        else:
            folded[key] = Dependency(src=src, dst=dst, sentence=e.sentence, weight=e.weight)
    g.edges = [folded[k] for k in sorted(folded)]
