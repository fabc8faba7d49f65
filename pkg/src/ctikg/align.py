"""Graph alignment scoring and technique identification.

Technique templates are matched against attack graphs with a fuzzy,
two-level alignment score: a node level that compares entity types and
term sets, and an edge level that checks whether template dependencies
are realized as short paths in the attack graph.  Both levels live in
[0, 1] and average into the overall score that is gated by a threshold.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .extraction import AttackGraph, Entity
    from .templates import TechniqueTemplate, TemplateNode

INF_HOPS = math.inf

ABLATION_FLAGS = frozenset({"no_ioc", "no_nlp", "no_dependencies", "no_simplification"})

ENUMERATION_BUDGET = 10**6


class BudgetPrunedWarning(UserWarning):
    """Candidate lists were pruned because the assignment space was too large."""


@dataclass(frozen=True)
class AlignParams:
    """Knobs for node/graph alignment.

    gamma is the base score a type-matched node pair earns before term
    similarity is considered; node_threshold gates alignment candidates,
    graph_threshold gates reported technique matches.
    """

    gamma: float = 0.5
    node_threshold: float = 0.65
    graph_threshold: float = 0.85
    max_candidates_per_node: int = 5
    path_mode: str = "directed"
    ablation: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("gamma", "node_threshold", "graph_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.max_candidates_per_node < 1:
            raise ValueError("max_candidates_per_node must be >= 1")
        if self.path_mode not in ("directed", "undirected"):
            raise ValueError(f"unknown path_mode: {self.path_mode!r}")
        unknown = set(self.ablation) - ABLATION_FLAGS
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
        object.__setattr__(self, "ablation", frozenset(self.ablation))

    def with_ablation(self, *flags: str) -> "AlignParams":
        return replace(self, ablation=frozenset(flags))


@dataclass
class Assignment:
    """A partial, injective mapping of template nodes onto graph nodes."""

    pairs: dict[str, str] = field(default_factory=dict)
    node_score: float = 0.0
    edge_score: float = 0.0
    total: float = 0.0


@dataclass
class TechniqueMatch:
    technique_id: str
    assignment: Assignment
    matched_nodes: tuple[str, ...]
    budget_pruned: bool = False


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance, two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def term_similarity(a: str, b: str) -> float:
    """Character-level similarity: 1 - edit_distance / max length, case-folded.

    Two empty strings are identical (1.0); one empty string shares nothing
    with a non-empty one (0.0).
    """
    a = a.casefold()
    b = b.casefold()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 1.0 - edit_distance(a, b) / max(len(a), len(b))


def set_similarity(terms_a, terms_b) -> float:
    """Best pairwise term similarity between two term sets; empty side scores 0."""
    if not terms_a or not terms_b:
        return 0.0
    return max(term_similarity(a, b) for a in terms_a for b in terms_b)


def score_term_sets(
    etype_a: str,
    ioc_a,
    nlp_a,
    etype_b: str,
    ioc_b,
    nlp_b,
    params: AlignParams,
) -> float:
    """Node alignment score over (etype, ioc_terms, nlp_terms) tuples.

    Different entity types score exactly 0; matching types earn the base
    gamma plus the remaining weight scaled by the best attribute similarity.
    """
    if etype_a != etype_b:
        return 0.0
    ioc_sim = 0.0 if "no_ioc" in params.ablation else set_similarity(ioc_a, ioc_b)
    nlp_sim = 0.0 if "no_nlp" in params.ablation else set_similarity(nlp_a, nlp_b)
    sim = max(ioc_sim, nlp_sim)
    return params.gamma + (1.0 - params.gamma) * sim


def node_alignment_score(tnode: TemplateNode, entity: Entity, params: AlignParams) -> float:
    return score_term_sets(
        tnode.etype, tnode.ioc_terms, tnode.nlp_terms,
        entity.etype, entity.ioc_terms, entity.nlp_terms,
        params,
    )


def candidate_lists(
    template: TechniqueTemplate, graph: AttackGraph, params: AlignParams
) -> dict[str, list[tuple[str, float]]]:
    """Per-template-node candidate graph nodes scoring at or above the node threshold.

    Lists are sorted by descending score, ties broken by graph node id, and
    truncated to max_candidates_per_node.
    """
    graph_nodes = sorted(graph.nodes.values(), key=lambda n: n.id)
    out: dict[str, list[tuple[str, float]]] = {}
    for tnode in template.sorted_nodes():
        scored = []
        for gnode in graph_nodes:
            s = node_alignment_score(tnode, gnode, params)
            if s >= params.node_threshold:
                scored.append((gnode.id, s))
        scored.sort(key=lambda item: (-item[1], item[0]))
        out[tnode.id] = scored[: params.max_candidates_per_node]
    return out


def min_hop(graph: AttackGraph, u: str, v: str, path_mode: str = "directed") -> float:
    """Breadth-first hop count from u to v; unreachable pairs are infinite."""
    if u not in graph.nodes or v not in graph.nodes:
        raise KeyError(f"unknown node: {u if u not in graph.nodes else v}")
    if u == v:
        return 0
    adj = graph.adjacency(directed=(path_mode == "directed"))
    seen = {u}
    frontier = [u]
    hops = 0
    while frontier:
        hops += 1
        nxt = []
        for node in frontier:
            for nb in adj.get(node, ()):
                if nb == v:
                    return hops
                if nb not in seen:
                    seen.add(nb)
                    nxt.append(nb)
        frontier = nxt
    return INF_HOPS


def hop_matrix(graph: AttackGraph, path_mode: str = "directed") -> dict[str, dict[str, float]]:
    """All-pairs BFS hop counts; missing entries mean unreachable."""
    adj = graph.adjacency(directed=(path_mode == "directed"))
    out: dict[str, dict[str, float]] = {}
    for src in graph.nodes:
        dist = {src: 0}
        frontier = [src]
        hops = 0
        while frontier:
            hops += 1
            nxt = []
            for node in frontier:
                for nb in adj.get(node, ()):
                    if nb not in dist:
                        dist[nb] = hops
                        nxt.append(nb)
            frontier = nxt
        out[src] = dist
    return out


def node_level_score(
    template: TechniqueTemplate,
    graph: AttackGraph,
    pairs: dict[str, str],
    params: AlignParams,
) -> float:
    """Occurrence-weighted mean of aligned node scores over all template nodes."""
    denom = sum(n.occur for n in template.nodes.values())
    if denom == 0:
        return 0.0
    num = 0.0
    for tid, gid in pairs.items():
        tnode = template.nodes[tid]
        num += node_alignment_score(tnode, graph.nodes[gid], params) * tnode.occur
    return num / denom


def edge_level_score(
    template: TechniqueTemplate,
    graph: AttackGraph,
    pairs: dict[str, str],
    params: AlignParams,
    hops: dict[str, dict[str, float]] | None = None,
) -> float:
    """Occurrence-weighted edge alignment: endpoint scores damped by graph hop distance.

    Unreachable endpoint images contribute nothing.  When edge evidence is
    ablated (or the template simply has no edges) the node-level score is
    carried through so the overall score reduces to node evidence alone.
    """
    if "no_dependencies" in params.ablation or not template.edges:
        return node_level_score(template, graph, pairs, params)
    denom = sum(e.occur for e in template.edges)
    num = 0.0
    for edge in template.edges:
        k = pairs.get(edge.src)
        l = pairs.get(edge.dst)
        if k is None or l is None:
            continue
        if hops is not None:
            c_min = hops.get(k, {}).get(l, INF_HOPS)
        else:
            c_min = min_hop(graph, k, l, params.path_mode)
        if c_min == 0 or math.isinf(c_min):
            continue  # self-image (defensive) or unreachable endpoints
        gi = node_alignment_score(template.nodes[edge.src], graph.nodes[k], params)
        gj = node_alignment_score(template.nodes[edge.dst], graph.nodes[l], params)
        num += (gi * gj / c_min) * edge.occur
    return num / denom


def graph_alignment_score(
    template: TechniqueTemplate,
    graph: AttackGraph,
    pairs: dict[str, str],
    params: AlignParams,
    hops: dict[str, dict[str, float]] | None = None,
) -> Assignment:
    """Fill an Assignment with node, edge, and overall scores for the given pairs."""
    n = node_level_score(template, graph, pairs, params)
    e = edge_level_score(template, graph, pairs, params, hops=hops)
    return Assignment(pairs=dict(pairs), node_score=n, edge_score=e, total=(n + e) / 2.0)


def _list_entropy(candidates: list[tuple[str, float]]) -> float:
    total = sum(score for _, score in candidates)
    if total <= 0.0 or len(candidates) < 2:
        return 0.0
    h = 0.0
    for _, score in candidates:
        if score > 0.0:
            p = score / total
            h -= p * math.log(p)
    return h


def _prune_to_budget(
    lists: dict[str, list[tuple[str, float]]]
) -> tuple[dict[str, list[tuple[str, float]]], bool]:
    """Truncate the least informative candidate lists until the product of
    list sizes fits the enumeration budget."""

    def product(ls):
        p = 1
        for v in ls.values():
            p *= max(1, len(v))
        return p

    if product(lists) <= ENUMERATION_BUDGET:
        return lists, False
    order = sorted(lists, key=lambda tid: (_list_entropy(lists[tid]), tid))
    pruned = dict(lists)
    for tid in order:
        if product(pruned) <= ENUMERATION_BUDGET:
            break
        if len(pruned[tid]) > 1:
            pruned[tid] = pruned[tid][:1]
    return pruned, True


def _enumerate_assignments(
    template: TechniqueTemplate,
    lists: dict[str, list[tuple[str, float]]],
    on_assignment,
) -> None:
    """Walk every injective assignment over the candidate lists.

    Each template node either takes one of its candidates or stays
    unassigned; the node-score numerator accumulates incrementally and
    edge terms are settled per leaf.
    """
    tids = sorted(lists)
    node_denom = sum(n.occur for n in template.nodes.values())
    chosen: dict[str, str] = {}
    used: set[str] = set()

    def recurse(idx: int, node_num: float):
        if idx == len(tids):
            on_assignment(dict(chosen), node_num / node_denom if node_denom else 0.0)
            return
        tid = tids[idx]
        occur = template.nodes[tid].occur
        for gid, score in lists[tid]:
            if gid in used:
                continue
            chosen[tid] = gid
            used.add(gid)
            recurse(idx + 1, node_num + score * occur)
            used.discard(gid)
            del chosen[tid]
        recurse(idx + 1, node_num)  # leave this template node unassigned

    recurse(0, 0.0)


def _edge_score_at_leaf(
    template: TechniqueTemplate,
    pairs: dict[str, str],
    pair_scores: dict[tuple[str, str], float],
    hops: dict[str, dict[str, float]],
    node_score: float,
    params: AlignParams,
) -> float:
    if "no_dependencies" in params.ablation or not template.edges:
        return node_score
    denom = sum(e.occur for e in template.edges)
    num = 0.0
    for edge in template.edges:
        k = pairs.get(edge.src)
        l = pairs.get(edge.dst)
        if k is None or l is None:
            continue
        c_min = hops.get(k, {}).get(l)
        if c_min is None or c_min == 0:
            continue
        num += (pair_scores[(edge.src, k)] * pair_scores[(edge.dst, l)] / c_min) * edge.occur
    return num / denom


def align_template(
    template: TechniqueTemplate,
    graph: AttackGraph,
    params: AlignParams,
    min_total: float = 0.0,
) -> tuple[list[Assignment], bool]:
    """Enumerate assignments of one template onto a graph.

    Returns assignments with a non-empty pair map whose total reaches
    min_total, deduplicated by matched graph-node set (best total kept),
    plus a flag saying whether candidate lists had to be pruned.
    """
    if not template.nodes or not graph.nodes:
        return [], False
    lists = candidate_lists(template, graph, params)
    lists, pruned = _prune_to_budget(lists)
    if pruned:
        warnings.warn(
            f"assignment space for {template.technique_id} exceeded "
            f"{ENUMERATION_BUDGET}; pruned candidate lists to top-1",
            BudgetPrunedWarning,
            stacklevel=2,
        )
    hops = hop_matrix(graph, params.path_mode)
    pair_scores = {
        (tid, gid): score for tid, cands in lists.items() for gid, score in cands
    }

    # Cheap optimistic bound: best candidate per node, best-case hop of 1.
    if min_total > 0.0:
        node_denom = sum(n.occur for n in template.nodes.values())
        best_node = {
            tid: (cands[0][1] if cands else 0.0) for tid, cands in lists.items()
        }
        ub_n = (
            sum(best_node[tid] * template.nodes[tid].occur for tid in lists) / node_denom
            if node_denom
            else 0.0
        )
        if template.edges and "no_dependencies" not in params.ablation:
            edge_denom = sum(e.occur for e in template.edges)
            ub_e = (
                sum(
                    best_node[e.src] * best_node[e.dst] * e.occur
                    for e in template.edges
                )
                / edge_denom
            )
        else:
            ub_e = ub_n
        if (ub_n + ub_e) / 2.0 < min_total:
            return [], pruned

    best_by_nodes: dict[frozenset[str], Assignment] = {}

    def consider(pairs: dict[str, str], node_score: float):
        if not pairs:
            return
        edge_score = _edge_score_at_leaf(
            template, pairs, pair_scores, hops, node_score, params
        )
        total = (node_score + edge_score) / 2.0
        if total < min_total:
            return
        key = frozenset(pairs.values())
        cur = best_by_nodes.get(key)
        if cur is None or total > cur.total:
            best_by_nodes[key] = Assignment(
                pairs=pairs, node_score=node_score, edge_score=edge_score, total=total
            )

    _enumerate_assignments(template, lists, consider)
    out = sorted(
        best_by_nodes.values(),
        key=lambda a: (-a.total, sorted(a.pairs.values()), sorted(a.pairs.items())),
    )
    return out, pruned


def identify_techniques(
    graph: AttackGraph,
    templates,
    params: AlignParams,
) -> list[TechniqueMatch]:
    """Find template subgraph matches scoring at or above the graph threshold.

    Matches from different templates may overlap in graph nodes, and one
    technique can match several distinct node sets.  Output is sorted by
    (technique_id, descending total).
    """
    matches: list[TechniqueMatch] = []
    for template in sorted(templates, key=lambda t: t.technique_id):
        assignments, pruned = align_template(
            template, graph, params, min_total=params.graph_threshold
        )
        for a in assignments:
            matches.append(
                TechniqueMatch(
                    technique_id=template.technique_id,
                    assignment=a,
                    matched_nodes=tuple(sorted(a.pairs.values())),
                    budget_pruned=pruned,
                )
            )
    matches.sort(key=lambda m: (m.technique_id, -m.assignment.total, m.matched_nodes))
    return matches


def best_total(matches: list[TechniqueMatch]) -> float:
    """Highest overall score among matches; 0.0 when there are none."""
    return max((m.assignment.total for m in matches), default=0.0)


def brute_force_align(
    template: TechniqueTemplate, graph: AttackGraph, params: AlignParams
) -> Assignment:
    """Exhaustive search over every injective partial assignment.

    Test oracle: no candidate lists, no thresholds, no pruning.  Guarded to
    small instances because the space grows factorially.
    """
    if len(template.nodes) > 6 or len(graph.nodes) > 10:
        raise ValueError(
            f"brute force guarded to <=6 template / <=10 graph nodes, "
            f"got {len(template.nodes)}/{len(graph.nodes)}"
        )
    tids = sorted(template.nodes)
    gids = sorted(graph.nodes)
    hops = hop_matrix(graph, params.path_mode)
    best = graph_alignment_score(template, graph, {}, params, hops=hops)
    for m in range(1, min(len(tids), len(gids)) + 1):
        for t_subset in itertools.combinations(tids, m):
            for g_perm in itertools.permutations(gids, m):
                pairs = dict(zip(t_subset, g_perm))
                a = graph_alignment_score(template, graph, pairs, params, hops=hops)
                if a.total > best.total:
                    best = a
    return best
