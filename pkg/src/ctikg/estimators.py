"""Scikit-learn-shaped front doors for the pipeline.

ReportGraphExtractor is a stateless transformer from report texts to
attack graphs; TechniqueIdentifier fits technique templates from labeled
single-technique graphs (or loads a prepared store) and predicts the
techniques present in new graphs.  Both honor the get_params/set_params
contract so they compose with sklearn tooling.
"""

from __future__ import annotations

from .align import AlignParams, identify_techniques
from .base import ParamsMixin, check_graphs, check_score, check_texts
from .extraction import merge_implicit_corefs
from .pipeline import ExtractionConfig, extract_graph_from_text
from .templates import TemplateStore, init_template, update_template


class ReportGraphExtractor(ParamsMixin):
    """Transform report texts into simplified attack graphs."""

    def __init__(
        self,
        alpha: float = 0.5,
        gamma: float = 0.5,
        node_threshold: float = 0.65,
        simplify: bool = True,
        ruleset=None,
        gazetteer=None,
    ):
        self.alpha = alpha
        self.gamma = gamma
        self.node_threshold = node_threshold
        self.simplify = simplify
        self.ruleset = ruleset
        self.gazetteer = gazetteer

    def _config(self) -> ExtractionConfig:
        check_score("alpha", self.alpha)
        check_score("gamma", self.gamma)
        check_score("node_threshold", self.node_threshold)
        return ExtractionConfig(
            ruleset=self.ruleset,
            gazetteer=self.gazetteer,
            alpha=self.alpha,
            gamma=self.gamma,
            node_threshold=self.node_threshold,
            simplify=self.simplify,
        )

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        texts = check_texts(X)
        cfg = self._config()
        return [
            extract_graph_from_text(text, doc_id=f"doc{i:04d}", config=cfg)
            for i, text in enumerate(texts)
        ]

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)


class TechniqueIdentifier(ParamsMixin):
    """Identify techniques in attack graphs by template alignment.

    fit(X, y) initializes one template per distinct label from the graphs
    carrying it (in input order); alternatively pass a ready TemplateStore
    as ``templates``.  predict returns the sorted technique ids found per
    graph; use match() for full scored assignments.
    """

    def __init__(
        self,
        gamma: float = 0.5,
        node_threshold: float = 0.65,
        graph_threshold: float = 0.85,
        max_candidates_per_node: int = 5,
        path_mode: str = "directed",
        ablation: tuple[str, ...] = (),
        simplify_inputs: bool = False,
        templates: TemplateStore | None = None,
    ):
        self.gamma = gamma
        self.node_threshold = node_threshold
        self.graph_threshold = graph_threshold
        self.max_candidates_per_node = max_candidates_per_node
        self.path_mode = path_mode
        self.ablation = ablation
        self.simplify_inputs = simplify_inputs
        self.templates = templates

    def _params(self) -> AlignParams:
        return AlignParams(
            gamma=self.gamma,
            node_threshold=self.node_threshold,
            graph_threshold=self.graph_threshold,
            max_candidates_per_node=self.max_candidates_per_node,
            path_mode=self.path_mode,
            ablation=frozenset(self.ablation),
        )

    @property
    def store_(self) -> TemplateStore:
        store = getattr(self, "_store", None) or self.templates
        if store is None:
            raise RuntimeError("TechniqueIdentifier is not fitted and has no templates")
        return store

    def fit(self, X, y=None):
        if y is None:
            if self.templates is None:
                raise ValueError("fit needs labels y or a preloaded template store")
            self._store = self.templates
            return self
        graphs = check_graphs(X)
        labels = list(y)
        if len(labels) != len(graphs):
            raise ValueError(f"{len(graphs)} graphs but {len(labels)} labels")
        by_technique: dict[str, list] = {}
        for graph, label in zip(graphs, labels):
            by_technique.setdefault(str(label), []).append(graph)
        params = self._params()
        store = TemplateStore()
        for technique_id in sorted(by_technique):
            store.add(init_template(technique_id, by_technique[technique_id], params))
        self._store = store
        return self

    def partial_fit(self, X, y=None):
        """Aggregate intelligence: identify techniques in each graph and fold
        matched nodes back into the corresponding templates."""
        store = self.store_
        params = self._params()
        for graph in check_graphs(X):
            graph = self._prepare(graph, params)
            for match in identify_techniques(graph, store, params):
                store.replace(
                    update_template(store.get(match.technique_id), match, graph)
                )
        return self

    def _prepare(self, graph, params: AlignParams):
        if self.simplify_inputs and "no_simplification" not in params.ablation:
            return merge_implicit_corefs(
                graph, node_threshold=params.node_threshold, gamma=params.gamma
            )
        return graph

    def match(self, graph):
        params = self._params()
        return identify_techniques(self._prepare(graph, params), self.store_, params)

    def predict(self, X):
        return [
            sorted({m.technique_id for m in self.match(graph)})
            for graph in check_graphs(X)
        ]

    def fit_predict(self, X, y=None):
        return self.fit(X, y).predict(X)
