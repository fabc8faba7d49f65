"""Threshold sweeps and ablation studies over labeled graph suites.

Both harnesses score technique identification with micro-averaged
precision/recall/F1 across (graph, technique) pairs and report wall time,
mirroring how threshold choices trade accuracy against analysis cost.
"""

from __future__ import annotations

import time
from dataclasses import replace

from .align import AlignParams, identify_techniques
from .extraction import AttackGraph, merge_implicit_corefs

ABLATION_VARIANTS = ("full", "no_ioc", "no_nlp", "no_dependencies", "no_simplification")


def prf1(y_true: list[set[str]], y_pred: list[set[str]]) -> tuple[float, float, float]:
    """Micro-averaged precision, recall, F1 over per-graph technique sets."""
    tp = fp = fn = 0
    for truth, pred in zip(y_true, y_pred):
        tp += len(truth & pred)
        fp += len(pred - truth)
        fn += len(truth - pred)
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _predict(graph: AttackGraph, store, params: AlignParams) -> dict[str, float]:
    """Best alignment total per technique with at least one match."""
    best: dict[str, float] = {}
    for m in identify_techniques(graph, store, params):
        t = m.technique_id
        if t not in best or m.assignment.total > best[t]:
            best[t] = m.assignment.total
    return best


def simplify_suite(suite, node_threshold: float = 0.65, gamma: float = 0.5):
    return [
        (merge_implicit_corefs(g, node_threshold=node_threshold, gamma=gamma), labels)
        for g, labels in suite
    ]


def sweep_thresholds(
    suite,
    store,
    params: AlignParams,
    node_values=(0.3, 0.5, 0.65, 0.8, 0.95),
    graph_values=(0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99),
    repeats: int = 2,
) -> list[dict]:
    """One row per threshold value, for the graph gate and the node gate.

    The suite should already be simplified.  Wall time is the best of
    ``repeats`` runs to damp scheduler noise.
    """
    if not suite:
        raise ValueError("sweep needs a non-empty labeled suite")
    rows: list[dict] = []
    y_true = [labels for _, labels in suite]

    for value in graph_values:
        p = replace(params, graph_threshold=value)
        seconds, y_pred = _timed_predictions(suite, store, p, repeats)
        precision, recall, f1 = prf1(y_true, y_pred)
        rows.append(
            {"sweep": "graph", "threshold": value, "precision": precision,
             "recall": recall, "f1": f1, "seconds": seconds}
        )

    for value in node_values:
        p = replace(params, node_threshold=value)
        seconds, y_pred = _timed_predictions(suite, store, p, repeats)
        precision, recall, f1 = prf1(y_true, y_pred)
        rows.append(
            {"sweep": "node", "threshold": value, "precision": precision,
             "recall": recall, "f1": f1, "seconds": seconds}
        )
    return rows


def _timed_predictions(suite, store, params: AlignParams, repeats: int):
    best_time = None
    preds: list[set[str]] = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        run_preds = [
            {t for t, total in _predict(graph, store, params).items()}
            for graph, _ in suite
        ]
        elapsed = time.perf_counter() - start
        if best_time is None or elapsed < best_time:
            best_time = elapsed
            preds = run_preds
    return best_time, preds


def ablation_study(
    raw_suite,
    store,
    params: AlignParams,
    node_grid=(0.5, 0.65, 0.8),
    graph_grid=(0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95),
) -> list[dict]:
    """Score every ablation variant at its own best thresholds.

    The suite must be raw (unsimplified): all variants except
    no_simplification run co-reference merging first, so disabling it is
    measured rather than assumed.  Thresholds are re-tuned per variant by
    grid search, since ablations shift the score distribution.
    """
    if not raw_suite:
        raise ValueError("ablation study needs a non-empty labeled suite")
    y_true = [labels for _, labels in raw_suite]
    rows: list[dict] = []
    for variant in ABLATION_VARIANTS:
        flags = frozenset() if variant == "full" else frozenset({variant})
        best = None
        for node_value in node_grid:
            if variant == "no_simplification":
                graphs = [g for g, _ in raw_suite]
            else:
                graphs = [
                    merge_implicit_corefs(g, node_threshold=node_value, gamma=params.gamma)
                    for g, _ in raw_suite
                ]
            p = replace(
                params,
                node_threshold=node_value,
                graph_threshold=min(graph_grid),
                ablation=flags - {"no_simplification"},
            )
            per_graph = [_predict(g, store, p) for g in graphs]
            for graph_value in graph_grid:
                y_pred = [
                    {t for t, total in totals.items() if total >= graph_value}
                    for totals in per_graph
                ]
                precision, recall, f1 = prf1(y_true, y_pred)
                key = (f1, precision, recall)
                if best is None or key > best[0]:
                    best = (key, node_value, graph_value, precision, recall, f1)
        _, node_value, graph_value, precision, recall, f1 = best
        rows.append(
            {
                "variant": variant,
                "node_threshold": node_value,
                "graph_threshold": graph_value,
                "precision": precision,
                "recall": recall,
                "f1": f1,
            }
        )
    return rows
