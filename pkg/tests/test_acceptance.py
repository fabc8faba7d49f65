"""Acceptance suite: one test per criterion, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; every test also enforces its runtime budget.
"""

import random
import string
import time

import pytest

from conftest import DATA, FIXTURES, make_graph

from ctikg.align import (
    AlignParams,
    best_total,
    brute_force_align,
    graph_alignment_score,
    identify_techniques,
    node_alignment_score,
)
from ctikg.evaluate import ablation_study, simplify_suite, sweep_thresholds
from ctikg.extraction import Entity, merge_implicit_corefs
from ctikg.ioc import RuleSet, protect_iocs, restore_iocs, scan_iocs
from ctikg.pipeline import extract_graph_from_text
from ctikg.synth import synth_suite, synth_templates
from ctikg.templates import (
    TemplateNode,
    TemplateStore,
    init_template,
    load_templates,
    update_template,
)

from test_align import make_template, random_instance


def report(name: str, ok: bool, elapsed: float, limit: float, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    extra = f" {detail}" if detail else ""
    print(f"[{status}] {name}: {elapsed:.2f}s (limit {limit:.0f}s){extra}")
    assert ok, f"{name} failed{extra}"
    assert elapsed < limit, f"{name} exceeded {limit}s budget ({elapsed:.2f}s)"


class TestAcceptance:
    def test_alignment_math_fixtures(self):
        start = time.perf_counter()
        params = AlignParams()  # gamma 0.5
        tol = 1e-9

        # Node score, type-mismatch branch: exactly 0.
        i = TemplateNode(id="t0", etype="file", ioc_terms={"payload.dll"})
        k = Entity(id="e0", etype="registry", ioc_terms={"payload.dll"})
        ok = abs(node_alignment_score(i, k, params) - 0.0) <= tol

        # Node score, gamma branch: type match with no term overlap -> 0.5.
        i2 = TemplateNode(id="t0", etype="file", nlp_terms={"aaaaaa"})
        k2 = Entity(id="e0", etype="file", nlp_terms={"zzzzzz"})
        ok &= abs(node_alignment_score(i2, k2, params) - 0.5) <= tol

        # Node score, identical terms: gamma + (1-gamma) = 1.
        k3 = Entity(id="e0", etype="file", nlp_terms={"aaaaaa"})
        ok &= abs(node_alignment_score(i2, k3, params) - 1.0) <= tol

        # Node-level score: occur 3 and 1, first aligned at 0.8 -> 0.6.
        t = make_template(
            [("t0", "file", [], ["abcde"], 3), ("t1", "registry", [], ["zzz"], 1)]
        )
        g = make_graph([("e0", "file", [], ["abcxy"])])
        a = graph_alignment_score(t, g, {"t0": "e0"}, params)
        ok &= abs(a.node_score - 0.6) <= tol

        # Edge-level score: hop-2 image with unit node scores -> 0.5,
        # and the overall score (1 + 0.5) / 2 = 0.75.
        t2 = make_template(
            [("t0", "file", ["x.dll"], [], 1), ("t1", "registry", [], ["rk"], 1)],
            [("t0", "t1", 1)],
        )
        g2 = make_graph(
            [
                ("e0", "file", ["x.dll"], []),
                ("e1", "other", [], ["mid"]),
                ("e2", "registry", [], ["rk"]),
            ],
            [("e0", "e1"), ("e1", "e2")],
        )
        a2 = graph_alignment_score(t2, g2, {"t0": "e0", "t1": "e2"}, params)
        ok &= abs(a2.node_score - 1.0) <= tol
        ok &= abs(a2.edge_score - 0.5) <= tol
        ok &= abs(a2.total - 0.75) <= tol

        report("alignment-math fixtures", ok, time.perf_counter() - start, 1.0)

    def test_oracle_equivalence(self):
        start = time.perf_counter()
        rng = random.Random(20240)
        checked = 0
        worst = 0.0
        sizes = [(4, 7)] * 194 + [(5, 8)] * 5 + [(6, 10)]
        for max_t, max_g in sizes:
            t, g = random_instance(rng, max_template_nodes=max_t, max_graph_nodes=max_g)
            params = AlignParams(
                node_threshold=0.0,
                graph_threshold=0.0,
                max_candidates_per_node=max(len(g.nodes), 1),
                path_mode=rng.choice(["directed", "undirected"]),
                gamma=rng.choice([0.0, 0.3, 0.5, 0.8]),
            )
            got = best_total(identify_techniques(g, [t], params))
            want = brute_force_align(t, g, params).total
            worst = max(worst, abs(got - want))
            if got != want:
                break
            checked += 1
        elapsed = time.perf_counter() - start
        report(
            "oracle equivalence", checked == len(sizes), elapsed, 30.0,
            detail=f"({checked}/{len(sizes)} instances, max deviation {worst:g})",
        )

    def test_property_suites(self, default_params, seed_store):
        start = time.perf_counter()
        rng = random.Random(777)
        ok = True

        # Scores stay in [0, 1]; type mismatch scores exactly 0.
        for _ in range(60):
            t, g = random_instance(rng)
            for m in identify_techniques(g, [t], AlignParams(graph_threshold=0.0)):
                a = m.assignment
                ok &= 0.0 <= a.node_score <= 1.0
                ok &= 0.0 <= a.edge_score <= 1.0
                ok &= 0.0 <= a.total <= 1.0
        mismatch = node_alignment_score(
            TemplateNode(id="t", etype="file", ioc_terms={"x"}),
            Entity(id="e", etype="actor", ioc_terms={"x"}),
            default_params,
        )
        ok &= mismatch == 0.0

        # Template-self-alignment hits exactly 1.0 (sources == 1).
        for _ in range(50):
            _, g = random_instance(rng, max_template_nodes=4, max_graph_nodes=6)
            if not g.nodes:
                continue
            t = init_template("T9000", [g], default_params)
            matches = identify_techniques(g, [t], AlignParams(graph_threshold=0.0))
            ok &= best_total(matches) == pytest.approx(1.0, abs=1e-12)

        # Implicit-coref merging reaches a fixpoint (idempotent).
        for _ in range(40):
            _, g = random_instance(rng)
            once = merge_implicit_corefs(g)
            twice = merge_implicit_corefs(once)
            ok &= once.to_dict() == twice.to_dict()
            ok &= len(once.nodes) <= len(g.nodes)

        # IoC protect/restore roundtrip on 1,000 generated texts.
        ruleset = RuleSet.default()
        iocs = [
            "10.1.2.3", "CVE-2021-44228", "http://evil-site.com/a.php",
            r"HKLM\Software\Run\Key", "dropper.exe", "notes.docx",
            "d41d8cd98f00b204e9800998ecf8427e", "1.2.3[.]4", "hxxp://bad[.]co.com/x",
            "/etc/passwd/", "bob@evil.com",
        ]
        for _ in range(1000):
            words = ["".join(rng.choices(string.ascii_lowercase, k=rng.randint(1, 9)))
                     for _ in range(rng.randint(0, 14))]
            for ioc in rng.sample(iocs, rng.randint(0, 4)):
                words.insert(rng.randint(0, len(words)), ioc)
            text = " ".join(words)
            ok &= restore_iocs(protect_iocs(text, scan_iocs(text, ruleset))) == text

        # Template persistence roundtrip, bundled store included.
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "roundtrip.json"
            seed_store.save(path)
            ok &= load_templates(path).to_dict() == seed_store.to_dict()
            rand_store = TemplateStore(
                [
                    init_template(f"T9{i:03d}", [random_instance(rng)[1]], default_params)
                    for i in range(5)
                    if True
                ]
            )
            path2 = Path(tmp) / "rand.json"
            rand_store.save(path2)
            ok &= load_templates(path2).to_dict() == rand_store.to_dict()

        # update_template never changes node or edge counts.
        for _ in range(30):
            _, g = random_instance(rng, max_template_nodes=4, max_graph_nodes=6)
            if not g.nodes:
                continue
            t = init_template("T9001", [g], default_params)
            matches = identify_techniques(g, [t], AlignParams(graph_threshold=0.0))
            if not matches:
                continue
            updated = update_template(t, matches[0], g)
            ok &= len(updated.nodes) == len(t.nodes)
            ok &= len(updated.edges) == len(t.edges)

        report("property suites", ok, time.perf_counter() - start, 60.0)

    def test_golden_frankenstein(self, seed_store):
        start = time.perf_counter()
        text = (FIXTURES / "frankenstein.txt").read_text(encoding="utf-8")
        graph = extract_graph_from_text(text, doc_id="frankenstein")
        matches = identify_techniques(graph, seed_store, AlignParams())
        found = {m.technique_id for m in matches}
        golden = {"T1566", "T1204", "T1203", "T1547"}
        ok = golden <= found and len(found) <= len(golden) + 1
        report(
            "golden Frankenstein fixture", ok, time.perf_counter() - start, 5.0,
            detail=f"(found {sorted(found)})",
        )

    def test_threshold_sweep_shape(self):
        start = time.perf_counter()
        store = synth_templates(10)
        suite = simplify_suite(synth_suite(store, n_graphs=24))
        rows = sweep_thresholds(
            suite, store, AlignParams(),
            node_values=(0.3, 0.65, 0.95),
            graph_values=(0.5, 0.85, 0.99),
            repeats=5,
        )
        graph_f1 = {r["threshold"]: r["f1"] for r in rows if r["sweep"] == "graph"}
        node_rows = [r for r in rows if r["sweep"] == "node"]
        interior_peak = (
            graph_f1[0.85] >= graph_f1[0.5] and graph_f1[0.85] >= graph_f1[0.99]
        )
        runtimes = [r["seconds"] for r in node_rows]
        monotone = all(a >= b for a, b in zip(runtimes, runtimes[1:]))
        ok = interior_peak and monotone
        report(
            "threshold sweep shape", ok, time.perf_counter() - start, 120.0,
            detail=(
                f"(F1@0.50={graph_f1[0.5]:.3f} F1@0.85={graph_f1[0.85]:.3f} "
                f"F1@0.99={graph_f1[0.99]:.3f}; node runtimes "
                + "/".join(f"{s:.3f}" for s in runtimes) + ")"
            ),
        )

    def test_ablation_shape(self):
        start = time.perf_counter()
        store = synth_templates(10)
        suite = synth_suite(store, n_graphs=24)
        rows = ablation_study(suite, store, AlignParams())
        f1 = {r["variant"]: r["f1"] for r in rows}
        ranked = sorted(f1, key=f1.get)
        ok = f1["full"] > f1["no_dependencies"] and ranked[0] == "no_dependencies"
        report(
            "ablation shape", ok, time.perf_counter() - start, 300.0,
            detail="(" + " ".join(f"{v}={f1[v]:.3f}" for v in f1) + ")",
        )

    def test_throughput(self):
        start = time.perf_counter()
        store = synth_templates(179)
        rng = random.Random(5)
        subjects = ["stager", "payload", "dropper", "implant", "loader", "macros"]
        exts = [".exe", ".ps1", ".bat", ".scr", ".msi"]
        tlds = [".com", ".net", ".org", ".xyz", ".io"]

        def token():
            return "".join(rng.choices(string.ascii_lowercase, k=rng.randint(7, 11)))

        sentences = []
        while sum(len(s.split()) for s in sentences) < 1000:
            sentences.append(
                f"The {rng.choice(subjects)} connected to {token()}{rng.choice(tlds)} "
                f"and downloaded {token()}{rng.choice(exts)} for the next stage."
            )
        text = " ".join(sentences)
        assert len(text.split()) >= 1000
        clock = time.perf_counter()
        graph = extract_graph_from_text(text, doc_id="big")
        matches = identify_techniques(graph, store, AlignParams())
        elapsed = time.perf_counter() - clock
        report(
            "throughput sanity", elapsed < 5.0, time.perf_counter() - start, 30.0,
            detail=(
                f"(parse+identify {elapsed:.2f}s, {len(graph.nodes)} nodes, "
                f"{len(store)} templates, {len(matches)} matches)"
            ),
        )
        assert elapsed < 5.0
