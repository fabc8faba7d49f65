"""Template initialization, updating, persistence, and bootstrap."""

import pytest

from conftest import make_graph

from ctikg.align import AlignParams, identify_techniques
from ctikg.templates import (
    TechniqueTemplate,
    TemplateError,
    TemplateStore,
    bootstrap_from_examples,
    init_template,
    lint_template,
    load_templates,
    save_templates,
    update_template,
)


def registry_variant_graph():
    return make_graph(
        [
            ("e000", "executable", [], ["payload"]),
            ("e001", "registry", ["hklm\\software\\x\\run"], []),
        ],
        [("e000", "e001")],
        doc_id="variant-registry",
    )


def folder_variant_graph():
    return make_graph(
        [
            ("e000", "executable", [], ["payload"]),
            ("e001", "other", [], ["startup folder"]),
        ],
        [("e000", "e001")],
        doc_id="variant-folder",
    )


class TestInit:
    def test_single_graph_seeds_template(self, default_params):
        t = init_template("T1547", [registry_variant_graph()], default_params)
        assert t.sources == 1
        assert len(t.nodes) == 2
        assert all(n.occur == 1 for n in t.nodes.values())
        assert len(t.edges) == 1 and t.edges[0].occur == 1

    def test_two_identical_graphs_double_occur(self, default_params):
        graphs = [registry_variant_graph(), registry_variant_graph()]
        t = init_template("T1547", graphs, default_params)
        assert t.sources == 2
        assert len(t.nodes) == 2
        assert all(n.occur == 2 for n in t.nodes.values())
        assert t.edges[0].occur == 2

    def test_variant_graphs_share_executable(self, default_params):
        # Hand trace: the payload node aligns across variants (occur 2);
        # the registry and startup-folder nodes stay distinct (occur 1).
        t = init_template(
            "T1547", [registry_variant_graph(), folder_variant_graph()], default_params
        )
        assert t.sources == 2
        by_type = {}
        for node in t.nodes.values():
            by_type.setdefault(node.etype, []).append(node)
        assert len(by_type["executable"]) == 1
        assert by_type["executable"][0].occur == 2
        assert len(by_type["registry"]) == 1 and by_type["registry"][0].occur == 1
        assert len(by_type["other"]) == 1 and by_type["other"][0].occur == 1
        assert len(t.edges) == 2

    def test_empty_graph_list_rejected(self, default_params):
        with pytest.raises(TemplateError, match="at least one graph"):
            init_template("T1547", [], default_params)

    def test_malformed_technique_id(self, default_params):
        with pytest.raises(TemplateError, match="technique_id"):
            init_template("1547", [registry_variant_graph()], default_params)

    def test_subtechnique_id_accepted(self, default_params):
        t = init_template("T1547.001", [registry_variant_graph()], default_params)
        assert t.technique_id == "T1547.001"

    def test_occur_never_exceeds_sources(self, default_params):
        graphs = [registry_variant_graph(), folder_variant_graph(),
                  registry_variant_graph()]
        t = init_template("T1547", graphs, default_params)
        assert all(n.occur <= t.sources for n in t.nodes.values())
        assert all(e.occur <= t.sources for e in t.edges)


class TestUpdate:
    def fitted(self, default_params):
        template = init_template("T1547", [registry_variant_graph()], default_params)
        graph = registry_variant_graph()
        (match,) = identify_techniques(graph, [template], default_params)
        return template, match, graph

    def test_aligned_nodes_gain_occur(self, default_params):
        template, match, graph = self.fitted(default_params)
        updated = update_template(template, match, graph)
        assert updated.sources == template.sources + 1
        assert all(n.occur == 2 for n in updated.nodes.values())
        assert updated.edges[0].occur == 2

    def test_partial_match_leaves_rest_alone(self, default_params):
        template = init_template(
            "T1547", [registry_variant_graph(), folder_variant_graph()], default_params
        )
        graph = registry_variant_graph()
        # A single-variant report cannot clear the default gate against a
        # two-variant template; the gate is not what this test exercises.
        from dataclasses import replace

        loose = replace(default_params, graph_threshold=0.6)
        match = identify_techniques(graph, [template], loose)[0]
        updated = update_template(template, match, graph)
        folder = next(n for n in updated.nodes.values() if n.etype == "other")
        assert folder.occur == 1  # untouched by a registry-variant report

    def test_new_terms_union_in(self, default_params):
        template, match, _ = self.fitted(default_params)
        richer = make_graph(
            [
                ("e000", "executable", ["sspisrv.dll"], ["payload"]),
                ("e001", "registry", ["hklm\\software\\x\\run"], []),
            ],
            [("e000", "e001")],
        )
        match2 = identify_techniques(richer, [template], default_params)[0]
        updated = update_template(template, match2, richer)
        exe = next(n for n in updated.nodes.values() if n.etype == "executable")
        assert "sspisrv.dll" in exe.ioc_terms

    def test_no_new_nodes_or_edges(self, default_params):
        template, match, graph = self.fitted(default_params)
        bigger = make_graph(
            [
                ("e000", "executable", [], ["payload"]),
                ("e001", "registry", ["hklm\\software\\x\\run"], []),
                ("e002", "file", ["extra.dll"], []),
            ],
            [("e000", "e001"), ("e001", "e002")],
        )
        match2 = identify_techniques(bigger, [template], default_params)[0]
        updated = update_template(template, match2, bigger)
        assert len(updated.nodes) == len(template.nodes)
        assert len(updated.edges) == len(template.edges)

    def test_update_twice_idempotent_terms(self, default_params):
        template, match, graph = self.fitted(default_params)
        once = update_template(template, match, graph)
        twice = update_template(once, match, graph)
        for a, b in zip(once.sorted_nodes(), twice.sorted_nodes()):
            assert a.ioc_terms == b.ioc_terms
            assert a.nlp_terms == b.nlp_terms
            assert b.occur == a.occur + 1

    def test_unknown_node_rejected(self, default_params):
        template, match, graph = self.fitted(default_params)

        class Fake:
            pairs = {"missing": "e000"}

        with pytest.raises(TemplateError, match="unknown template node"):
            update_template(template, Fake(), graph)

    def test_original_template_not_mutated(self, default_params):
        template, match, graph = self.fitted(default_params)
        before = template.to_dict()
        update_template(template, match, graph)
        assert template.to_dict() == before


class TestPersistence:
    def test_roundtrip(self, tmp_path, default_params):
        store = TemplateStore(
            [
                init_template("T1547", [registry_variant_graph()], default_params),
                init_template("T1566", [folder_variant_graph()], default_params),
            ]
        )
        path = tmp_path / "templates.json"
        save_templates(store, path)
        again = load_templates(path)
        assert again.to_dict() == store.to_dict()

    def test_seed_file_loads(self, seed_store):
        assert len(seed_store) == 10
        for tid in ("T1547", "T1566", "T1204", "T1203"):
            assert tid in seed_store.templates

    def test_duplicate_id_rejected(self, tmp_path):
        data = """{"revision": 1, "templates": [
            {"technique_id": "T1547", "name": "", "sources": 1, "nodes": [], "edges": []},
            {"technique_id": "T1547", "name": "", "sources": 1, "nodes": [], "edges": []}
        ]}"""
        path = tmp_path / "dup.json"
        path.write_text(data, encoding="utf-8")
        with pytest.raises(TemplateError, match="duplicate technique_id"):
            load_templates(path)

    def test_bad_edge_reported_with_location(self, tmp_path):
        data = """{"revision": 1, "templates": [
            {"technique_id": "T1547", "name": "", "sources": 1,
             "nodes": [{"id": "t0", "etype": "file", "occur": 1}],
             "edges": [{"src": "t0", "dst": "nope", "occur": 1}]}
        ]}"""
        path = tmp_path / "bad.json"
        path.write_text(data, encoding="utf-8")
        with pytest.raises(TemplateError, match=r"/templates/0/edges/0"):
            load_templates(path)

    def test_stable_ordering(self, tmp_path, default_params):
        store = TemplateStore(
            [
                init_template("T1566", [folder_variant_graph()], default_params),
                init_template("T1204", [registry_variant_graph()], default_params),
            ]
        )
        path = tmp_path / "t.json"
        save_templates(store, path)
        save_templates(store, tmp_path / "t2.json")
        assert path.read_text() == (tmp_path / "t2.json").read_text()
        ids = [t["technique_id"] for t in store.to_dict()["templates"]]
        assert ids == sorted(ids)


class TestLint:
    def test_clean_template_has_no_findings(self, default_params):
        t = init_template("T1547", [registry_variant_graph()], default_params)
        assert lint_template(t) == []

    def test_disconnected_components_flagged(self, default_params):
        t = init_template("T1547", [registry_variant_graph()], default_params)
        t.nodes["t999"] = type(t.nodes["t000"])(id="t999", etype="file",
                                                ioc_terms={"orphan.dll"})
        findings = lint_template(t)
        assert any("disconnected" in f for f in findings)
        assert any("t999" in f for f in findings)

    def test_occur_above_sources_flagged(self, default_params):
        t = init_template("T1547", [registry_variant_graph()], default_params)
        t.nodes["t000"].occur = 5
        assert any("exceeds sources" in f for f in lint_template(t))

    def test_seed_templates_are_lint_clean_or_flagged(self, seed_store):
        # The bundled templates should carry no occur violations; any
        # disconnected component must be the only kind of finding.
        for template in seed_store:
            for finding in lint_template(template):
                assert "disconnected" in finding


class TestBootstrap:
    def test_single_line_equals_direct_init(self, tmp_path, default_params):
        line = "The payload created a run key under HKLM\\Software\\X\\Run to persist."
        (tmp_path / "T1547__Test.txt").write_text(line + "\n", encoding="utf-8")
        store, errors = bootstrap_from_examples(tmp_path, default_params)
        assert errors == []
        from ctikg.pipeline import extract_graph_from_text

        direct = init_template(
            "T1547", [extract_graph_from_text(line, doc_id="T1547#0")], default_params,
            name="Test",
        )
        assert store.get("T1547").to_dict() == direct.to_dict()

    def test_repeated_line_counts_occurrences(self, tmp_path, default_params):
        line = "The payload created a run key under HKLM\\Software\\X\\Run to persist.\n"
        (tmp_path / "T1547__Test.txt").write_text(line * 3, encoding="utf-8")
        store, errors = bootstrap_from_examples(tmp_path, default_params)
        assert errors == []
        t = store.get("T1547")
        assert t.sources == 3
        assert all(n.occur == 3 for n in t.nodes.values())

    def test_bad_file_collected_not_fatal(self, tmp_path, default_params):
        (tmp_path / "T1547__Ok.txt").write_text("The payload persists.\n", encoding="utf-8")
        (tmp_path / "NOTATECH__Bad.txt").write_text("Some text.\n", encoding="utf-8")
        store, errors = bootstrap_from_examples(tmp_path, default_params)
        assert "T1547" in store.templates
        assert len(errors) == 1 and "NOTATECH" in errors[0]

    def test_bundled_examples_match_golden_store(self, default_params, seed_store):
        from conftest import DATA

        store, errors = bootstrap_from_examples(
            DATA / "technique_examples", default_params
        )
        assert errors == []
        assert store.to_dict()["templates"] == seed_store.to_dict()["templates"]
