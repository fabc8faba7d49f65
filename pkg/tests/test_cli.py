"""Command-line surface: pipelines, exit codes, file outputs."""

import csv
import json
import shutil
from pathlib import Path

import pytest

from conftest import DATA, FIXTURES

from ctikg.cli import main


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def workdir(tmp_path):
    shutil.copy(FIXTURES / "frankenstein.txt", tmp_path / "frankenstein.txt")
    return tmp_path


class TestParse:
    def test_frankenstein_graph(self, workdir, capsys):
        out = workdir / "graphs"
        assert run(["parse", workdir / "frankenstein.txt", "--out", out]) == 0
        data = json.loads((out / "frankenstein.graph.json").read_text())
        ioc_terms = {t for n in data["nodes"] for t in n["ioc_terms"]}
        assert "cve-2017-11882" in ioc_terms
        assert any(n["etype"] == "network_connection" for n in data["nodes"])

    def test_empty_report_ok(self, tmp_path):
        report = tmp_path / "empty.txt"
        report.write_text("", encoding="utf-8")
        out = tmp_path / "graphs"
        assert run(["parse", report, "--out", out]) == 0
        data = json.loads((out / "empty.graph.json").read_text())
        assert data["nodes"] == [] and data["edges"] == []

    def test_rerun_byte_identical(self, workdir):
        out1, out2 = workdir / "a", workdir / "b"
        assert run(["parse", workdir / "frankenstein.txt", "--out", out1]) == 0
        assert run(["parse", workdir / "frankenstein.txt", "--out", out2]) == 0
        assert (out1 / "frankenstein.graph.json").read_bytes() == (
            out2 / "frankenstein.graph.json"
        ).read_bytes()

    def test_missing_file_exit_1(self, tmp_path):
        assert run(["parse", tmp_path / "nope.txt", "--out", tmp_path]) == 1

    def test_partial_failure_exit_0_with_stderr(self, workdir, capsys):
        assert (
            run(["parse", workdir / "frankenstein.txt", workdir / "nope.txt",
                 "--out", workdir / "o"]) == 0
        )
        assert "nope.txt" in capsys.readouterr().err

    def test_html_report(self, tmp_path):
        shutil.copy(FIXTURES / "report.html", tmp_path / "report.html")
        out = tmp_path / "graphs"
        assert run(["parse", tmp_path / "report.html", "--out", out]) == 0
        data = json.loads((out / "report.graph.json").read_text())
        assert any("cve-2017-11882" in n["ioc_terms"] for n in data["nodes"])

    def test_sidecar_mode_missing_parse_file(self, workdir, capsys):
        code = run(
            ["parse", workdir / "frankenstein.txt", "--parse-mode", "sidecar_files",
             "--parse-dir", workdir, "--out", workdir / "o"]
        )
        assert code == 1  # the only input failed
        assert "parse" in capsys.readouterr().err

    def test_stdin_input(self, tmp_path, monkeypatch):
        import io
        import sys

        monkeypatch.setattr(
            sys, "stdin",
            type("S", (), {"buffer": io.BytesIO(b"The stager connects to 10.0.0.1.")})(),
        )
        assert run(["parse", "-", "--out", tmp_path]) == 0
        data = json.loads((tmp_path / "stdin.graph.json").read_text())
        assert len(data["nodes"]) == 2

    def test_protect_writes_placeholder_text(self, workdir):
        out = workdir / "prot"
        assert run(["protect", workdir / "frankenstein.txt", "--out", out]) == 0
        text = (out / "frankenstein.protected.txt").read_text(encoding="utf-8")
        assert "CVE-2017-11882" not in text
        assert "vulnerability" in text

    def test_no_simplification_flag(self, workdir):
        out1 = workdir / "full"
        out2 = workdir / "raw"
        assert run(["parse", workdir / "frankenstein.txt", "--out", out1]) == 0
        assert run(["parse", workdir / "frankenstein.txt", "--out", out2,
                    "--ablate", "no_simplification"]) == 0
        full = json.loads((out1 / "frankenstein.graph.json").read_text())
        raw = json.loads((out2 / "frankenstein.graph.json").read_text())
        assert len(raw["nodes"]) >= len(full["nodes"])


class TestIdentify:
    def graph_dir(self, workdir) -> Path:
        out = workdir / "graphs"
        assert run(["parse", workdir / "frankenstein.txt", "--out", out]) == 0
        return out

    def test_frankenstein_techniques(self, workdir, capsys):
        graphs = self.graph_dir(workdir)
        out = workdir / "matches"
        code = run(
            ["identify", graphs / "frankenstein.graph.json",
             "--templates", DATA / "seed_templates.json", "--out", out]
        )
        assert code == 0
        report = json.loads((out / "frankenstein.matches.json").read_text())
        techniques = {m["technique_id"] for m in report}
        assert techniques == {"T1566", "T1204", "T1203", "T1547"}
        tkg = json.loads((out / "frankenstein.tkg.json").read_text())
        assert tkg["annotations"]

    def test_template_self_graph_scores_one(self, tmp_path, default_params):
        from conftest import make_graph
        from ctikg.templates import TemplateStore, init_template

        g = make_graph(
            [
                ("e000", "executable", [], ["payload"]),
                ("e001", "registry", ["hklm\\software\\x\\run"], []),
            ],
            [("e000", "e001")],
        )
        store = TemplateStore([init_template("T1547", [g], default_params)])
        store.save(tmp_path / "templates.json")
        (tmp_path / "graph.json").write_text(g.to_json(), encoding="utf-8")
        out = tmp_path / "out"
        assert run(
            ["identify", tmp_path / "graph.json",
             "--templates", tmp_path / "templates.json", "--out", out]
        ) == 0
        report = json.loads((out / "graph.matches.json").read_text())
        assert report[0]["total"] == pytest.approx(1.0)

    def test_threshold_out_of_range_exit_1(self, workdir):
        graphs = self.graph_dir(workdir)
        code = run(
            ["identify", graphs / "frankenstein.graph.json",
             "--templates", DATA / "seed_templates.json",
             "--out", workdir / "m", "--graph-threshold", "1.01"]
        )
        assert code == 1

    def test_missing_templates_exit_1(self, workdir):
        graphs = self.graph_dir(workdir)
        assert run(
            ["identify", graphs / "frankenstein.graph.json",
             "--templates", workdir / "missing.json", "--out", workdir / "m"]
        ) == 1

    def test_dot_output(self, workdir):
        graphs = self.graph_dir(workdir)
        out = workdir / "dots"
        assert run(
            ["identify", graphs / "frankenstein.graph.json",
             "--templates", DATA / "seed_templates.json",
             "--out", out, "--format", "dot"]
        ) == 0
        dot = (out / "frankenstein.tkg.dot").read_text()
        assert dot.startswith("digraph g {")
        assert "tooltip=" in dot


class TestTemplatesCommands:
    def test_init_matches_golden(self, tmp_path):
        out = tmp_path / "templates.json"
        assert run(
            ["templates-init", "--examples-dir", DATA / "technique_examples",
             "--out", out]
        ) == 0
        fresh = json.loads(out.read_text())
        golden = json.loads((DATA / "seed_templates.json").read_text())
        assert fresh["templates"] == golden["templates"]

    def test_init_from_single_example(self, tmp_path):
        examples = tmp_path / "ex"
        examples.mkdir()
        (examples / "T1547__Solo.txt").write_text(
            "The payload created a run key under HKLM\\Software\\X\\Run.\n",
            encoding="utf-8",
        )
        out = tmp_path / "solo.json"
        assert run(["templates-init", "--examples-dir", examples, "--out", out]) == 0
        data = json.loads(out.read_text())
        assert data["templates"][0]["sources"] == 1

    def test_init_from_graph_json(self, tmp_path, default_params):
        from conftest import make_graph

        graphs = tmp_path / "graphs"
        graphs.mkdir()
        g = make_graph(
            [
                ("e000", "executable", [], ["payload"]),
                ("e001", "registry", ["hklm\\software\\x\\run"], []),
            ],
            [("e000", "e001")],
        )
        (graphs / "T1547__a.json").write_text(g.to_json(), encoding="utf-8")
        (graphs / "T1547__b.json").write_text(g.to_json(), encoding="utf-8")
        out = tmp_path / "templates.json"
        assert run(["templates-init", "--graphs-dir", graphs, "--out", out]) == 0
        data = json.loads(out.read_text())
        assert data["templates"][0]["technique_id"] == "T1547"
        assert data["templates"][0]["sources"] == 2
        assert all(n["occur"] == 2 for n in data["templates"][0]["nodes"])

    def test_update_writes_new_version(self, tmp_path, workdir):
        graphs_dir = tmp_path / "graphs"
        assert run(["parse", workdir / "frankenstein.txt", "--out", graphs_dir]) == 0
        graph_file = graphs_dir / "frankenstein.graph.json"
        templates = tmp_path / "templates.json"
        shutil.copy(DATA / "seed_templates.json", templates)
        matches_dir = tmp_path / "m"
        assert run(
            ["identify", graph_file, "--templates", templates, "--out", matches_dir]
        ) == 0
        code = run(
            ["templates-update", "--templates", templates,
             "--graph", graph_file,
             "--matches", matches_dir / "frankenstein.matches.json"]
        )
        assert code == 0
        v2 = tmp_path / "templates.v2.json"
        assert v2.exists()
        assert templates.read_text() == (DATA / "seed_templates.json").read_text()
        new = json.loads(v2.read_text())
        t1547 = next(t for t in new["templates"] if t["technique_id"] == "T1547")
        assert t1547["sources"] == 5  # seed had 4 example graphs

    def test_update_version_collision(self, tmp_path, workdir):
        graphs_dir = tmp_path / "graphs"
        assert run(["parse", workdir / "frankenstein.txt", "--out", graphs_dir]) == 0
        graph_file = graphs_dir / "frankenstein.graph.json"
        templates = tmp_path / "templates.json"
        shutil.copy(DATA / "seed_templates.json", templates)
        matches_dir = tmp_path / "m"
        run(["identify", graph_file, "--templates", templates, "--out", matches_dir])
        args = ["templates-update", "--templates", templates, "--graph", graph_file,
                "--matches", matches_dir / "frankenstein.matches.json"]
        assert run(args) == 0
        assert run(args) == 1  # templates.v2.json already exists

    def test_update_empty_match_list(self, tmp_path, workdir):
        graphs_dir = tmp_path / "graphs"
        run(["parse", workdir / "frankenstein.txt", "--out", graphs_dir])
        templates = tmp_path / "templates.json"
        shutil.copy(DATA / "seed_templates.json", templates)
        empty = tmp_path / "empty.matches.json"
        empty.write_text("[]", encoding="utf-8")
        assert run(
            ["templates-update", "--templates", templates,
             "--graph", graphs_dir / "frankenstein.graph.json", "--matches", empty]
        ) == 0
        v2 = json.loads((tmp_path / "templates.v2.json").read_text())
        original = json.loads((DATA / "seed_templates.json").read_text())
        assert v2["templates"] == original["templates"]
        assert v2["revision"] == original["revision"] + 1


class TestStudies:
    def test_sweep_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--out", out, "--synth-graphs", "6",
                    "--synth-templates", "6"]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0].keys() == {
            "sweep", "threshold", "precision", "recall", "f1", "seconds"
        }
        assert {r["sweep"] for r in rows} == {"graph", "node"}

    def test_ablate_csv_five_variants(self, tmp_path):
        out = tmp_path / "ablate.csv"
        assert run(["ablate", "--out", out, "--synth-graphs", "6",
                    "--synth-templates", "6"]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["variant"] for r in rows] == [
            "full", "no_ioc", "no_nlp", "no_dependencies", "no_simplification"
        ]

    def test_labels_require_templates(self, tmp_path):
        labels = tmp_path / "labels.json"
        labels.write_text("{}", encoding="utf-8")
        assert run(["sweep", "--out", tmp_path / "s.csv", "--labels", labels]) == 1

    def test_labeled_suite_from_files(self, tmp_path, default_params):
        from conftest import make_graph
        from ctikg.templates import TemplateStore, init_template

        g = make_graph(
            [
                ("e000", "executable", [], ["payload"]),
                ("e001", "registry", ["hklm\\software\\x\\run"], []),
            ],
            [("e000", "e001")],
        )
        store = TemplateStore([init_template("T1547", [g], default_params)])
        store.save(tmp_path / "templates.json")
        (tmp_path / "g0.json").write_text(g.to_json(), encoding="utf-8")
        (tmp_path / "labels.json").write_text(
            json.dumps({"g0.json": ["T1547"]}), encoding="utf-8"
        )
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--out", out, "--labels", tmp_path / "labels.json",
                    "--templates", tmp_path / "templates.json"]) == 0
        with open(out, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["sweep"] == "graph"]
        assert all(float(r["f1"]) == 1.0 for r in rows if float(r["threshold"]) <= 1.0)
