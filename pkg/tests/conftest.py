import json
from pathlib import Path

import pytest

from ctikg.align import AlignParams
from ctikg.extraction import AttackGraph, Dependency, Entity
from ctikg.templates import TemplateStore, load_templates

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "src" / "ctikg" / "data"


@pytest.fixture(scope="session")
def frankenstein_text() -> str:
    return (FIXTURES / "frankenstein.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def seed_store() -> TemplateStore:
    return load_templates(DATA / "seed_templates.json")


@pytest.fixture()
def default_params() -> AlignParams:
    return AlignParams()


def make_graph(nodes, edges=(), doc_id="g") -> AttackGraph:
    """Tiny graph builder for tests.

    nodes: list of (id, etype, ioc_terms, nlp_terms); edges: list of (src, dst).
    """
    g = AttackGraph(doc_id=doc_id)
    for nid, etype, ioc, nlp in nodes:
        g.nodes[nid] = Entity(id=nid, etype=etype, ioc_terms=set(ioc), nlp_terms=set(nlp))
    for src, dst in edges:
        g.edges.append(Dependency(src=src, dst=dst, sentence=0))
    return g


def load_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))
