"""Review service tests over a controlled two-file fixture.

The two files are identical, so their symbols embed to identical
vectors under the fixed random encoder; accepting a type for a symbol
in one file must re-rank its twin in the other.
"""

from __future__ import annotations

import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hintspace.extract import extract_graph
from hintspace.gnn import GnnConfig, Vocabulary, build_params
from hintspace.harness import ModelBundle
from hintspace.losses import ClassVocab, TrainConfig
from hintspace.service import create_app
from hintspace.typemap import TypeMap, load_map
from hintspace.typeexpr import parse_type

SOURCE = "def f(x):\n    return x\n"
SOURCES = {"a.py": SOURCE, "b.py": SOURCE}


def make_bundle(sources: dict[str, str], dim=8, steps=2, seed=0) -> ModelBundle:
    graphs = [extract_graph(text, file_id=fid) for fid, text in sources.items()]
    vocab = Vocabulary.build(graphs, min_count=1)
    config = GnnConfig(dim=dim, steps=steps)
    class_vocab = ClassVocab([])
    params = build_params(config, len(vocab), len(class_vocab), seed=seed)
    return ModelBundle(params, vocab, class_vocab, config,
                       TrainConfig(min_class_count=1))


@pytest.fixture()
def client():
    bundle = make_bundle(SOURCES)
    base = TypeMap(bundle.gnn_config.dim)
    base.add_binding(np.ones(bundle.gnn_config.dim), parse_type("int"), "corpus")
    app = create_app(bundle, base, sources=SOURCES)
    return TestClient(app)


def param_symbol(client: TestClient, file_id: str, session=None) -> dict:
    params = {"file": file_id}
    if session:
        params["session"] = session
    payload = client.get("/api/suggestions", params=params).json()
    return next(s for s in payload["suggestions"] if s["kind"] == "parameter")


class TestListing:
    def test_files_listed_with_pending_counts(self, client):
        payload = client.get("/api/files").json()
        assert {f["id"] for f in payload["files"]} == {"a.py", "b.py"}
        for f in payload["files"]:
            assert f["pending"] == 2  # parameter x and return f

    def test_unknown_file_is_404(self, client):
        assert client.get("/api/suggestions", params={"file": "zzz.py"}).status_code == 404

    def test_suggestions_sorted_by_confidence(self, client):
        payload = client.get("/api/suggestions", params={"file": "a.py"}).json()
        confs = [s["confidence"] for s in payload["suggestions"]]
        assert confs == sorted(confs, reverse=True)

    def test_single_marker_map_gives_probability_one(self, client):
        payload = client.get("/api/suggestions", params={"file": "a.py"}).json()
        for item in payload["suggestions"]:
            assert item["candidates"] == [{"type": "int", "probability": 1.0}]

    def test_empty_file_has_no_suggestions(self):
        sources = {"empty.py": ""}
        bundle = make_bundle(sources)
        base = TypeMap(bundle.gnn_config.dim)
        base.add_binding(np.zeros(bundle.gnn_config.dim), parse_type("int"), "corpus")
        app = create_app(bundle, base, sources=sources)
        payload = TestClient(app).get(
            "/api/suggestions", params={"file": "empty.py"}).json()
        assert payload["suggestions"] == []


class TestAcceptFlow:
    def test_accept_adds_marker_and_reranks_twin(self, client):
        session = client.post("/api/session").json()["session_id"]
        a_sym = param_symbol(client, "a.py", session)
        b_sym = param_symbol(client, "b.py", session)
        response = client.post("/api/accept", json={
            "session_id": session,
            "symbol_id": a_sym["symbol_id"],
            "type": "MyType",
        })
        assert response.status_code == 200
        body = response.json()
        assert body["map_size"] == 2
        assert b_sym["symbol_id"] in body["reranked"]
        # the twin now sees the accepted type first (distance zero)
        b_after = param_symbol(client, "b.py", session)
        assert b_after["candidates"][0]["type"] == "MyType"

    def test_accept_marks_symbol_decided(self, client):
        session = client.post("/api/session").json()["session_id"]
        sym = param_symbol(client, "a.py", session)
        client.post("/api/accept", json={
            "session_id": session, "symbol_id": sym["symbol_id"], "type": "int",
        })
        after = client.get("/api/suggestions",
                           params={"file": "a.py", "session": session}).json()
        assert sym["symbol_id"] not in {s["symbol_id"] for s in after["suggestions"]}

    def test_double_accept_conflicts_and_map_unchanged(self, client):
        session = client.post("/api/session").json()["session_id"]
        sym = param_symbol(client, "a.py", session)
        first = client.post("/api/accept", json={
            "session_id": session, "symbol_id": sym["symbol_id"], "type": "int",
        }).json()
        second = client.post("/api/accept", json={
            "session_id": session, "symbol_id": sym["symbol_id"], "type": "str",
        })
        assert second.status_code == 409
        blob = client.get("/api/export-map", params={"session": session}).content
        path = "/tmp/_conflict_map.bin"
        with open(path, "wb") as fh:
            fh.write(blob)
        assert len(load_map(path)) == first["map_size"]
        os.unlink(path)

    def test_unknown_symbol_404(self, client):
        response = client.post("/api/accept",
                               json={"symbol_id": "a.py::9999", "type": "int"})
        assert response.status_code == 404

    def test_malformed_body_422(self, client):
        assert client.post("/api/accept", json={"symbol_id": "a.py::1"}).status_code == 422

    def test_malformed_type_422(self, client):
        sym = param_symbol(client, "a.py")
        response = client.post("/api/accept", json={
            "symbol_id": sym["symbol_id"], "type": "List[int",
        })
        assert response.status_code == 422

    def test_top_type_cannot_be_accepted(self, client):
        sym = param_symbol(client, "a.py")
        response = client.post("/api/accept", json={
            "symbol_id": sym["symbol_id"], "type": "Any",
        })
        assert response.status_code == 422

    def test_checker_consulted_when_configured(self, tmp_path):
        import sys

        checker = tmp_path / "ok.py"
        checker.write_text("import sys; sys.exit(0)\n")
        bundle = make_bundle(SOURCES)
        base = TypeMap(bundle.gnn_config.dim)
        base.add_binding(np.ones(bundle.gnn_config.dim), parse_type("int"), "corpus")
        app = create_app(bundle, base, sources=SOURCES,
                         checker_command=f"{sys.executable} {checker}")
        c = TestClient(app)
        sym = param_symbol(c, "a.py")
        body = c.post("/api/accept", json={
            "symbol_id": sym["symbol_id"], "type": "int",
        }).json()
        assert body["checker"] == "accept"


class TestRejectFlow:
    def test_reject_removes_candidate_and_flags_manual(self, client):
        session = client.post("/api/session").json()["session_id"]
        sym = param_symbol(client, "a.py", session)
        assert [c["type"] for c in sym["candidates"]] == ["int"]
        body = client.post("/api/reject", json={
            "session_id": session, "symbol_id": sym["symbol_id"], "type": "int",
        }).json()
        assert body["remaining_candidates"] == 0
        assert body["needs_manual"] is True
        after = param_symbol(client, "a.py", session)
        assert after["candidates"] == []
        assert after["needs_manual"] is True

    def test_reject_changes_no_map_and_no_other_rankings(self, client):
        session = client.post("/api/session").json()["session_id"]
        before = client.get("/api/suggestions",
                            params={"file": "b.py", "session": session}).json()
        sym = param_symbol(client, "a.py", session)
        client.post("/api/reject", json={
            "session_id": session, "symbol_id": sym["symbol_id"], "type": "int",
        })
        after = client.get("/api/suggestions",
                           params={"file": "b.py", "session": session}).json()
        assert before == after

    def test_reject_unknown_symbol_404(self, client):
        response = client.post("/api/reject",
                               json={"symbol_id": "nope.py::1", "type": "int"})
        assert response.status_code == 404


class TestNeighbors:
    def test_single_marker_distance(self, client):
        sym = param_symbol(client, "a.py")
        payload = client.get("/api/neighbors",
                             params={"symbol_id": sym["symbol_id"], "k": 3}).json()
        assert len(payload["neighbors"]) == 1
        assert payload["neighbors"][0]["type"] == "int"
        assert payload["neighbors"][0]["distance"] >= 0

    def test_distances_non_decreasing(self, client):
        session = client.post("/api/session").json()["session_id"]
        sym = param_symbol(client, "a.py", session)
        for t in ("A1", "B2", "C3"):
            other = param_symbol(client, "b.py", session)
            client.post("/api/accept", json={
                "session_id": session, "symbol_id": other["symbol_id"], "type": t,
            })
            break  # one accept suffices to have 2 markers
        payload = client.get(
            "/api/neighbors",
            params={"symbol_id": sym["symbol_id"], "k": 5, "session": session},
        ).json()
        dists = [n["distance"] for n in payload["neighbors"]]
        assert dists == sorted(dists)

    def test_matches_bruteforce(self, client):
        sym = param_symbol(client, "a.py")
        payload = client.get("/api/neighbors",
                             params={"symbol_id": sym["symbol_id"], "k": 1}).json()
        assert payload["neighbors"][0]["provenance"] == "corpus"


class TestSessions:
    def test_isolation_between_sessions(self, client):
        s1 = client.post("/api/session").json()["session_id"]
        s2 = client.post("/api/session").json()["session_id"]
        sym = param_symbol(client, "a.py", s1)
        client.post("/api/accept", json={
            "session_id": s1, "symbol_id": sym["symbol_id"], "type": "Special",
        })
        view2 = param_symbol(client, "b.py", s2)
        assert all(c["type"] != "Special" for c in view2["candidates"])

    def test_replaying_log_reproduces_final_map(self, client):
        s1 = client.post("/api/session").json()["session_id"]
        a_sym = param_symbol(client, "a.py", s1)
        client.post("/api/accept", json={
            "session_id": s1, "symbol_id": a_sym["symbol_id"], "type": "Alpha",
        })
        b_sym = param_symbol(client, "b.py", s1)
        client.post("/api/accept", json={
            "session_id": s1, "symbol_id": b_sym["symbol_id"], "type": "Beta",
        })
        log = client.get(f"/api/session/{s1}/log").json()["decisions"]

        s2 = client.post("/api/session").json()["session_id"]
        for entry in log:
            if entry["action"] == "accept":
                response = client.post("/api/accept", json={
                    "session_id": s2,
                    "symbol_id": entry["symbol_id"],
                    "type": entry["type"],
                })
                assert response.status_code == 200
        map1 = client.get("/api/export-map", params={"session": s1}).content
        map2 = client.get("/api/export-map", params={"session": s2}).content
        assert map1 == map2

    def test_unknown_session_404(self, client):
        assert client.get("/api/files", params={"session": "nope"}).status_code == 404

    def test_log_is_append_only_sequence(self, client):
        s = client.post("/api/session").json()["session_id"]
        sym_a = param_symbol(client, "a.py", s)
        client.post("/api/reject", json={
            "session_id": s, "symbol_id": sym_a["symbol_id"], "type": "int",
        })
        client.post("/api/accept", json={
            "session_id": s, "symbol_id": sym_a["symbol_id"], "type": "Chosen",
        })
        log = client.get(f"/api/session/{s}/log").json()["decisions"]
        assert [e["seq"] for e in log] == [0, 1]
        assert [e["action"] for e in log] == ["reject", "accept"]


class TestPatchSuggestions:
    def test_accepted_bindings_become_patch_lines(self, client):
        session = client.post("/api/session").json()["session_id"]
        sym = param_symbol(client, "a.py", session)
        client.post("/api/accept", json={
            "session_id": session, "symbol_id": sym["symbol_id"], "type": "int",
        })
        payload = client.get("/api/patches", params={"session": session}).json()
        assert len(payload["patches"]) == 1
        patch = payload["patches"][0]
        assert patch["file"] == "a.py"
        assert patch["type"] == "int"
        assert patch["supported"] is True
        assert patch["patched_line"] == "def f(x: int):"

    def test_no_decisions_no_patches(self, client):
        session = client.post("/api/session").json()["session_id"]
        payload = client.get("/api/patches", params={"session": session}).json()
        assert payload["patches"] == []


class TestExportMap:
    def test_exported_bytes_load_as_map(self, client, tmp_path):
        blob = client.get("/api/export-map").content
        path = tmp_path / "map.bin"
        path.write_bytes(blob)
        tmap = load_map(os.fspath(path))
        assert len(tmap) == 1
        assert tmap.markers[0].type.render() == "int"
