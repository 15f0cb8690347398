from __future__ import annotations

import threading
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from recurrent_scribe import (
    MockProvider,
    MockScript,
    ServiceConfig,
    create_app,
    hash_embedding,
)
from recurrent_scribe.errors import TransportError
from recurrent_scribe.memory import cosine_similarity

META = {
    "title": "The Harbor Light",
    "genre": "mystery",
    "background": "An old lighthouse keeper notices strange lights in the harbor.",
}


class _FaultAtGeneration(MockProvider):
    def __init__(self, fail_on: int):
        super().__init__(MockScript(seed=0))
        self.fail_on = fail_on
        self._generations = 0

    def complete(self, bundle, *, temperature=None):
        if bundle.kind == "generate":
            self._generations += 1
            if self._generations == self.fail_on:
                raise TransportError("backend fell over")
        return super().complete(bundle, temperature=temperature)


class _StallingProvider(MockProvider):
    def __init__(self):
        super().__init__(MockScript(seed=0))
        self.entered = threading.Event()
        self.release = threading.Event()
        self._stalled = False

    def complete(self, bundle, *, temperature=None):
        if bundle.kind == "generate" and not self._stalled:
            self._stalled = True
            self.entered.set()
            assert self.release.wait(timeout=10)
        return super().complete(bundle, temperature=temperature)


def _client(tmp_path: Path, provider=None, name="data") -> TestClient:
    config = ServiceConfig(data_dir=tmp_path / name)
    app = create_app(config, provider=provider or MockProvider(MockScript(seed=0)))
    return TestClient(app)


@pytest.fixture
def client(tmp_path) -> TestClient:
    return _client(tmp_path)


def _create(client, **extra) -> dict:
    resp = client.post("/sessions", json={**META, **extra})
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestCreateSession:
    def test_created_with_opening_state(self, client):
        body = _create(client)
        assert body["id"].startswith("s")
        assert body["step"] == 0
        assert body["mode"] == "writer"
        assert len(body["pending_plans"]) == 3
        assert body["last_content"]["timestep"] == 0
        assert body["short_term"]

    def test_session_file_written_through(self, client, tmp_path):
        body = _create(client)
        assert (tmp_path / "data" / body["id"] / "session.json").is_file()
        assert (tmp_path / "data" / body["id"] / "memory" / "records.jsonl").is_file()

    def test_same_inputs_get_deduplicated_ids(self, client):
        first = _create(client)
        second = _create(client)
        assert second["id"] == first["id"] + "-2"
        assert _create(client)["id"] == first["id"] + "-3"

    def test_fiction_mode(self, client):
        body = _create(client, mode="fiction")
        assert body["mode"] == "fiction"

    def test_incompatible_mode_perspective_is_400(self, client):
        resp = client.post("/sessions", json={**META, "mode": "fiction",
                                              "perspective": "third-person"})
        assert resp.status_code == 400
        assert resp.json()["error"] == "InvalidMetaError"

    @pytest.mark.parametrize("missing", ["title", "genre", "background"])
    def test_missing_meta_field_is_400(self, client, missing):
        body = {k: v for k, v in META.items() if k != missing}
        assert client.post("/sessions", json=body).status_code == 400

    def test_non_integer_seed_is_422(self, client):
        assert client.post("/sessions",
                           json={**META, "seed": "42"}).status_code == 422

    def test_unknown_override_is_422(self, client):
        resp = client.post("/sessions",
                           json={**META, "overrides": {"temperature": 2}})
        assert resp.status_code == 422

    def test_plan_count_override_takes_effect(self, client):
        body = _create(client, overrides={"plan_count": 2})
        assert len(body["pending_plans"]) == 2

    def test_provider_failure_is_502_and_leaves_no_files(self, tmp_path):
        class DownProvider(MockProvider):
            def complete(self, bundle, *, temperature=None):
                raise TransportError("no backend")

        client = _client(tmp_path, provider=DownProvider(), name="down")
        resp = client.post("/sessions", json=META)
        assert resp.status_code == 502
        assert list((tmp_path / "down").iterdir()) == []


class TestStep:
    def test_step_by_index(self, client):
        sid = _create(client)["id"]
        resp = client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        assert resp.status_code == 200
        body = resp.json()
        assert body["step"] == 1
        assert body["content"] == body["last_content"]
        assert len(body["pending_plans"]) == 3

    def test_step_by_free_text(self, client):
        sid = _create(client, mode="fiction")["id"]
        resp = client.post(f"/sessions/{sid}/step",
                           json={"plan_text": "I dive into the harbor."})
        assert resp.status_code == 200
        current = client.get(f"/sessions/{sid}").json()["current_plan"]
        assert current == {"text": "I dive into the harbor.", "origin": "human"}

    def test_each_step_appends_to_memory(self, client):
        sid = _create(client)["id"]
        for expected in (2, 3, 4):
            client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
            assert client.get(f"/sessions/{sid}").json()["memory_size"] == expected

    @pytest.mark.parametrize("body", [
        {},                                     # neither
        {"plan_index": 0, "plan_text": "x"},    # both
        {"plan_index": 9},                      # out of range
        {"plan_index": True},                   # wrong type
        {"plan_text": "   "},                   # blank
    ])
    def test_bad_plan_selection_is_422(self, client, body):
        sid = _create(client)["id"]
        assert client.post(f"/sessions/{sid}/step", json=body).status_code == 422

    def test_unknown_session_is_404(self, client):
        assert client.post("/sessions/ghost/step",
                           json={"plan_index": 0}).status_code == 404

    def test_backend_failure_mid_step_is_502_and_state_unchanged(self, tmp_path):
        client = _client(tmp_path, provider=_FaultAtGeneration(fail_on=1))
        sid = _create(client)["id"]
        before = client.get(f"/sessions/{sid}").json()
        resp = client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        assert resp.status_code == 502
        assert client.get(f"/sessions/{sid}").json() == before


class TestEdits:
    def test_replace_short_term(self, client):
        sid = _create(client)["id"]
        resp = client.patch(f"/sessions/{sid}",
                            json={"kind": "replace_short_term",
                                  "text": "She keeps the logbook hidden."})
        assert resp.status_code == 200
        assert resp.json()["short_term"] == "She keeps the logbook hidden."
        assert client.get(f"/sessions/{sid}").json()["short_term"] \
            == "She keeps the logbook hidden."

    def test_replace_plan(self, client):
        sid = _create(client)["id"]
        resp = client.patch(f"/sessions/{sid}",
                            json={"kind": "replace_plan", "index": 1,
                                  "text": "Confront the harbormaster."})
        assert resp.status_code == 200
        assert resp.json()["pending_plans"][1] == {
            "text": "Confront the harbormaster.", "origin": "human-edited"}

    def test_replace_last_content_changes_retrieval(self, client):
        sid = _create(client)["id"]
        for _ in range(2):
            client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        new_text = "A zinc lantern rolled across the quay in total silence."
        resp = client.patch(f"/sessions/{sid}",
                            json={"kind": "replace_last_content", "text": new_text})
        assert resp.status_code == 200
        assert resp.json()["last_content"]["text"] == new_text
        assert resp.json()["memory_size"] == 3  # replaced, not appended
        hits = client.get(f"/sessions/{sid}/memory",
                          params={"query": new_text, "k": 1}).json()["entries"]
        assert hits[0]["timestep"] == 2
        assert hits[0]["text"] == new_text

    @pytest.mark.parametrize("body", [
        {"kind": "replace_plan", "index": 9, "text": "x"},
        {"kind": "replace_plan", "text": "missing index"},
        {"kind": "replace_short_term", "text": "   "},
        {"kind": "rewrite_everything", "text": "x"},
        {"kind": "replace_short_term"},
    ])
    def test_bad_edit_is_422(self, client, body):
        sid = _create(client)["id"]
        assert client.patch(f"/sessions/{sid}", json=body).status_code == 422

    def test_unknown_session_is_404(self, client):
        resp = client.patch("/sessions/ghost",
                            json={"kind": "replace_short_term", "text": "x"})
        assert resp.status_code == 404


class TestInspection:
    def test_get_full_view(self, client):
        sid = _create(client)["id"]
        client.post(f"/sessions/{sid}/step", json={"plan_index": 2})
        body = client.get(f"/sessions/{sid}").json()
        assert body["meta"]["title"] == META["title"]
        assert body["meta"]["perspective"] == "third-person"
        assert [c["timestep"] for c in body["transcript"]] == [0, 1]
        assert body["memory_size"] == 2
        assert body["current_plan"]["origin"] == "model"

    def test_get_is_idempotent(self, client):
        sid = _create(client)["id"]
        assert client.get(f"/sessions/{sid}").json() \
            == client.get(f"/sessions/{sid}").json()

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/ghost").status_code == 404

    def test_memory_search_matches_exact_scan(self, client):
        sid = _create(client)["id"]
        for _ in range(4):
            client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        query = "the harbor lights moved again"
        hits = client.get(f"/sessions/{sid}/memory",
                          params={"query": query, "k": 3}).json()["entries"]

        transcript = client.get(f"/sessions/{sid}").json()["transcript"]
        qvec = hash_embedding(query, 64)
        oracle = sorted(
            ((cosine_similarity(qvec, hash_embedding(c["text"], 64)),
              c["timestep"]) for c in transcript),
            key=lambda pair: (-pair[0], pair[1]))[:3]
        assert [(h["similarity"], h["timestep"]) for h in hits] == oracle
        sims = [h["similarity"] for h in hits]
        assert sims == sorted(sims, reverse=True)

    @pytest.mark.parametrize("params", [
        {"query": "", "k": 3},
        {"query": "   ", "k": 3},
        {"query": "x", "k": 0},
    ])
    def test_bad_memory_params_are_422(self, client, params):
        sid = _create(client)["id"]
        resp = client.get(f"/sessions/{sid}/memory", params=params)
        assert resp.status_code == 422

    def test_export_plain(self, client):
        sid = _create(client)["id"]
        client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        resp = client.get(f"/sessions/{sid}/export")
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("text/plain")
        transcript = client.get(f"/sessions/{sid}").json()["transcript"]
        assert resp.text == "\n\n".join(c["text"] for c in transcript)

    def test_export_markdown(self, client):
        sid = _create(client)["id"]
        resp = client.get(f"/sessions/{sid}/export",
                          params={"format": "markdown"})
        assert resp.headers["content-type"].startswith("text/markdown")
        assert resp.text.startswith(f"# {META['title']}")
        assert "## Timestep 0" in resp.text

    def test_unknown_export_format_is_422(self, client):
        sid = _create(client)["id"]
        resp = client.get(f"/sessions/{sid}/export", params={"format": "pdf"})
        assert resp.status_code == 422


class TestAutorun:
    def test_zero_steps(self, client):
        sid = _create(client)["id"]
        body = client.post(f"/sessions/{sid}/autorun", json={"n_steps": 0}).json()
        assert body == {"id": sid, "start_step": 0, "end_step": 0,
                        "requested": 0, "completed": 0,
                        "failed_step": None, "error": None}

    def test_five_steps(self, client):
        sid = _create(client)["id"]
        body = client.post(f"/sessions/{sid}/autorun", json={"n_steps": 5}).json()
        assert (body["start_step"], body["end_step"]) == (0, 5)
        assert body["completed"] == 5 and body["failed_step"] is None
        assert client.get(f"/sessions/{sid}").json()["memory_size"] == 6

    @pytest.mark.parametrize("body", [{}, {"n_steps": -1}, {"n_steps": "many"}])
    def test_bad_count_is_422(self, client, body):
        sid = _create(client)["id"]
        assert client.post(f"/sessions/{sid}/autorun", json=body).status_code == 422

    def test_fault_mid_run_keeps_and_persists_partial_progress(self, tmp_path):
        client = _client(tmp_path, provider=_FaultAtGeneration(fail_on=3))
        sid = _create(client)["id"]
        body = client.post(f"/sessions/{sid}/autorun", json={"n_steps": 5}).json()
        assert body["completed"] == 2
        assert body["end_step"] == 2
        assert body["failed_step"] == 3
        assert "fell over" in body["error"]
        # a fresh process over the same data dir sees the two committed steps
        restarted = _client(tmp_path)
        assert restarted.get(f"/sessions/{sid}").json()["step"] == 2


class TestConcurrency:
    def test_second_mutation_while_step_in_flight_is_409(self, tmp_path):
        provider = _StallingProvider()
        client = _client(tmp_path, provider=provider)
        sid = _create(client)["id"]
        results = {}

        def worker():
            results["resp"] = client.post(f"/sessions/{sid}/step",
                                          json={"plan_index": 0})

        thread = threading.Thread(target=worker)
        thread.start()
        assert provider.entered.wait(timeout=10)
        try:
            for attempt in (
                client.post(f"/sessions/{sid}/step", json={"plan_index": 1}),
                client.patch(f"/sessions/{sid}",
                             json={"kind": "replace_short_term", "text": "x y."}),
                client.post(f"/sessions/{sid}/autorun", json={"n_steps": 1}),
            ):
                assert attempt.status_code == 409
                assert attempt.json()["error"] == "StepInFlightError"
        finally:
            provider.release.set()
            thread.join(timeout=10)
        assert results["resp"].status_code == 200
        assert client.get(f"/sessions/{sid}").json()["step"] == 1


class TestDurability:
    def test_restart_recovers_sessions_and_keeps_stepping(self, tmp_path):
        client = _client(tmp_path)
        sid = _create(client)["id"]
        client.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        client.patch(f"/sessions/{sid}",
                     json={"kind": "replace_short_term",
                           "text": "She trusts nobody now."})
        before = client.get(f"/sessions/{sid}").json()

        restarted = _client(tmp_path)  # same data dir, fresh cache
        assert restarted.get(f"/sessions/{sid}").json() == before
        resp = restarted.post(f"/sessions/{sid}/step", json={"plan_index": 0})
        assert resp.status_code == 200
        assert resp.json()["step"] == 2
