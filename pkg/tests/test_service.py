import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from gridcodex.service import create_app

from conftest import GLOSSARY_MD, REGULATION_MD, scripted_rules, write_scripted_fixture


@pytest.fixture
def client(engine):
    return TestClient(create_app(engine), raise_server_exceptions=False)


def wait_for_job(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/v1/jobs/{job_id}").json()
        if job["state"] in ("done", "failed"):
            return job
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} did not finish")


class TestQueryEndpoint:
    def test_unknown_region_400(self, client):
        resp = client.post("/v1/query", json={"question": "q", "region": "XX", "mode": "gridcodex"})
        assert resp.status_code == 400
        body = resp.json()
        assert body["code"] == "unknown_region" and "XX" in body["message"]

    def test_unknown_mode_400(self, client):
        resp = client.post("/v1/query", json={"question": "q", "region": "NL", "mode": "mega_rag"})
        assert resp.status_code == 400 and resp.json()["code"] == "unknown_mode"

    def test_plain_llm_trace_has_no_retrieval_stage(self, client):
        resp = client.post("/v1/query", json={
            "question": "what is the droop requirement", "region": "NL", "mode": "plain_llm",
        })
        assert resp.status_code == 200
        body = resp.json()
        trace = client.get(f"/v1/traces/{body['trace_id']}").json()
        assert trace["retrieval_hits"] == [] and "retrieve" not in trace["timings"]
        assert trace["term_hits"] == []

    def test_gridcodex_answer_with_citations(self, client):
        resp = client.post("/v1/query", json={
            "question": "fault ride through requirements for generating units",
            "region": "NL", "mode": "gridcodex",
        })
        assert resp.status_code == 200
        body = resp.json()
        assert not body["abstained"] and body["citations"]
        cite = body["citations"][0]
        assert set(cite) == {"chunk_id", "clause_path", "quote"}
        trace = client.get(f"/v1/traces/{body['trace_id']}").json()
        assert cite["chunk_id"] in [h["chunk_id"] for h in trace["retrieval_hits"]]

    def test_every_200_has_retrievable_trace(self, client):
        resp = client.post("/v1/query", json={
            "question": "droop setting", "region": "NL", "mode": "vanilla_rag",
        })
        assert resp.status_code == 200
        assert client.get(f"/v1/traces/{resp.json()['trace_id']}").status_code == 200

    def test_unknown_trace_404(self, client):
        resp = client.get("/v1/traces/deadbeef")
        assert resp.status_code == 404 and resp.json()["code"] == "unknown_trace"

    def test_invalid_k(self, client):
        resp = client.post("/v1/query", json={
            "question": "q", "region": "NL", "mode": "vanilla_rag", "k": 0,
        })
        assert resp.status_code == 400


class TestKbEndpoints:
    def test_list_kbs(self, client):
        body = client.get("/v1/kb").json()
        assert {m["kb_id"] for m in body["kbs"]} == {"t-nl", "f-nl"}

    def test_async_factual_build(self, client):
        resp = client.post("/v1/kb", json={
            "kb_id": "f-eu", "kind": "factual", "region": "EU",
            "documents": [{"doc_id": "eu-grid", "title": "EU Grid", "body": REGULATION_MD}],
        })
        assert resp.status_code == 202
        job = wait_for_job(client, resp.json()["job_id"])
        assert job["state"] == "done" and any("parsing" in s for s in job["progress"])
        assert any(m["kb_id"] == "f-eu" for m in client.get("/v1/kb").json()["kbs"])

    def test_terminology_build_from_files(self, client):
        resp = client.post("/v1/kb", json={
            "kb_id": "t-eu", "kind": "terminology", "region": "EU",
            "files": [{"name": "glossary.md", "content": GLOSSARY_MD}],
        })
        assert resp.status_code == 202
        assert wait_for_job(client, resp.json()["job_id"])["state"] == "done"

    def test_duplicate_kb_id_409(self, client):
        resp = client.post("/v1/kb", json={
            "kb_id": "f-nl", "kind": "factual", "region": "NL",
            "documents": [{"doc_id": "d", "title": "t", "body": "# 1 A\nbody text here."}],
        })
        assert resp.status_code == 409 and resp.json()["code"] == "duplicate_kb"

    def test_concurrent_builds_one_202_one_409(self, engine):
        # slow summarizer keeps the first build holding the kb lock
        slow = scripted_rules()
        for rule in slow:
            if rule.name == "summarize":
                rule.delay_ms = 300
        engine.providers.chats["summarizer"].rules = slow
        client = TestClient(create_app(engine), raise_server_exceptions=False)
        payload = {
            "kb_id": "f-race", "kind": "factual", "region": "NL",
            "documents": [{"doc_id": "d", "title": "t", "body": REGULATION_MD}],
        }
        first = client.post("/v1/kb", json=payload)
        second = client.post("/v1/kb", json=payload)
        codes = sorted([first.status_code, second.status_code])
        assert codes == [202, 409]
        accepted = first if first.status_code == 202 else second
        assert wait_for_job(client, accepted.json()["job_id"])["state"] == "done"

    def test_bad_kind_400(self, client):
        resp = client.post("/v1/kb", json={"kb_id": "x", "kind": "magic", "region": "NL"})
        assert resp.status_code == 400

    def test_unknown_job_404(self, client):
        assert client.get("/v1/jobs/none").status_code == 404

    def test_failed_build_reports_error_and_registers_nothing(self, client):
        resp = client.post("/v1/kb", json={
            "kb_id": "f-bad", "kind": "factual", "region": "NL",
            "documents": [{"doc_id": "d", "title": "t", "body": "   "}],
        })
        job = wait_for_job(client, resp.json()["job_id"])
        assert job["state"] == "failed" and "EmptyDocument" in job["error"]
        assert all(m["kb_id"] != "f-bad" for m in client.get("/v1/kb").json()["kbs"])


class TestEvalEndpoints:
    def test_eval_job_to_report(self, client, engine):
        items = [{
            "item_id": "i1", "region": "NL",
            "question": "droop setting default value",
            "reference_answer": "four percent",
            "gold_evidence": [["2", "2.1"]],
        }]
        resp = client.post("/v1/eval", json={"items": items, "modes": ["plain_llm", "gridcodex"]})
        assert resp.status_code == 202
        job_id = resp.json()["job_id"]
        wait_for_job(client, job_id)
        report = client.get(f"/v1/reports/{job_id}").json()
        assert {r["mode"] for r in report["rows"]} == {"plain_llm", "gridcodex"}
        assert report["config"]  # config echo

    def test_report_not_ready_409(self, client, engine):
        slow = scripted_rules()
        for rule in slow:
            if rule.name == "judge":
                rule.delay_ms = 400
        engine.providers.chats["judge"].rules = slow
        items = [{"item_id": "i1", "region": "NL", "question": "q", "reference_answer": "r"}]
        job_id = client.post("/v1/eval", json={"items": items, "modes": ["plain_llm"]}).json()["job_id"]
        resp = client.get(f"/v1/reports/{job_id}")
        assert resp.status_code == 409 and resp.json()["code"] == "report_not_ready"
        wait_for_job(client, job_id)

    def test_unknown_report_404(self, client):
        assert client.get("/v1/reports/none").status_code == 404

    def test_empty_items_400(self, client):
        assert client.post("/v1/eval", json={"items": []}).status_code == 400


class TestMetaEndpoints:
    def test_health(self, client):
        body = client.get("/v1/health").json()
        assert body["status"] == "ok"
        assert body["providers"]["synthesizer"]["type"] == "ScriptedChatProvider"

    def test_openapi_served(self, client):
        body = client.get("/v1/openapi").json()
        assert "/v1/query" in body["paths"]

    def test_bearer_token_enforced(self, engine, monkeypatch):
        monkeypatch.setenv("GCX_TOKEN", "hunter2")
        engine.config.bearer_token_env = "GCX_TOKEN"
        client = TestClient(create_app(engine), raise_server_exceptions=False)
        assert client.get("/v1/kb").status_code == 401
        ok = client.get("/v1/kb", headers={"Authorization": "Bearer hunter2"})
        assert ok.status_code == 200


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestCrashSafety:
    def test_kill_during_build_leaves_registry_clean(self, tmp_path):
        fixture = tmp_path / "fixtures"
        write_scripted_fixture(fixture, summarize_delay_ms=1000)
        data_dir = tmp_path / "data"
        port = free_port()
        config = tmp_path / "config.yaml"
        roles = ("refiner", "translator", "synthesizer", "summarizer", "judge")
        providers = {"embedder": {"type": "hash", "fixture_dir": "fixtures"}}
        providers.update({r: {"type": "scripted", "rules": "fixtures/chat_rules.json"} for r in roles})
        config.write_text(json.dumps({
            "data_dir": "data", "port": port,
            "raptor": {"seed": 1, "min_cluster_size": 2},
            "providers": providers,
        }), encoding="utf-8")  # YAML superset of JSON

        proc = subprocess.Popen(
            [sys.executable, "-m", "gridcodex", "serve", "--config", str(config)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
        base = f"http://127.0.0.1:{port}"
        try:
            for _ in range(200):
                try:
                    if httpx.get(f"{base}/v1/health", timeout=1.0).status_code == 200:
                        break
                except httpx.TransportError:
                    time.sleep(0.05)
            else:
                raise AssertionError(f"service did not start: {proc.stderr.read()!r}")

            body = REGULATION_MD * 3
            resp = httpx.post(f"{base}/v1/kb", json={
                "kb_id": "f-crash", "kind": "factual", "region": "NL",
                "documents": [{"doc_id": "d", "title": "t", "body": body}],
            }, timeout=5.0)
            assert resp.status_code == 202
            job_id = resp.json()["job_id"]
            # wait until the build is inside the slow summary stage, then kill
            deadline = time.time() + 20
            while time.time() < deadline:
                job = httpx.get(f"{base}/v1/jobs/{job_id}", timeout=2.0).json()
                if any("summary" in s for s in job["progress"]):
                    break
                assert job["state"] != "done", "build finished before the kill"
                time.sleep(0.02)
            os.kill(proc.pid, signal.SIGKILL)
            proc.wait(timeout=10)
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()

        from gridcodex.kb import KbRegistry

        registry = KbRegistry(data_dir)
        assert registry.list() == []
        assert not registry.exists("f-crash")
        # no partial KB directory either; only staging leftovers are allowed
        assert not any(Path(data_dir / "kb").iterdir())
