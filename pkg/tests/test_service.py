import pytest
from fastapi.testclient import TestClient

from ticketsearch.config import ServiceConfig
from ticketsearch.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(ServiceConfig(), tmp_path / "data")
    with TestClient(app) as c:
        yield c


def ingest_web(client, records):
    resp = client.post("/ingest/web", json={"records": records})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]
    client.app.state.orchestrator.wait(job_id, timeout=30)
    return job_id


DOCS = [
    {
        "id": "kb-gpu",
        "title": "GPU memory errors",
        "text": "Jobs that fail with cuda out of memory should request more gpu memory.",
        "department": "hpc",
        "last_updated": "2025-02-01T10:00:00Z",
    },
    {
        "id": "kb-quota",
        "title": "Disk quota",
        "text": "Users over their disk quota should clean scratch storage.",
        "department": "storage",
        "last_updated": "2025-03-01T10:00:00Z",
    },
]


def test_health_on_empty_corpus(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["generation"] == 1
    assert body["documents"] == 0
    assert body["embedder_id"].startswith("hashing-embedder:")
    assert body["reranker_id"]


def test_search_empty_corpus_returns_no_results(client):
    resp = client.post("/search", json={"query": "gpu memory"})
    assert resp.status_code == 200
    assert resp.json()["results"] == []


def test_ingest_then_search(client):
    ingest_web(client, DOCS)
    health = client.get("/health").json()
    assert health["documents"] == 2
    assert health["generation"] == 2

    resp = client.post("/search", json={"query": "cuda out of memory"})
    body = resp.json()
    assert resp.status_code == 200
    assert body["results"][0]["ticket_id"] == "kb-gpu"
    top = body["results"][0]
    assert top["source_type"] == "web"
    assert top["link"].endswith("/Ticket/Display.html?id=kb-gpu")
    assert "memory" in top["snippet"]
    assert set(body["timings"]) == {"variants", "dense", "lexical", "fusion", "rerank"}
    assert "warning" not in body


def test_search_filters(client):
    ingest_web(client, DOCS)
    resp = client.post("/search", json={"query": "quota", "department": "storage"})
    ids = [r["ticket_id"] for r in resp.json()["results"]]
    assert ids == ["kb-quota"]

    resp = client.post(
        "/search",
        json={"query": "memory quota", "date_from": "2025-02-15", "date_to": "2025-03-15"},
    )
    ids = [r["ticket_id"] for r in resp.json()["results"]]
    assert ids == ["kb-quota"]


def test_search_final_k_override(client):
    ingest_web(client, DOCS)
    resp = client.post("/search", json={"query": "disk gpu memory quota", "final_k": 1})
    assert len(resp.json()["results"]) == 1


@pytest.mark.parametrize(
    "payload,field",
    [
        ({"query": "   "}, "query"),
        ({"query": "x", "department": "legal"}, "department"),
        ({"query": "x", "date_from": "not-a-date"}, "date_from"),
        ({"query": "x", "date_from": "2025-05-01", "date_to": "2025-04-01"}, "date_from"),
        ({"query": "x", "source_types": ["carrier-pigeon"]}, "source_types"),
        ({"query": "x", "final_k": 0}, "final_k"),
    ],
)
def test_search_validation_errors(client, payload, field):
    resp = client.post("/search", json=payload)
    assert resp.status_code == 400
    err = resp.json()["error"]
    assert err["code"] == "invalid_request"
    assert err["field"] == field


def test_missing_query_is_400_not_422(client):
    resp = client.post("/search", json={})
    assert resp.status_code == 400
    assert resp.json()["error"]["code"] == "invalid_request"


def test_ingest_validation_error_shape(client):
    bad = {"records": [{"id": "x", "text": "hello", "department": "legal"}]}
    resp = client.post("/ingest/pdf", json=bad)
    assert resp.status_code == 400
    err = resp.json()["error"]
    assert err["field"] == "department"
    assert "legal" in err["message"]


def test_job_lifecycle_via_api(client):
    resp = client.post("/ingest/web", json={"records": DOCS})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]

    seen = set()
    for _ in range(500):
        body = client.get(f"/jobs/{job_id}").json()
        seen.add(body["state"])
        if body["state"] in ("succeeded", "failed"):
            break
    assert body["state"] == "succeeded"
    assert body["progress"] == 1.0
    assert seen <= {"queued", "running", "succeeded"}

    listing = client.get("/jobs").json()["jobs"]
    assert any(j["job_id"] == job_id for j in listing)


def test_unknown_job_is_404(client):
    resp = client.get("/jobs/nope")
    assert resp.status_code == 404
    assert resp.json()["error"]["code"] == "not_found"


def test_rt_weekly_endpoint(client):
    resp = client.post(
        "/ingest/rt-weekly",
        json={"synthetic": {"seed": 3, "tickets": 4}, "now": "2025-07-01T00:00:00Z"},
    )
    assert resp.status_code == 202
    manifest = client.app.state.orchestrator.wait(resp.json()["job_id"], timeout=30)
    assert manifest.state == "succeeded"
    assert client.get("/health").json()["documents"] > 0
    found = client.post("/search", json={"query": "cluster"}).json()
    assert all(r["source_type"] == "ticket" for r in found["results"])


def test_generation_increments_per_mutation(client):
    ingest_web(client, DOCS[:1])
    assert client.get("/health").json()["generation"] == 2
    ingest_web(client, DOCS[1:])
    assert client.get("/health").json()["generation"] == 3


def test_reranker_fallback_surfaces_warning(tmp_path):
    class BrokenReranker:
        identity = "broken:v0"

        def score(self, prompt, text):
            raise RuntimeError("model offline")

    app = create_app(ServiceConfig(), tmp_path / "data", reranker=BrokenReranker())
    with TestClient(app) as client:
        ingest_web(client, DOCS)
        body = client.post("/search", json={"query": "gpu memory"}).json()
        assert body["warning"] == "reranker unavailable; results use fused order"
        assert body["results"]
