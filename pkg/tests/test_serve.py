import json
import threading
import time

import httpx
import numpy as np
import pytest

from suggestlab import bpe, corpus, model, nn, serve
from suggestlab.loadtest import FixedDelayRuntime


@pytest.fixture(scope="module")
def runtime():
    catalog = corpus.default_catalog(8)
    cases = corpus.generate_corpus(3, 300, catalog, 0.2)
    text = "\n".join(corpus.format_pretraining(t) for t in cases)
    vocab = bpe.train_bpe(text.encode(), 320)
    cfg = model.ModelConfig(n_layers=1, n_heads=2, d_model=32, d_ff=64,
                            vocab_size=vocab.size, context_length=64)
    m = model.DecoderModel(cfg, seed=0)
    head = model.ClassifierHead(32, catalog.size, seed=1)
    return serve.ClassifierRuntime(model=m, head=head, vocab=vocab, max_len=48,
                                   model_version="test-v1")


@pytest.fixture()
def server(runtime, tmp_path):
    svc = serve.PredictionService(runtime=runtime, queue_depth=32,
                                  events_path=tmp_path / "events.ndjson",
                                  predictions_log=tmp_path / "preds.ndjson")
    srv = serve.make_server(svc)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield svc, srv, f"http://127.0.0.1:{srv.server_address[1]}", tmp_path
    srv.shutdown()
    svc.close()


def _messages(text="my gadoka balance is wrong"):
    return [{"role": "CUSTOMER", "text": text}]


def test_health_ok(server):
    _, _, url, _ = server
    r = httpx.get(url + "/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["catalog_size"] == 8
    assert body["model_version"] == "test-v1"


def test_health_503_before_load():
    svc = serve.PredictionService(runtime=None, queue_depth=4)
    srv = serve.make_server(svc)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    url = f"http://127.0.0.1:{srv.server_address[1]}"
    r = httpx.get(url + "/health")
    assert r.status_code == 503
    r = httpx.post(url + "/v1/predict", json={"case_id": "c", "messages": _messages(), "k": 1})
    assert r.status_code == 503
    srv.shutdown()
    svc.close()


def test_predict_k5(server):
    _, _, url, _ = server
    r = httpx.post(url + "/v1/predict", json={"case_id": "c1", "messages": _messages(), "k": 5})
    assert r.status_code == 200
    body = r.json()
    assert len(body["template_ids"]) == 5
    assert len(body["probabilities"]) == 5
    probs = body["probabilities"]
    assert all(0.0 < p < 1.0 for p in probs)
    assert all(a >= b for a, b in zip(probs, probs[1:]))
    assert sum(probs) <= 1.0 + 1e-9
    assert body["latency_ms"] > 0


def test_predict_deterministic_minus_latency(server):
    _, _, url, _ = server
    req = {"case_id": "c2", "messages": _messages("pafomu refund zuzu"), "k": 3}
    a = httpx.post(url + "/v1/predict", json=req).json()
    b = httpx.post(url + "/v1/predict", json=req).json()
    a.pop("latency_ms"), b.pop("latency_ms")
    assert a == b


def test_predict_full_catalog_sums_to_one(server):
    _, _, url, _ = server
    r = httpx.post(url + "/v1/predict", json={"case_id": "c3", "messages": _messages(), "k": 8})
    assert sum(r.json()["probabilities"]) == pytest.approx(1.0, abs=1e-6)


def test_predict_validation(server):
    _, _, url, _ = server
    r = httpx.post(url + "/v1/predict", json={"case_id": "c", "messages": [], "k": 5})
    assert r.status_code == 400
    r = httpx.post(url + "/v1/predict", json={"case_id": "c", "messages": _messages(), "k": 9})
    assert r.status_code == 400
    r = httpx.post(url + "/v1/predict", json={"case_id": "c", "messages": _messages(), "k": 0})
    assert r.status_code == 400
    r = httpx.post(url + "/v1/predict", content=b"{not json", headers={"Content-Type": "application/json"})
    assert r.status_code == 400


def test_overlong_message_truncated_not_rejected(server, runtime):
    _, _, url, _ = server
    long_text = " ".join(f"w{i}" for i in range(4000))
    r = httpx.post(url + "/v1/predict", json={"case_id": "c", "messages": _messages(long_text), "k": 2})
    assert r.status_code == 200
    assert len(runtime.context_ids([{"role": "CUSTOMER", "text": long_text}])) == runtime.max_len


def test_serving_truncation_matches_training_path(runtime):
    catalog = corpus.default_catalog(8)
    cases = corpus.generate_corpus(17, 200, catalog, 0.4)
    for t in cases:
        idx = t.labeled_indices()[0]
        ex = corpus.build_classification_example(t, idx, runtime.max_len, runtime.vocab)
        req_messages = [{"role": m.role, "text": m.text} for m in t.messages[:idx]]
        ids = runtime.context_ids(req_messages)
        assert list(ids) == list(ex.token_ids)


def test_queue_overflow_returns_429():
    svc = serve.PredictionService(runtime=FixedDelayRuntime(0.2, catalog_size=8), queue_depth=1)
    srv = serve.make_server(svc)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    url = f"http://127.0.0.1:{srv.server_address[1]}"

    codes = []

    def fire():
        try:
            r = httpx.post(url + "/v1/predict",
                           json={"case_id": "c", "messages": _messages(), "k": 1}, timeout=5)
            codes.append(r.status_code)
        except httpx.HTTPError:
            codes.append(-1)

    threads = [threading.Thread(target=fire) for _ in range(6)]
    for t in threads:
        t.start()
        time.sleep(0.01)
    for t in threads:
        t.join()
    assert 429 in codes
    assert codes.count(200) >= 1
    srv.shutdown()
    svc.close()


def test_events_ingest_appends_ndjson(server):
    _, _, url, tmp_path = server
    lines = [json.dumps({"case_id": "e1", "timestamp": "2024-01-01T00:00:00+00:00",
                         "group": "treatment", "shown_template_ids": [1, 2, 3, 4, 5],
                         "chosen_template_id": 2, "selection_time_sec": 8.5,
                         "model_version": "test-v1"}),
             json.dumps({"case_id": "e2", "timestamp": "2024-01-01T00:01:00+00:00",
                         "group": "holdout", "shown_template_ids": [],
                         "chosen_template_id": 4, "selection_time_sec": 17.0,
                         "model_version": "test-v1"})]
    r = httpx.post(url + "/v1/events", content="\n".join(lines).encode())
    assert r.status_code == 200
    assert r.json()["accepted"] == 2
    saved = (tmp_path / "events.ndjson").read_text().strip().splitlines()
    assert len(saved) == 2
    assert json.loads(saved[0])["case_id"] == "e1"


def test_events_ingest_rejects_garbage(server):
    _, _, url, _ = server
    r = httpx.post(url + "/v1/events", content=b"not json at all")
    assert r.status_code == 400


def test_predictions_shadow_log(server):
    _, _, url, tmp_path = server
    httpx.post(url + "/v1/predict", json={"case_id": "shadow-1", "messages": _messages(), "k": 5})
    logged = [json.loads(l) for l in (tmp_path / "preds.ndjson").read_text().splitlines()]
    assert any(rec["case_id"] == "shadow-1" and len(rec["template_ids"]) == 5 for rec in logged)


def test_unknown_route_404(server):
    _, _, url, _ = server
    assert httpx.get(url + "/nope").status_code == 404
    assert httpx.post(url + "/nope", json={}).status_code == 404


def test_plumbing_overhead_under_20_percent():
    # server-measured latency at 1 rps should be dominated by forward time
    catalog = corpus.default_catalog(16)
    cases = corpus.generate_corpus(23, 200, catalog, 0.2)
    text = "\n".join(corpus.format_pretraining(t) for t in cases)
    vocab = bpe.train_bpe(text.encode(), 400)
    preset = model.family_preset("nano", vocab_size=vocab.size, context_length=128)
    runtime = serve.ClassifierRuntime(
        model=model.DecoderModel(preset.config, seed=0),
        head=model.ClassifierHead(preset.config.d_model, catalog.size, seed=0),
        vocab=vocab, max_len=128, model_version="nano-test")
    svc = serve.PredictionService(runtime=runtime, queue_depth=16)
    srv = serve.make_server(svc)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    url = f"http://127.0.0.1:{srv.server_address[1]}/v1/predict"
    long_case = max(cases, key=lambda t: sum(len(m.text) for m in t.messages))
    body = {"case_id": "p", "k": 5,
            "messages": [{"role": m.role, "text": m.text} for m in long_case.messages]}
    with httpx.Client(trust_env=False) as client:
        client.post(url, json=body)  # warmup
        svc.stats.update(requests=0, forward_ms_total=0.0, latency_ms_total=0.0)
        for _ in range(10):
            r = client.post(url, json=body)
            assert r.status_code == 200
            time.sleep(1.0)
    plumbing = 1.0 - svc.stats["forward_ms_total"] / svc.stats["latency_ms_total"]
    srv.shutdown()
    svc.close()
    assert svc.stats["requests"] == 10
    assert plumbing < 0.20, f"plumbing fraction {plumbing:.3f}"
