"""Top-k template suggestion service.

Requests queue to a single inference worker per replica (batch size 1), so
saturation shows up as queue wait rather than concurrency artifacts. The
HTTP layer is threaded; inference is serialized; a full queue returns 429.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

import numpy as np

from . import bpe, nn
from .corpus import truncate_context
from .errors import ContractError
from .model import ClassifierHead, DecoderModel, forward_classify, load_checkpoint


@dataclass
class ClassifierRuntime:
    """A fine-tuned checkpoint plus everything needed to answer requests."""

    model: DecoderModel
    head: ClassifierHead
    vocab: bpe.Vocab
    max_len: int
    model_version: str

    @property
    def catalog_size(self) -> int:
        return self.head.n_classes

    def context_ids(self, messages: list[dict]) -> np.ndarray:
        """Serving-path truncation; identical to the training-path formatting."""
        texts = [str(m.get("text", "")) for m in messages]
        return truncate_context(texts, self.max_len, self.vocab)

    def predict(self, messages: list[dict], k: int) -> tuple[list[int], list[float]]:
        ids = self.context_ids(messages)
        tokens = ids[None, :].astype(np.int64)
        lengths = np.array([len(ids)])
        with nn.no_grad():
            logits = forward_classify(self.model, self.head, tokens, lengths).data[0]
        if not np.isfinite(logits).all():
            raise ArithmeticError("non-finite class logits")
        m = logits.max()
        e = np.exp((logits - m).astype(np.float64))
        probs = e / e.sum()
        order = np.argsort(-logits, kind="stable")[:k]
        return [int(i) for i in order], [float(probs[i]) for i in order]


def load_runtime(ckpt_dir: str | Path, vocab_path: str | Path) -> ClassifierRuntime:
    m, head, manifest = load_checkpoint(ckpt_dir)
    if head is None:
        raise ContractError(f"checkpoint {ckpt_dir} has no classifier head")
    vocab = bpe.load_vocab(vocab_path)
    extra = manifest.get("extra", {})
    max_len = int(extra.get("max_len", m.config.context_length))
    version = str(extra.get("model_version", manifest.get("vocab_hash", "dev")))
    return ClassifierRuntime(model=m, head=head, vocab=vocab,
                             max_len=min(max_len, m.config.context_length),
                             model_version=version)


class PredictionService:
    """Queue + worker wrapper around a predict function.

    `runtime` may be provided up front, via a loader callable (run on a
    background thread so /health can report loading), or injected later.
    """

    def __init__(self, runtime: ClassifierRuntime | None = None,
                 loader: Callable[[], ClassifierRuntime] | None = None,
                 queue_depth: int = 64,
                 events_path: str | Path | None = None,
                 predictions_log: str | Path | None = None):
        if queue_depth < 1:
            raise ContractError("queue_depth must be >= 1")
        self.runtime = runtime
        self._queue: queue.Queue = queue.Queue(maxsize=queue_depth)
        self.events_path = Path(events_path) if events_path else None
        self.predictions_log = Path(predictions_log) if predictions_log else None
        self._log_lock = threading.Lock()
        self.stats = {"requests": 0, "forward_ms_total": 0.0, "latency_ms_total": 0.0,
                      "rejected": 0, "events_accepted": 0}
        self._worker = threading.Thread(target=self._work, daemon=True)
        self._worker.start()
        if loader is not None:
            threading.Thread(target=self._load, args=(loader,), daemon=True).start()

    def _load(self, loader):
        rt = loader()
        self.runtime = rt

    def _work(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            payload, box, done = item
            try:
                t0 = time.perf_counter()
                ids, probs = self.runtime.predict(payload["messages"], payload["k"])
                box["forward_ms"] = (time.perf_counter() - t0) * 1000.0
                box["result"] = (ids, probs)
            except Exception as e:  # surfaced as a 500 by the HTTP layer
                box["error"] = e
            done.set()

    def close(self):
        self._queue.put(None)

    # -- request handling (transport-independent) ---------------------------

    def handle_predict(self, body: dict) -> tuple[int, dict]:
        if self.runtime is None:
            return 503, {"error": "model not loaded"}
        messages = body.get("messages")
        if not isinstance(messages, list) or len(messages) == 0:
            return 400, {"error": "messages must be a non-empty list"}
        k = body.get("k", 5)
        if not isinstance(k, int) or not (1 <= k <= self.runtime.catalog_size):
            return 400, {"error": f"k must lie in [1, {self.runtime.catalog_size}]"}
        t0 = time.perf_counter()
        box: dict = {}
        done = threading.Event()
        try:
            self._queue.put_nowait(({"messages": messages, "k": k}, box, done))
        except queue.Full:
            self.stats["rejected"] += 1
            return 429, {"error": "inference queue is full"}
        done.wait()
        if "error" in box:
            err = box["error"]
            if isinstance(err, ContractError):
                return 400, {"error": str(err)}
            return 500, {"error": str(err)}
        latency_ms = (time.perf_counter() - t0) * 1000.0
        ids, probs = box["result"]
        self.stats["requests"] += 1
        self.stats["forward_ms_total"] += box["forward_ms"]
        self.stats["latency_ms_total"] += latency_ms
        if self.predictions_log is not None:
            with self._log_lock, open(self.predictions_log, "a") as f:
                f.write(json.dumps({
                    "case_id": body.get("case_id", ""),
                    "timestamp": time.time(),
                    "template_ids": ids,
                    "model_version": self.runtime.model_version,
                }, sort_keys=True) + "\n")
        return 200, {"template_ids": ids, "probabilities": probs,
                     "model_version": self.runtime.model_version,
                     "latency_ms": latency_ms}

    def handle_health(self) -> tuple[int, dict]:
        if self.runtime is None:
            return 503, {"status": "loading"}
        return 200, {"status": "ok", "model_version": self.runtime.model_version,
                     "catalog_size": self.runtime.catalog_size}

    def handle_events(self, raw: bytes) -> tuple[int, dict]:
        if self.events_path is None:
            return 400, {"error": "event ingestion is not configured"}
        lines = [ln for ln in raw.decode().splitlines() if ln.strip()]
        parsed = []
        for ln in lines:
            try:
                rec = json.loads(ln)
                if "case_id" not in rec or "selection_time_sec" not in rec:
                    raise ValueError("missing fields")
                parsed.append(rec)
            except ValueError as e:
                return 400, {"error": f"bad event line: {e}"}
        with self._log_lock, open(self.events_path, "a") as f:
            for rec in parsed:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        self.stats["events_accepted"] += len(parsed)
        return 200, {"accepted": len(parsed)}


class _Handler(BaseHTTPRequestHandler):
    service: PredictionService  # set by make_server
    protocol_version = "HTTP/1.1"  # keep-alive; every reply carries Content-Length

    def log_message(self, fmt, *args):
        pass

    def _reply(self, status: int, payload: dict):
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/health":
            self._reply(*self.service.handle_health())
        else:
            self._reply(404, {"error": "not found"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        if self.path == "/v1/predict":
            try:
                body = json.loads(raw)
            except json.JSONDecodeError:
                self._reply(400, {"error": "invalid JSON"})
                return
            self._reply(*self.service.handle_predict(body))
        elif self.path == "/v1/events":
            self._reply(*self.service.handle_events(raw))
        else:
            self._reply(404, {"error": "not found"})


def make_server(service: PredictionService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    # small JSON bodies suffer delayed-ACK/Nagle interaction without this
    server.disable_nagle_algorithm = True
    return server


def run_server(service: PredictionService, host: str = "127.0.0.1", port: int = 8080):
    server = make_server(service, host, port)
    print(f"serving on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
