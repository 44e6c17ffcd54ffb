"""Open-loop load generator and latency aggregation.

Dispatch times follow a fixed schedule (request i at i/rate seconds)
independent of completions, which is what exposes queueing tails on a
saturated backend. Reports give the peak tumbling-window average, a
linearly-interpolated p99, and the max, for both client- and
server-measured latency.
"""

from __future__ import annotations

import asyncio
import csv
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

from .errors import ContractError


@dataclass
class LoadTestPlan:
    rates: list[float]
    duration_sec: float
    pool: list[dict]
    seed: int = 0

    def __post_init__(self):
        if not self.rates or any(r <= 0 for r in self.rates):
            raise ContractError("rates must be positive")
        if self.duration_sec <= 0:
            raise ContractError("duration must be positive")
        if not self.pool:
            raise ContractError("input pool must be non-empty")


@dataclass
class LatencySample:
    send_time: float            # seconds since rate-run start (actual dispatch)
    scheduled_time: float       # i / rate
    status: str                 # ok | error
    latency_ms: float | None = None
    server_latency_ms: float | None = None


@dataclass
class RateReport:
    rate: float
    n_samples: int
    error_count: int
    achieved_rps: float
    peak_1min_avg_ms: float | None
    p99_ms: float | None
    max_ms: float | None
    server_peak_1min_avg_ms: float | None = None
    server_p99_ms: float | None = None
    server_max_ms: float | None = None


def percentile_linear(values, q: float) -> float:
    """Linear interpolation between order statistics (the report's fixed
    percentile definition)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("percentile of an empty sample")
    return float(np.percentile(values, q, method="linear"))


def _window_means(samples: list[LatencySample], window_sec: float,
                  value) -> list[float]:
    buckets: dict[int, list[float]] = {}
    for s in samples:
        v = value(s)
        if v is None:
            continue
        buckets.setdefault(int(s.send_time // window_sec), []).append(v)
    return [float(np.mean(buckets[k])) for k in sorted(buckets)]


def windowed_p99(samples: list[LatencySample], window_sec: float) -> list[float]:
    """Per-tumbling-window p99 of ok samples, bucketed by send time."""
    buckets: dict[int, list[float]] = {}
    for s in samples:
        if s.status == "ok" and s.latency_ms is not None:
            buckets.setdefault(int(s.send_time // window_sec), []).append(s.latency_ms)
    return [percentile_linear(buckets[k], 99) for k in sorted(buckets)]


def compute_report(samples: list[LatencySample], window_sec: float = 60.0,
                   rate: float = 0.0, duration_sec: float | None = None) -> RateReport:
    """Pure aggregation: same samples, same report."""
    errors = sum(1 for s in samples if s.status != "ok")
    ok = [s for s in samples if s.status == "ok" and s.latency_ms is not None]
    if duration_sec:
        achieved = len(samples) / duration_sec
    elif samples:
        span = max(s.send_time for s in samples) - min(s.send_time for s in samples)
        achieved = len(samples) / span if span > 0 else float(len(samples))
    else:
        achieved = 0.0
    if not ok:
        return RateReport(rate=rate, n_samples=len(samples), error_count=errors,
                          achieved_rps=achieved, peak_1min_avg_ms=None,
                          p99_ms=None, max_ms=None)
    lat = [s.latency_ms for s in ok]
    report = RateReport(
        rate=rate, n_samples=len(samples), error_count=errors, achieved_rps=achieved,
        peak_1min_avg_ms=max(_window_means(ok, window_sec, lambda s: s.latency_ms)),
        p99_ms=percentile_linear(lat, 99), max_ms=float(max(lat)))
    server = [s.server_latency_ms for s in ok if s.server_latency_ms is not None]
    if server:
        means = _window_means(ok, window_sec, lambda s: s.server_latency_ms)
        report.server_peak_1min_avg_ms = max(means)
        report.server_p99_ms = percentile_linear(server, 99)
        report.server_max_ms = float(max(server))
    return report


# ---------------------------------------------------------------------------
# open-loop driver
# ---------------------------------------------------------------------------


async def _one_request(client: httpx.AsyncClient, url: str, payload: dict,
                       scheduled: float, send_time: float,
                       samples: list[LatencySample]) -> None:
    t0 = time.perf_counter()
    try:
        r = await client.post(url, json=payload)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        if r.status_code == 200:
            body = r.json()
            samples.append(LatencySample(send_time=send_time, scheduled_time=scheduled,
                                         status="ok", latency_ms=latency_ms,
                                         server_latency_ms=body.get("latency_ms")))
        else:
            samples.append(LatencySample(send_time=send_time, scheduled_time=scheduled,
                                         status="error"))
    except (httpx.HTTPError, OSError):
        samples.append(LatencySample(send_time=send_time, scheduled_time=scheduled,
                                     status="error"))


async def _run_rate(url: str, rate: float, duration_sec: float, pool: list[dict],
                    seed: int, timeout: float) -> list[LatencySample]:
    rng = np.random.default_rng(seed)
    n = int(round(rate * duration_sec))
    samples: list[LatencySample] = []
    tasks = []
    limits = httpx.Limits(max_connections=2048, max_keepalive_connections=256)
    async with httpx.AsyncClient(timeout=timeout, limits=limits, trust_env=False) as client:
        t0 = time.perf_counter()
        for i in range(n):
            scheduled = i / rate
            now = time.perf_counter() - t0
            if scheduled > now:
                await asyncio.sleep(scheduled - now)
                now = time.perf_counter() - t0
            payload = pool[int(rng.integers(len(pool)))]
            tasks.append(asyncio.create_task(
                _one_request(client, url, payload, scheduled, now, samples)))
        if tasks:
            await asyncio.gather(*tasks)
    return samples


def run_load_test(plan: LoadTestPlan, url: str,
                  timeout: float = 60.0) -> dict[float, list[LatencySample]]:
    """Run each rate in sequence against the endpoint; connection failures
    are recorded as error samples and the run continues."""
    results: dict[float, list[LatencySample]] = {}
    for idx, rate in enumerate(plan.rates):
        results[rate] = asyncio.run(
            _run_rate(url, rate, plan.duration_sec, plan.pool, plan.seed + idx, timeout))
    return results


def reports_for_run(results: dict[float, list[LatencySample]], window_sec: float = 60.0,
                    duration_sec: float | None = None) -> list[RateReport]:
    return [compute_report(results[rate], window_sec, rate=rate, duration_sec=duration_sec)
            for rate in sorted(results)]


def write_report_csv(reports: list[RateReport], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rate", "avg_ms", "p99_ms", "max_ms", "error_count", "achieved_rps",
                    "server_avg_ms", "server_p99_ms", "server_max_ms"])
        for r in reports:
            w.writerow([r.rate,
                        _cell(r.peak_1min_avg_ms), _cell(r.p99_ms), _cell(r.max_ms),
                        r.error_count, repr(r.achieved_rps),
                        _cell(r.server_peak_1min_avg_ms), _cell(r.server_p99_ms),
                        _cell(r.server_max_ms)])


def _cell(v) -> str:
    return "" if v is None else repr(v)


class FixedDelayRuntime:
    """Mock backend runtime: a fixed service time per request, serialized by
    the service's single-worker queue. Sleeps most of the interval and spins
    the final stretch so the nominal delay is delivered precisely even on
    coarse timers."""

    SPIN_SEC = 0.008

    def __init__(self, delay_sec: float, catalog_size: int = 64,
                 model_version: str = "mock"):
        self.delay_sec = delay_sec
        self.catalog_size = catalog_size
        self.model_version = model_version

    def predict(self, messages, k):
        t_end = time.perf_counter() + self.delay_sec
        coarse = self.delay_sec - self.SPIN_SEC
        if coarse > 0:
            time.sleep(coarse)
        while time.perf_counter() < t_end:
            pass
        ids = list(range(k))
        return ids, [1.0 / self.catalog_size] * k
