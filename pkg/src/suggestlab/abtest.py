"""Online-selection analytics: holdout assignment, selection-time summaries,
Mann-Kendall trend and Welch t-test, and the per-template accuracy-vs-savings
analysis. Also houses the event simulator used to generate fixtures at volume.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .errors import ContractError

GROUP_TREATMENT = "treatment"
GROUP_HOLDOUT = "holdout"


@dataclass
class SelectionEvent:
    case_id: str
    timestamp: float  # epoch seconds, UTC
    group: str
    shown_template_ids: list[int]
    chosen_template_id: int
    selection_time_sec: float
    model_version: str = ""

    def __post_init__(self):
        if self.group not in (GROUP_TREATMENT, GROUP_HOLDOUT):
            raise ContractError(f"unknown group {self.group!r}")
        if self.group == GROUP_HOLDOUT and self.shown_template_ids:
            raise ContractError("holdout events must have an empty shown list")
        if self.selection_time_sec <= 0:
            raise ContractError("selection_time_sec must be positive")


@dataclass(frozen=True)
class TrendResult:
    S: int
    var_S: float
    z: float
    p_value: float
    direction: str  # increasing | decreasing | none


@dataclass(frozen=True)
class ABResult:
    mean_a: float
    mean_b: float
    t_stat: float
    dof: float
    p_value: float


@dataclass(frozen=True)
class TemplateSavings:
    template_id: int
    volume: int
    accuracy: float
    mean_saving: float


# ---------------------------------------------------------------------------
# holdout assignment: keyed SHA-256, uniform in [0, 1)
# ---------------------------------------------------------------------------


def assignment_value(case_id: str, salt: str) -> float:
    digest = hashlib.sha256(f"{salt}:{case_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def assign_group(case_id: str, holdout_fraction: float, salt: str) -> str:
    if not (0.0 < holdout_fraction < 1.0):
        raise ContractError("holdout_fraction must lie in (0, 1)")
    return GROUP_HOLDOUT if assignment_value(case_id, salt) < holdout_fraction else GROUP_TREATMENT


# ---------------------------------------------------------------------------
# selection-time summaries (weekly buckets)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BucketSummary:
    bucket_start: str  # ISO date of the bucket's Monday
    treatment_mean: float | None
    holdout_mean: float | None
    difference: float | None  # holdout - treatment; positive = savings
    n_treatment: int
    n_holdout: int


def _week_start(ts: float) -> str:
    d = datetime.fromtimestamp(ts, timezone.utc).date()
    return (d - timedelta(days=d.weekday())).isoformat()


def selection_time_summary(events: list[SelectionEvent], bucket: str = "week") -> list[BucketSummary]:
    if bucket != "week":
        raise ContractError(f"unsupported bucket {bucket!r}")
    if not events:
        raise ContractError("no events to summarize")
    grouped: dict[str, dict[str, list[float]]] = {}
    for e in events:
        wk = _week_start(e.timestamp)
        grouped.setdefault(wk, {GROUP_TREATMENT: [], GROUP_HOLDOUT: []})
        grouped[wk][e.group].append(e.selection_time_sec)
    out = []
    for wk in sorted(grouped):
        t_times = grouped[wk][GROUP_TREATMENT]
        h_times = grouped[wk][GROUP_HOLDOUT]
        t_mean = float(np.mean(t_times)) if t_times else None
        h_mean = float(np.mean(h_times)) if h_times else None
        diff = (h_mean - t_mean) if (t_mean is not None and h_mean is not None) else None
        out.append(BucketSummary(bucket_start=wk, treatment_mean=t_mean, holdout_mean=h_mean,
                                 difference=diff, n_treatment=len(t_times), n_holdout=len(h_times)))
    return out


# ---------------------------------------------------------------------------
# Mann-Kendall trend test (tie-corrected, continuity-corrected)
# ---------------------------------------------------------------------------


def mann_kendall(series) -> TrendResult:
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise ContractError("Mann-Kendall needs a 1-d series with n >= 3")
    n = x.size
    diffs = np.sign(x[None, :] - x[:, None])
    s = int(np.triu(diffs, k=1).sum())
    _, counts = np.unique(x, return_counts=True)
    tie_term = float((counts * (counts - 1) * (2 * counts + 5)).sum())
    var_s = (n * (n - 1) * (2 * n + 5) - tie_term) / 18.0
    if s > 0:
        z = (s - 1) / math.sqrt(var_s) if var_s > 0 else 0.0
    elif s < 0:
        z = (s + 1) / math.sqrt(var_s) if var_s > 0 else 0.0
    else:
        z = 0.0
    p = 2.0 * float(sps.norm.sf(abs(z)))
    direction = "increasing" if s > 0 else ("decreasing" if s < 0 else "none")
    return TrendResult(S=s, var_S=var_s, z=z, p_value=min(1.0, p), direction=direction)


# ---------------------------------------------------------------------------
# Welch's t-test (the A/B comparison)
# ---------------------------------------------------------------------------


def welch_t_test(a, b) -> ABResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ContractError("both samples need at least 2 observations")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        raise ContractError("both samples have zero variance")
    na, nb = a.size, b.size
    se2_a, se2_b = va / na, vb / nb
    t_stat = (float(a.mean()) - float(b.mean())) / math.sqrt(se2_a + se2_b)
    dof = (se2_a + se2_b) ** 2 / (
        (se2_a ** 2 / (na - 1)) + (se2_b ** 2 / (nb - 1)))
    p = 2.0 * float(sps.t.sf(abs(t_stat), dof))
    return ABResult(mean_a=float(a.mean()), mean_b=float(b.mean()),
                    t_stat=t_stat, dof=dof, p_value=min(1.0, p))


# ---------------------------------------------------------------------------
# per-template accuracy vs selection-time savings
# ---------------------------------------------------------------------------


def accuracy_vs_savings(events: list[SelectionEvent], predictions: list[dict],
                        top_n_templates: int) -> list[TemplateSavings]:
    """Holdout accuracy (was the advocate's choice among the shadow top-5?)
    paired with treatment-vs-holdout mean selection-time difference, per
    template, ordered by volume and cut to the top_n most used."""
    if top_n_templates < 1:
        raise ContractError("top_n_templates must be >= 1")
    shadow: dict[str, list[tuple[float, list[int]]]] = {}
    for p in predictions:
        shadow.setdefault(str(p["case_id"]), []).append(
            (float(p["timestamp"]), [int(t) for t in p["template_ids"]]))
    for rows in shadow.values():
        rows.sort(key=lambda r: r[0])

    volume: dict[int, int] = {}
    holdout_hits: dict[int, list[int]] = {}
    holdout_times: dict[int, list[float]] = {}
    treatment_times: dict[int, list[float]] = {}
    for e in events:
        tid = e.chosen_template_id
        volume[tid] = volume.get(tid, 0) + 1
        if e.group == GROUP_TREATMENT:
            treatment_times.setdefault(tid, []).append(e.selection_time_sec)
            continue
        holdout_times.setdefault(tid, []).append(e.selection_time_sec)
        rows = shadow.get(e.case_id)
        if not rows:
            continue
        preceding = [ids for ts, ids in rows if ts <= e.timestamp]
        if not preceding:
            continue
        holdout_hits.setdefault(tid, []).append(int(tid in preceding[-1]))

    out = []
    ranked = sorted(volume, key=lambda t: (-volume[t], t))[:top_n_templates]
    for tid in ranked:
        hits = holdout_hits.get(tid)
        if not hits:
            continue  # no holdout traffic (or no shadow predictions) for this template
        h_times = holdout_times.get(tid, [])
        t_times = treatment_times.get(tid, [])
        if not h_times or not t_times:
            continue
        out.append(TemplateSavings(
            template_id=tid, volume=volume[tid],
            accuracy=float(np.mean(hits)),
            mean_saving=float(np.mean(h_times) - np.mean(t_times))))
    return out


# ---------------------------------------------------------------------------
# NDJSON event/prediction logs
# ---------------------------------------------------------------------------


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, timezone.utc).isoformat()


def _from_iso(text: str | float) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    return datetime.fromisoformat(str(text).replace("Z", "+00:00")).timestamp()


def save_events(events: list[SelectionEvent], path: str | Path) -> None:
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps({
                "case_id": e.case_id, "timestamp": _iso(e.timestamp), "group": e.group,
                "shown_template_ids": e.shown_template_ids,
                "chosen_template_id": e.chosen_template_id,
                "selection_time_sec": e.selection_time_sec,
                "model_version": e.model_version,
            }, sort_keys=True) + "\n")


def event_from_dict(rec: dict) -> SelectionEvent:
    return SelectionEvent(
        case_id=str(rec["case_id"]), timestamp=_from_iso(rec["timestamp"]),
        group=rec["group"], shown_template_ids=[int(x) for x in rec.get("shown_template_ids", [])],
        chosen_template_id=int(rec["chosen_template_id"]),
        selection_time_sec=float(rec["selection_time_sec"]),
        model_version=str(rec.get("model_version", "")))


def load_events(path: str | Path) -> list[SelectionEvent]:
    out = []
    with open(path) as f:
        for line in f:
            if line.strip():
                out.append(event_from_dict(json.loads(line)))
    return out


def save_predictions(predictions: list[dict], path: str | Path) -> None:
    with open(path, "w") as f:
        for p in predictions:
            rec = dict(p)
            rec["timestamp"] = _iso(float(rec["timestamp"]))
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_predictions(path: str | Path) -> list[dict]:
    out = []
    with open(path) as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                rec["timestamp"] = _from_iso(rec["timestamp"])
                out.append(rec)
    return out


def write_summary_csv(summaries: list[BucketSummary], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bucket_start", "treatment_mean", "holdout_mean", "difference",
                    "n_treatment", "n_holdout"])
        for s in summaries:
            w.writerow([s.bucket_start,
                        "" if s.treatment_mean is None else repr(s.treatment_mean),
                        "" if s.holdout_mean is None else repr(s.holdout_mean),
                        "" if s.difference is None else repr(s.difference),
                        s.n_treatment, s.n_holdout])


def write_savings_csv(rows: list[TemplateSavings], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["template_id", "volume", "accuracy", "mean_saving"])
        for r in rows:
            w.writerow([r.template_id, r.volume, repr(r.accuracy), repr(r.mean_saving)])


def plot_summaries(summaries: list[BucketSummary], savings: list[TemplateSavings],
                   out_dir: str | Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    weeks = [s.bucket_start for s in summaries]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(weeks, [s.difference for s in summaries], marker="o")
    ax.set_ylabel("holdout - treatment selection time (s)")
    ax.set_xlabel("week")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    p = out_dir / "weekly_selection_time_difference.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(weeks, [s.treatment_mean for s in summaries], marker="o", label="treatment")
    ax.plot(weeks, [s.holdout_mean for s in summaries], marker="s", label="holdout")
    ax.set_ylabel("mean selection time (s)")
    ax.set_xlabel("week")
    ax.legend()
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    p = out_dir / "selection_time_by_group.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    written.append(p)

    if savings:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.scatter([r.accuracy for r in savings], [r.mean_saving for r in savings])
        ax.set_xlabel("holdout top-5 accuracy")
        ax.set_ylabel("mean time saved (s)")
        fig.tight_layout()
        p = out_dir / "savings_vs_accuracy.png"
        fig.savefig(p, dpi=110)
        plt.close(fig)
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# event simulator (fixture generator for analytics and demos)
# ---------------------------------------------------------------------------


@dataclass
class SimulatorConfig:
    n_sessions: int = 10_000
    n_templates: int = 64
    holdout_fraction: float = 0.02
    salt: str = "sim"
    seed: int = 0
    weeks: int = 8
    base_time_sec: float = 19.0
    panel_time_sec: float = 9.0
    noise_sec: float = 2.5
    min_accuracy: float = 0.25
    max_accuracy: float = 0.95
    model_version: str = "sim-v1"
    start_time: float = field(default_factory=lambda: datetime(
        2024, 1, 1, tzinfo=timezone.utc).timestamp())


def simulate_events(cfg: SimulatorConfig) -> tuple[list[SelectionEvent], list[dict]]:
    """Advocates pick fast from the panel when the true template is shown,
    otherwise search manually at holdout speed, so per-template savings rise
    with per-template shadow accuracy by construction."""
    rng = np.random.default_rng(cfg.seed)
    accuracy = np.linspace(cfg.min_accuracy, cfg.max_accuracy, cfg.n_templates)
    base = cfg.base_time_sec + rng.normal(0.0, 1.0, size=cfg.n_templates)
    # template usage is skewed so "top by volume" is meaningful
    weights = 1.0 / np.arange(1, cfg.n_templates + 1) ** 0.5
    weights /= weights.sum()

    events: list[SelectionEvent] = []
    predictions: list[dict] = []
    span = cfg.weeks * 7 * 86400.0
    for i in range(cfg.n_sessions):
        case_id = f"sim-{cfg.seed}-{i:06d}"
        group = assign_group(case_id, cfg.holdout_fraction, cfg.salt)
        tid = int(rng.choice(cfg.n_templates, p=weights))
        ts = cfg.start_time + (i / cfg.n_sessions) * span
        hit = rng.random() < accuracy[tid]
        others = [t for t in rng.permutation(cfg.n_templates)[:6] if t != tid][:5]
        top5 = ([tid] + [int(t) for t in others[:4]]) if hit else [int(t) for t in others]
        predictions.append({"case_id": case_id, "timestamp": ts,
                            "template_ids": top5, "model_version": cfg.model_version})
        noise = abs(float(rng.normal(0.0, cfg.noise_sec)))
        if group == GROUP_TREATMENT and hit:
            t_sel = cfg.panel_time_sec * (0.7 + 0.6 * rng.random()) + noise
        else:
            t_sel = base[tid] + noise
        events.append(SelectionEvent(
            case_id=case_id, timestamp=ts, group=group,
            shown_template_ids=top5 if group == GROUP_TREATMENT else [],
            chosen_template_id=tid, selection_time_sec=max(0.5, float(t_sel)),
            model_version=cfg.model_version))
    return events, predictions
