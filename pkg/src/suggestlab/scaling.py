"""Per-checkpoint scaling measurements and the loss/accuracy-vs-compute fits.

Produces three loss views (vs FLOPs, vs tokens, vs LM loss) plus the same
views for top-5 accuracy, a points CSV, and per-model / pooled fits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

POINT_COLUMNS = ["model_name", "n_params", "tokens_seen", "flops",
                 "lm_loss", "cls_loss", "top1", "top3", "top5"]
FIT_COLUMNS = ["label", "kind", "slope", "intercept", "r_squared", "n_points"]

FLOPS_PER_PARAM_TOKEN = 6.0


@dataclass(frozen=True)
class ScalingPoint:
    model_name: str
    n_params: int
    tokens_seen: int
    flops: float
    lm_loss: float
    cls_loss: float
    top_k: dict[int, float]

    def row(self) -> list:
        return [self.model_name, self.n_params, self.tokens_seen, self.flops,
                self.lm_loss, self.cls_loss,
                self.top_k.get(1), self.top_k.get(3), self.top_k.get(5)]


@dataclass(frozen=True)
class FitResult:
    kind: str  # linear | log-linear
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def collect(records: list[dict]) -> tuple[list[ScalingPoint], list[str]]:
    """One point per (model, checkpoint) record; records lacking fine-tune
    metrics are skipped with a warning. Output is sorted by
    (n_params, tokens_seen, model_name)."""
    points, warnings = [], []
    for rec in records:
        if rec.get("cls_loss") is None or rec.get("top_k") is None:
            warnings.append(
                f"skipping {rec.get('model_name')}@{rec.get('tokens_seen')}: no fine-tune result")
            continue
        if rec.get("lm_loss") is None:
            warnings.append(
                f"skipping {rec.get('model_name')}@{rec.get('tokens_seen')}: no heldout LM loss")
            continue
        flops = FLOPS_PER_PARAM_TOKEN * rec["n_params"] * rec["tokens_seen"]
        if "flops" in rec and not math.isclose(rec["flops"], flops, rel_tol=1e-9):
            raise ContractError(f"inconsistent flops for {rec.get('model_name')}")
        top_k = {int(k): float(v) for k, v in rec["top_k"].items()}
        points.append(ScalingPoint(
            model_name=str(rec["model_name"]), n_params=int(rec["n_params"]),
            tokens_seen=int(rec["tokens_seen"]), flops=flops,
            lm_loss=float(rec["lm_loss"]), cls_loss=float(rec["cls_loss"]),
            top_k=top_k))
    points.sort(key=lambda p: (p.n_params, p.tokens_seen, p.model_name))
    return points, warnings


def fit_linear(x, y) -> FitResult:
    """Ordinary least squares with the standard R^2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("x and y must be 1-d and equal length")
    n = x.size
    if n < 3:
        raise ContractError("need at least 3 points to fit")
    sxx = ((x - x.mean()) ** 2).sum()
    if sxx == 0.0:
        raise ContractError("x values are all equal; fit is degenerate")
    slope = ((x - x.mean()) * (y - y.mean())).sum() / sxx
    intercept = y.mean() - slope * x.mean()
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - float((resid ** 2).sum()) / float(ss_tot)
    return FitResult(kind="linear", slope=float(slope), intercept=float(intercept),
                     r_squared=max(0.0, min(1.0, r2)), n_points=n)


def fit_loss_vs_tokens(points: list[ScalingPoint]) -> FitResult:
    """Per-model fit of cls_loss against ln(tokens_seen)."""
    if len(points) < 3:
        raise ContractError("need at least 3 checkpoints for a per-model fit")
    x = [math.log(p.tokens_seen) for p in points]
    y = [p.cls_loss for p in points]
    base = fit_linear(x, y)
    return FitResult(kind="log-linear", slope=base.slope, intercept=base.intercept,
                     r_squared=base.r_squared, n_points=base.n_points)


def by_model(points: list[ScalingPoint]) -> dict[str, list[ScalingPoint]]:
    out: dict[str, list[ScalingPoint]] = {}
    for p in points:
        out.setdefault(p.model_name, []).append(p)
    return out


def standard_fits(points: list[ScalingPoint]) -> dict[str, FitResult]:
    """Headline fits: pooled cls-vs-lm linear fit, per-model token fits in
    both raw-linear and log-linear x scales."""
    fits: dict[str, FitResult] = {}
    if len(points) >= 3:
        fits["pooled_cls_vs_lm"] = fit_linear([p.lm_loss for p in points],
                                              [p.cls_loss for p in points])
    for name, pts in sorted(by_model(points).items()):
        if len(pts) >= 3:
            fits[f"{name}_cls_vs_ln_tokens"] = fit_loss_vs_tokens(pts)
            fits[f"{name}_cls_vs_tokens"] = fit_linear([p.tokens_seen for p in pts],
                                                       [p.cls_loss for p in pts])
    return fits


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_points_csv(points: list[ScalingPoint], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(POINT_COLUMNS)
        for p in points:
            w.writerow([_fmt(v) for v in p.row()])


def read_points_csv(path: Path) -> list[ScalingPoint]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(ScalingPoint(
                model_name=row["model_name"], n_params=int(row["n_params"]),
                tokens_seen=int(row["tokens_seen"]), flops=float(row["flops"]),
                lm_loss=float(row["lm_loss"]), cls_loss=float(row["cls_loss"]),
                top_k={1: float(row["top1"]), 3: float(row["top3"]), 5: float(row["top5"])}))
    return out


def write_fits_csv(fits: dict[str, FitResult], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FIT_COLUMNS)
        for label in sorted(fits):
            r = fits[label]
            w.writerow([label, r.kind, _fmt(r.slope), _fmt(r.intercept),
                        _fmt(r.r_squared), r.n_points])


def emit_report(points: list[ScalingPoint], fits: dict[str, FitResult],
                out_dir: str | Path) -> list[Path]:
    """Write points.csv, fits.csv, and the six scaling plots."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / "points.csv", out_dir / "fits.csv"]
        write_points_csv(points, written[0])
        write_fits_csv(fits, written[1])
        if points:
            written.extend(_plots(points, out_dir))
        return written
    except OSError as e:
        raise OSError(f"cannot write scaling report under {out_dir}: {e}") from e


def _plots(points: list[ScalingPoint], out_dir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = by_model(points)
    axes = [("flops", lambda p: p.flops, "domain adaptation FLOPs", "log"),
            ("tokens", lambda p: p.tokens_seen, "domain adaptation tokens", "log"),
            ("lmloss", lambda p: p.lm_loss, "LM loss (heldout)", "linear")]
    views = [("loss", lambda p: p.cls_loss, "classification loss"),
             ("top5", lambda p: p.top_k.get(5), "top-5 accuracy")]
    written = []
    for vname, vget, vlabel in views:
        for aname, aget, alabel, xscale in axes:
            fig, ax = plt.subplots(figsize=(5, 4))
            for name in sorted(groups):
                pts = sorted(groups[name], key=aget)
                ax.plot([aget(p) for p in pts], [vget(p) for p in pts],
                        marker="o", label=name)
            ax.set_xscale(xscale)
            ax.set_xlabel(alabel)
            ax.set_ylabel(vlabel)
            ax.legend()
            fig.tight_layout()
            path = out_dir / f"scaling_{vname}_vs_{aname}.png"
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
    return written
