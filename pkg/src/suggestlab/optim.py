"""AdamW with decoupled weight decay, plus the two learning-rate schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

ADAM_EPS = 1e-8

COSINE_TO_ZERO = "cosine-to-zero"
LINEAR_TO_ZERO = "linear-to-zero"


@dataclass
class AdamWState:
    """Per-parameter first/second moments and the step counter."""

    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.01
    lr_peak: float = 1e-3
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: list[np.ndarray], beta1: float, beta2: float,
             weight_decay: float, lr_peak: float) -> "AdamWState":
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ContractError("betas must lie in (0, 1)")
        if weight_decay < 0:
            raise ContractError("weight_decay must be non-negative")
        if lr_peak <= 0:
            raise ContractError("lr_peak must be positive")
        return cls(
            beta1=beta1, beta2=beta2, weight_decay=weight_decay, lr_peak=lr_peak,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray],
               state: AdamWState, lr: float) -> None:
    """One bias-corrected AdamW update, in place.

    Weight decay is decoupled: each parameter is first shrunk by lr * wd,
    independent of the moment-based step.
    """
    if lr < 0:
        raise ContractError("lr must be non-negative")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params/grads/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"param/grad shape mismatch: {p.shape} vs {g.shape}")

    state.step += 1
    t = state.step
    b1 = state.beta1
    b2 = state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            p -= (lr * state.weight_decay) * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


@dataclass(frozen=True)
class ScheduleSpec:
    """Linear warmup to lr_peak followed by decay to exactly zero."""

    kind: str
    warmup_fraction: float
    total_steps: int
    lr_peak: float

    def __post_init__(self):
        if self.kind not in (COSINE_TO_ZERO, LINEAR_TO_ZERO):
            raise ContractError(f"unknown schedule kind {self.kind!r}")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ContractError("warmup_fraction must lie in [0, 1)")
        if self.total_steps < 1:
            raise ContractError("total_steps must be positive")
        if self.lr_peak <= 0:
            raise ContractError("lr_peak must be positive")

    @property
    def warmup_steps(self) -> int:
        return round(self.warmup_fraction * self.total_steps)


def lr_at_step(sched: ScheduleSpec, step: int) -> float:
    if not (0 <= step <= sched.total_steps):
        raise ContractError(f"step {step} outside [0, {sched.total_steps}]")
    w = sched.warmup_steps
    if step < w:
        return sched.lr_peak * step / w
    frac = (step - w) / (sched.total_steps - w)
    if sched.kind == COSINE_TO_ZERO:
        return sched.lr_peak * 0.5 * (1.0 + math.cos(math.pi * frac))
    return sched.lr_peak * (1.0 - frac)
