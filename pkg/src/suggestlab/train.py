"""Stage-1 domain adaptation and stage-2 discriminative fine-tuning.

Both stages are driven by config objects whose fields mirror the run-config
key names (lr-decay-style, warmup, weight-decay, max-steps, eval-steps,
save-steps, num-train-epochs, ...). Checkpoints carry enough state to be
reused across fine-tuning jobs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bpe, nn
from .errors import ContractError, NumericError
from .model import ClassifierHead, DecoderModel, ModelConfig, forward_classify, save_checkpoint
from .optim import COSINE_TO_ZERO, LINEAR_TO_ZERO, AdamWState, ScheduleSpec, adamw_step, lr_at_step
from .corpus import ClassificationExample, TemplateCatalog, mask_tokens

OBJECTIVE_CAUSAL = "causal"
OBJECTIVE_MASKED = "masked"

_DECAY_STYLES = {"cosine": COSINE_TO_ZERO, "linear": LINEAR_TO_ZERO}


@dataclass
class AdaptConfig:
    max_steps: int
    tokens_per_step: int
    lr_peak: float
    lr_decay_style: str = "cosine"
    warmup: float = 0.01
    betas: tuple[float, float] = (0.9, 0.95)
    weight_decay: float = 0.01
    eval_fraction: float = 0.1   # eval-steps
    save_fraction: float = 0.1   # save-steps
    heldout_fraction: float = 0.1
    eval_max_sequences: int = 64
    objective: str = OBJECTIVE_CAUSAL
    mask_rate: float = 0.15
    grad_clip: float | None = None  # not mentioned by the training recipe; off unless set
    fp16_enabled: bool = False      # accepted and recorded; compute stays fp32 at this scale
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1 or self.tokens_per_step < 1:
            raise ContractError("max_steps and tokens_per_step must be positive")
        if self.lr_decay_style not in _DECAY_STYLES:
            raise ContractError(f"unknown lr-decay-style {self.lr_decay_style!r}")
        if self.objective not in (OBJECTIVE_CAUSAL, OBJECTIVE_MASKED):
            raise ContractError(f"unknown objective {self.objective!r}")
        if self.save_every < 1 or self.max_steps % self.save_every != 0:
            raise ContractError("save-steps must cut max-steps into whole intervals")

    @property
    def save_every(self) -> int:
        return round(self.save_fraction * self.max_steps)

    @property
    def eval_every(self) -> int:
        return max(1, round(self.eval_fraction * self.max_steps))

    def schedule(self) -> ScheduleSpec:
        return ScheduleSpec(_DECAY_STYLES[self.lr_decay_style], self.warmup,
                            self.max_steps, self.lr_peak)


@dataclass
class FineTuneConfig:
    epochs: int = 1
    lr: float = 1e-5
    lr_decay_style: str = "linear"
    warmup: float = 0.1
    betas: tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 0.0
    batch_size: int = 128
    max_len: int = 512
    fp16_enabled: bool = False
    seed: int = 0
    select_best_epoch: bool = False  # masked baseline reports its best epoch

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.lr_decay_style not in _DECAY_STYLES:
            raise ContractError(f"unknown lr-decay-style {self.lr_decay_style!r}")


@dataclass
class Checkpoint:
    """A training snapshot; holds weights in memory or points at a saved dir."""

    config: ModelConfig
    step: int
    tokens_seen: int
    train_loss: float
    eval_loss: float | None
    path: Path | None = None
    params: dict[str, np.ndarray] | None = None

    def load_model(self) -> DecoderModel:
        if self.params is not None:
            m = DecoderModel(self.config, seed=0)
            for name in m.params:
                m.params[name] = nn.parameter(self.params[name].copy())
            return m
        if self.path is not None:
            from .model import load_checkpoint
            m, _, _ = load_checkpoint(self.path)
            return m
        raise ContractError("checkpoint holds neither weights nor a path")


@dataclass
class EvalMetrics:
    cls_loss: float
    top_k: dict[int, float]
    n_examples: int


# ---------------------------------------------------------------------------
# config-key mapping (run-config names -> dataclass fields)
# ---------------------------------------------------------------------------

def _parse_betas(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        a, b = text
        return float(a), float(b)
    parts = str(text).strip().strip("[]()").split(",")
    if len(parts) != 2:
        raise ContractError(f"cannot parse betas from {text!r}")
    return float(parts[0]), float(parts[1])


_ADAPT_KEYS = {
    "max-steps": ("max_steps", int),
    "tokens-per-step": ("tokens_per_step", int),
    "learning rate": ("lr_peak", float),
    "lr-decay-style": ("lr_decay_style", str),
    "warmup": ("warmup", float),
    "weight-decay": ("weight_decay", float),
    "optimizer.params.betas": ("betas", _parse_betas),
    "eval-steps": ("eval_fraction", float),
    "save-steps": ("save_fraction", float),
    "heldout-fraction": ("heldout_fraction", float),
    "eval-max-sequences": ("eval_max_sequences", int),
    "objective": ("objective", str),
    "mask-rate": ("mask_rate", float),
    "grad-clip": ("grad_clip", float),
    "fp16.enabled": ("fp16_enabled", lambda v: str(v).lower() == "true"),
    "seed": ("seed", int),
}

_FINETUNE_KEYS = {
    "num-train-epochs": ("epochs", int),
    "learning rate": ("lr", float),
    "lr-decay-style": ("lr_decay_style", str),
    "warmup": ("warmup", float),
    "weight-decay": ("weight_decay", float),
    "optimizer.params.betas": ("betas", _parse_betas),
    "batch size": ("batch_size", int),
    "max-position-embeddings": ("max_len", int),
    "fp16.enabled": ("fp16_enabled", lambda v: str(v).lower() == "true"),
    "seed": ("seed", int),
    "select-best-epoch": ("select_best_epoch", lambda v: str(v).lower() == "true"),
}


def _config_from_keys(cls, table, keys: dict, extra_ignored=("optimizer.type", "max-position-embeddings")):
    kwargs = {}
    for key, value in keys.items():
        if key == "optimizer.type":
            if str(value) != "AdamW":
                raise ContractError(f"unsupported optimizer.type {value!r}")
            continue
        if key not in table:
            if key in extra_ignored:
                continue
            raise ContractError(f"unknown config key {key!r}")
        attr, conv = table[key]
        kwargs[attr] = conv(value)
    return cls(**kwargs)


def adapt_config_from_keys(keys: dict) -> AdaptConfig:
    return _config_from_keys(AdaptConfig, _ADAPT_KEYS, keys)


def finetune_config_from_keys(keys: dict) -> FineTuneConfig:
    return _config_from_keys(FineTuneConfig, _FINETUNE_KEYS, keys, extra_ignored=("optimizer.type",))


# ---------------------------------------------------------------------------
# stage 1: domain adaptation
# ---------------------------------------------------------------------------


def _lm_loss(m: DecoderModel, batch: np.ndarray) -> nn.Tensor:
    logits = m.forward_lm(batch[:, :-1])
    b, t, v = logits.shape
    return nn.cross_entropy(nn.reshape(logits, (b * t, v)), batch[:, 1:].reshape(-1))


def _masked_lm_loss(m: DecoderModel, batch: np.ndarray, cfg: AdaptConfig,
                    vocab: bpe.Vocab, step: int) -> nn.Tensor:
    masked_rows, positions, targets = [], [], []
    t = batch.shape[1]
    for row_idx, row in enumerate(batch):
        masked, pos, tgt = mask_tokens(row, cfg.mask_rate, _mask_seed(cfg.seed, step, row_idx), vocab)
        masked_rows.append(masked)
        positions.append(pos + row_idx * t)
        targets.append(tgt)
    logits = m.forward_lm(np.stack(masked_rows))
    flat = nn.reshape(logits, (logits.shape[0] * t, logits.shape[2]))
    picked = nn.take_rows(flat, np.concatenate(positions))
    return nn.cross_entropy(picked, np.concatenate(targets))


def _mask_seed(seed: int, step: int, row: int) -> int:
    return (seed * 1_000_003 + step * 1009 + row) % (2 ** 31)


def _heldout_lm_loss(m: DecoderModel, heldout: np.ndarray, cfg: AdaptConfig,
                     vocab: bpe.Vocab | None) -> float:
    total, count = 0.0, 0
    with nn.no_grad():
        for start in range(0, len(heldout), 8):
            batch = heldout[start:start + 8]
            if cfg.objective == OBJECTIVE_MASKED:
                loss = _masked_lm_loss(m, batch, cfg, vocab, step=-1)
            else:
                loss = _lm_loss(m, batch)
            total += loss.item() * len(batch)
            count += len(batch)
    return total / count


def domain_adapt(m: DecoderModel, sequences: np.ndarray, cfg: AdaptConfig,
                 vocab: bpe.Vocab | None = None, out_dir: str | Path | None = None,
                 vocab_hash: str = "", ledger_path: str | Path | None = None,
                 preset_name: str = "") -> list[Checkpoint]:
    """Next-token (or masked-token) training with checkpoints at every save
    boundary. Raises NumericError with a diagnostic snapshot on NaN loss."""
    sequences = np.asarray(sequences)
    if sequences.ndim != 2 or sequences.shape[1] != m.config.context_length:
        raise ContractError("sequences must be (n, context_length)")
    if cfg.tokens_per_step % m.config.context_length != 0:
        raise ContractError("tokens_per_step must be a multiple of context_length")
    if cfg.objective == OBJECTIVE_MASKED and vocab is None:
        raise ContractError("masked objective requires the vocab (mask id)")
    batch_seqs = cfg.tokens_per_step // m.config.context_length
    n_heldout = min(len(sequences) - 1, round(cfg.heldout_fraction * len(sequences)))
    heldout = sequences[len(sequences) - n_heldout:][: cfg.eval_max_sequences]
    training = sequences[: len(sequences) - n_heldout]
    if len(training) < 1:
        raise ContractError("no training sequences after the heldout carve-out")

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    ledger = open(ledger_path, "a") if ledger_path is not None else None

    params = [t for _, t in m.named_parameters()]
    arrays = [t.data for t in params]
    state = AdamWState.init(arrays, cfg.betas[0], cfg.betas[1], cfg.weight_decay, cfg.lr_peak)
    sched = cfg.schedule()
    checkpoints: list[Checkpoint] = []
    interval_losses: list[float] = []
    last_eval: float | None = None

    order = np.array([], dtype=np.int64)
    epoch = 0
    cursor = 0
    for step in range(cfg.max_steps):
        take: list[np.ndarray] = []
        need = batch_seqs
        while need > 0:
            if cursor >= len(order):
                order = np.random.default_rng([cfg.seed, epoch]).permutation(len(training))
                epoch += 1
                cursor = 0
            grab = min(need, len(order) - cursor)
            take.append(training[order[cursor:cursor + grab]])
            cursor += grab
            need -= grab
        batch = np.concatenate(take) if len(take) > 1 else take[0]

        m.zero_grad()
        loss = None
        try:
            if cfg.objective == OBJECTIVE_MASKED:
                loss = _masked_lm_loss(m, batch, cfg, vocab, step)
            else:
                loss = _lm_loss(m, batch)
            loss_val = loss.item()
        except NumericError:
            loss_val = float("nan")
        if not math.isfinite(loss_val):
            snapshot = None
            if out_dir is not None:
                snapshot = save_checkpoint(out_dir / "diagnostic-nan", m, step=step,
                                           tokens_seen=step * cfg.tokens_per_step,
                                           vocab_hash=vocab_hash,
                                           extra={"reason": "non-finite loss"})
            if ledger:
                ledger.close()
            raise NumericError(f"non-finite loss at step {step}"
                               + (f"; snapshot at {snapshot}" if snapshot else ""))
        loss.backward()
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in params]
        if cfg.grad_clip:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > cfg.grad_clip:
                factor = cfg.grad_clip / norm
                grads = [g * factor for g in grads]
        adamw_step(arrays, grads, state, lr_at_step(sched, step))
        interval_losses.append(loss_val)

        done = step + 1
        tokens_seen = done * cfg.tokens_per_step
        at_eval = done % cfg.eval_every == 0
        at_save = done % cfg.save_every == 0
        if (at_eval or at_save) and len(heldout) > 0:
            last_eval = _heldout_lm_loss(m, heldout, cfg, vocab)
        if at_eval or at_save:
            record = {"step": done, "lr": lr_at_step(sched, step),
                      "train_loss": float(np.mean(interval_losses)),
                      "eval_loss": last_eval, "tokens_seen": tokens_seen}
            if ledger:
                ledger.write(json.dumps(record, sort_keys=True) + "\n")
        if at_save:
            train_loss = float(np.mean(interval_losses))
            interval_losses = []
            ck = Checkpoint(config=m.config, step=done, tokens_seen=tokens_seen,
                            train_loss=train_loss, eval_loss=last_eval)
            if out_dir is not None:
                name = f"ckpt_{done:07d}"
                save_checkpoint(out_dir / name, m, step=done, tokens_seen=tokens_seen,
                                vocab_hash=vocab_hash, train_loss=train_loss,
                                eval_loss=last_eval,
                                optimizer_arrays=(state.m, state.v),
                                extra={"preset": preset_name,
                                       "objective": cfg.objective,
                                       "fp16.enabled": cfg.fp16_enabled})
                ck.path = out_dir / name
            else:
                ck.params = {k: t.data.copy() for k, t in m.named_parameters()}
            checkpoints.append(ck)
    if ledger:
        ledger.close()
    return checkpoints


# ---------------------------------------------------------------------------
# stage 2: discriminative fine-tuning
# ---------------------------------------------------------------------------


def _pad_batch(examples: list[ClassificationExample], pad_id: int,
               max_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    clipped = [e.token_ids[-max_len:] for e in examples]
    lengths = np.array([len(c) for c in clipped], dtype=np.int64)
    width = int(lengths.max())
    tokens = np.full((len(clipped), width), pad_id, dtype=np.int64)
    for i, ids in enumerate(clipped):
        tokens[i, : len(ids)] = ids
    labels = np.array([e.label for e in examples], dtype=np.int64)
    return tokens, lengths, labels


def evaluate_classifier(m: DecoderModel, head: ClassifierHead,
                        test_set: list[ClassificationExample],
                        ks: tuple[int, ...] = (1, 3, 5), pad_id: int = bpe.PAD_ID,
                        batch_size: int = 64, max_len: int | None = None) -> EvalMetrics:
    """Mean cross-entropy plus top-k accuracy; ties rank lower class ids first."""
    if not test_set:
        raise ContractError("test set must be non-empty")
    max_len = max_len or m.config.context_length
    hits = {k: 0 for k in ks}
    loss_sum = 0.0
    for start in range(0, len(test_set), batch_size):
        chunk = test_set[start:start + batch_size]
        tokens, lengths, labels = _pad_batch(chunk, pad_id, max_len)
        with nn.no_grad():
            logits = forward_classify(m, head, tokens, lengths)
        loss_sum += nn.cross_entropy(logits, labels).item() * len(chunk)
        order = np.argsort(-logits.data, axis=1, kind="stable")
        for k in ks:
            hits[k] += int((order[:, :k] == labels[:, None]).any(axis=1).sum())
    n = len(test_set)
    return EvalMetrics(cls_loss=loss_sum / n,
                       top_k={k: hits[k] / n for k in ks},
                       n_examples=n)


def fine_tune(m: DecoderModel, train_set: list[ClassificationExample],
              test_set: list[ClassificationExample], cfg: FineTuneConfig,
              catalog: TemplateCatalog, pad_id: int = bpe.PAD_ID,
              head_seed: int | None = None) -> tuple[ClassifierHead, EvalMetrics]:
    """Initializes a fresh head and trains the whole model end-to-end.

    The model is updated in place; returns the head and test metrics. With
    select_best_epoch the per-epoch test metrics are computed and the best
    epoch's are reported (used by the masked baseline recipe).
    """
    if not train_set:
        raise ContractError("train set must be non-empty")
    for ex in train_set + test_set:
        if not (0 <= ex.label < catalog.size):
            raise ContractError(f"label {ex.label} outside catalog of size {catalog.size}")
    eff_max = min(cfg.max_len, m.config.context_length)
    head = ClassifierHead(m.config.d_model, catalog.size,
                          seed=cfg.seed if head_seed is None else head_seed)

    named = m.named_parameters() + head.named_parameters()
    tensors = [t for _, t in named]
    arrays = [t.data for t in tensors]
    state = AdamWState.init(arrays, cfg.betas[0], cfg.betas[1], cfg.weight_decay, cfg.lr)
    n_batches = len(train_set) // cfg.batch_size  # ragged last batch dropped
    if n_batches < 1:
        n_batches = 1  # fall back to one undersized batch rather than zero steps
    total_steps = cfg.epochs * n_batches
    sched = ScheduleSpec(_DECAY_STYLES[cfg.lr_decay_style], cfg.warmup, total_steps, cfg.lr)

    best: EvalMetrics | None = None
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_set))
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if len(idx) == 0:
                idx = order
            chunk = [train_set[i] for i in idx]
            tokens, lengths, labels = _pad_batch(chunk, pad_id, eff_max)
            m.zero_grad()
            head.zero_grad()
            logits = forward_classify(m, head, tokens, lengths)
            loss = nn.cross_entropy(logits, labels)
            if not math.isfinite(loss.item()):
                raise NumericError(f"non-finite fine-tune loss at step {step}")
            loss.backward()
            grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
            adamw_step(arrays, grads, state, lr_at_step(sched, step))
            step += 1
        if cfg.select_best_epoch:
            metrics = evaluate_classifier(m, head, test_set, pad_id=pad_id, max_len=eff_max)
            if best is None or metrics.top_k[1] > best.top_k[1]:
                best = metrics
    if cfg.select_best_epoch and best is not None:
        return head, best
    return head, evaluate_classifier(m, head, test_set, pad_id=pad_id, max_len=eff_max)
