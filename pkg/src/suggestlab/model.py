"""Decoder-only transformer family with LM head and classification head.

Pre-LN blocks (attention + GELU MLP with residuals), learned absolute
position embeddings by default with rotary available behind a config
switch. causal=False gives the bidirectional trunk used by the
masked-objective baseline.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import bpe, nn
from .errors import ContractError

POS_LEARNED = "learned"
POS_ROTARY = "rotary"

MASK_VALUE = -1e9


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    n_heads: int
    d_model: int
    d_ff: int
    vocab_size: int
    context_length: int
    causal: bool = True
    positional: str = POS_LEARNED

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ContractError("d_model must be divisible by n_heads")
        if self.context_length < 1:
            raise ContractError("context_length must be >= 1")
        if self.positional not in (POS_LEARNED, POS_ROTARY):
            raise ContractError(f"unknown positional scheme {self.positional!r}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class Preset:
    name: str
    config: ModelConfig
    lr_peak: float


def family_preset(name: str, vocab_size: int = 512, context_length: int = 256) -> Preset:
    """Three sizes with ~4x parameter spacing; peak lr shrinks with size."""
    table = {
        "nano": (3, 2, 64, 256, 3e-3),
        "micro": (4, 4, 112, 448, 2e-3),
        "mini": (5, 4, 192, 768, 1.6e-3),
    }
    if name not in table:
        raise ContractError(f"unknown preset {name!r}; expected one of {sorted(table)}")
    n_layers, n_heads, d_model, d_ff, lr_peak = table[name]
    cfg = ModelConfig(n_layers=n_layers, n_heads=n_heads, d_model=d_model, d_ff=d_ff,
                      vocab_size=vocab_size, context_length=context_length, causal=True)
    return Preset(name=name, config=cfg, lr_peak=lr_peak)


def count_params(config: ModelConfig) -> int:
    d, ff, v = config.d_model, config.d_ff, config.vocab_size
    emb = v * d
    if config.positional == POS_LEARNED:
        emb += config.context_length * d
    attn = d * 3 * d + 3 * d + d * d + d
    mlp = d * ff + ff + ff * d + d
    lns = 4 * d
    block = attn + mlp + lns
    head = d * v + v
    final_ln = 2 * d
    return emb + config.n_layers * block + final_ln + head


def flops_for_tokens(config: ModelConfig, n_tokens: float) -> float:
    """Training-compute estimate: 6 FLOPs per parameter per token."""
    if n_tokens < 0:
        raise ContractError("n_tokens must be >= 0")
    return 6.0 * count_params(config) * float(n_tokens)


class DecoderModel:
    """Weights keyed by name; forward passes build an autodiff graph."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        d, ff, v = config.d_model, config.d_ff, config.vocab_size

        def normal(*shape):
            return nn.parameter(rng.normal(0.0, 0.02, size=shape), dtype=dtype)

        def zeros(*shape):
            return nn.parameter(np.zeros(shape), dtype=dtype)

        def ones(*shape):
            return nn.parameter(np.ones(shape), dtype=dtype)

        self.params: dict[str, nn.Tensor] = {"tok_emb": normal(v, d)}
        if config.positional == POS_LEARNED:
            self.params["pos_emb"] = normal(config.context_length, d)
        for i in range(config.n_layers):
            p = f"blocks.{i}."
            self.params[p + "ln1.g"] = ones(d)
            self.params[p + "ln1.b"] = zeros(d)
            self.params[p + "attn.wqkv"] = normal(d, 3 * d)
            self.params[p + "attn.bqkv"] = zeros(3 * d)
            self.params[p + "attn.wo"] = normal(d, d)
            self.params[p + "attn.bo"] = zeros(d)
            self.params[p + "ln2.g"] = ones(d)
            self.params[p + "ln2.b"] = zeros(d)
            self.params[p + "mlp.w1"] = normal(d, ff)
            self.params[p + "mlp.b1"] = zeros(ff)
            self.params[p + "mlp.w2"] = normal(ff, d)
            self.params[p + "mlp.b2"] = zeros(d)
        self.params["lnf.g"] = ones(d)
        self.params["lnf.b"] = zeros(d)
        self.params["lm_head.w"] = normal(d, v)
        self.params["lm_head.b"] = zeros(v)
        self._rotary_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    # -- parameter plumbing -------------------------------------------------

    def named_parameters(self) -> list[tuple[str, nn.Tensor]]:
        return list(self.params.items())

    def parameter_arrays(self) -> list[np.ndarray]:
        return [t.data for _, t in self.named_parameters()]

    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def astype(self, dtype) -> "DecoderModel":
        clone = DecoderModel.__new__(DecoderModel)
        clone.config = self.config
        clone.params = {k: nn.parameter(v.data.astype(dtype)) for k, v in self.params.items()}
        clone._rotary_cache = {}
        return clone

    # -- forward ------------------------------------------------------------

    def _rotary(self, t_len: int, dtype) -> tuple[np.ndarray, np.ndarray]:
        hd = self.config.head_dim
        if t_len not in self._rotary_cache:
            inv = 1.0 / (10000.0 ** (np.arange(0, hd, 2) / hd))
            ang = np.outer(np.arange(t_len), inv)
            full = np.concatenate([ang, ang], axis=-1)
            self._rotary_cache[t_len] = (np.cos(full), np.sin(full))
        cos, sin = self._rotary_cache[t_len]
        return cos.astype(dtype), sin.astype(dtype)

    def _attention_mask(self, tokens: np.ndarray, lengths: np.ndarray | None) -> np.ndarray | None:
        b, t = tokens.shape
        mask = None
        if self.config.causal:
            mask = np.triu(np.full((t, t), MASK_VALUE, dtype=np.float32), k=1)
        if lengths is not None and not self.config.causal:
            # keys beyond each sequence's true length are unreachable
            key_valid = np.arange(t)[None, :] < np.asarray(lengths)[:, None]
            pad = np.where(key_valid, 0.0, MASK_VALUE).astype(np.float32)[:, None, None, :]
            mask = pad if mask is None else mask + pad
        return mask

    def forward_hidden(self, tokens: np.ndarray, lengths: np.ndarray | None = None) -> nn.Tensor:
        tokens = np.asarray(tokens)
        if tokens.ndim != 2:
            raise ContractError("tokens must be a (batch, time) array")
        b, t = tokens.shape
        cfg = self.config
        if t > cfg.context_length:
            raise ContractError(f"sequence length {t} exceeds context_length {cfg.context_length}")
        if tokens.size and tokens.max() >= cfg.vocab_size:
            raise ContractError("token id out of vocabulary range")
        p = self.params
        dtype = p["tok_emb"].data.dtype

        x = nn.embedding(p["tok_emb"], tokens)
        if cfg.positional == POS_LEARNED:
            x = nn.add(x, nn.embedding(p["pos_emb"], np.arange(t)))
        mask = self._attention_mask(tokens, lengths)
        if cfg.positional == POS_ROTARY:
            cos, sin = self._rotary(t, dtype)
        hd = cfg.head_dim
        inv_sqrt = 1.0 / math.sqrt(hd)
        for i in range(cfg.n_layers):
            pre = f"blocks.{i}."
            h = nn.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
            qkv = nn.add(nn.matmul(h, p[pre + "attn.wqkv"]), p[pre + "attn.bqkv"])
            q = nn.slice_last(qkv, 0, cfg.d_model)
            k = nn.slice_last(qkv, cfg.d_model, 2 * cfg.d_model)
            v = nn.slice_last(qkv, 2 * cfg.d_model, 3 * cfg.d_model)
            q = nn.swapaxes(nn.reshape(q, (b, t, cfg.n_heads, hd)), 1, 2)
            k = nn.swapaxes(nn.reshape(k, (b, t, cfg.n_heads, hd)), 1, 2)
            v = nn.swapaxes(nn.reshape(v, (b, t, cfg.n_heads, hd)), 1, 2)
            if cfg.positional == POS_ROTARY:
                q = _apply_rotary(q, cos, sin)
                k = _apply_rotary(k, cos, sin)
            scores = nn.scale(nn.matmul(q, nn.swapaxes(k, -1, -2)), inv_sqrt)
            if mask is not None:
                scores = nn.add_const(scores, mask)
            attn = nn.matmul(nn.softmax(scores, axis=-1), v)
            attn = nn.reshape(nn.swapaxes(attn, 1, 2), (b, t, cfg.d_model))
            attn = nn.add(nn.matmul(attn, p[pre + "attn.wo"]), p[pre + "attn.bo"])
            x = nn.add(x, attn)
            h = nn.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
            h = nn.gelu(nn.add(nn.matmul(h, p[pre + "mlp.w1"]), p[pre + "mlp.b1"]))
            h = nn.add(nn.matmul(h, p[pre + "mlp.w2"]), p[pre + "mlp.b2"])
            x = nn.add(x, h)
        return nn.layer_norm(x, p["lnf.g"], p["lnf.b"])

    def forward_lm(self, tokens: np.ndarray) -> nn.Tensor:
        """Logits (B, T, V); with a causal config position t sees tokens <= t."""
        h = self.forward_hidden(tokens)
        return nn.add(nn.matmul(h, self.params["lm_head.w"]), self.params["lm_head.b"])


def _apply_rotary(x: nn.Tensor, cos: np.ndarray, sin: np.ndarray) -> nn.Tensor:
    half = x.shape[-1] // 2
    x1 = nn.slice_last(x, 0, half)
    x2 = nn.slice_last(x, half, 2 * half)
    rotated = nn.concat_last([nn.scale(x2, -1.0), x1])
    return nn.add(nn.mul(x, nn.Tensor(cos)), nn.mul(rotated, nn.Tensor(sin)))


class ClassifierHead:
    """Linear layer d_model x n_classes over the pooled hidden state."""

    def __init__(self, d_model: int, n_classes: int, seed: int = 0, dtype=np.float32):
        if n_classes < 1:
            raise ContractError("n_classes must be >= 1")
        rng = np.random.default_rng(seed)
        self.n_classes = n_classes
        self.w = nn.parameter(rng.normal(0.0, 0.02, size=(d_model, n_classes)), dtype=dtype)
        self.b = nn.parameter(np.zeros(n_classes), dtype=dtype)

    def named_parameters(self) -> list[tuple[str, nn.Tensor]]:
        return [("head.w", self.w), ("head.b", self.b)]

    def zero_grad(self) -> None:
        self.w.grad = None
        self.b.grad = None


def forward_classify(model: DecoderModel, head: ClassifierHead, tokens: np.ndarray,
                     lengths: np.ndarray) -> nn.Tensor:
    """Class logits from the final-block hidden state at each sequence's last
    real token (first token for the bidirectional baseline)."""
    lengths = np.asarray(lengths)
    if lengths.size == 0 or lengths.min() < 1:
        raise ContractError("every sequence must have length >= 1")
    h = model.forward_hidden(tokens, lengths=lengths)
    if model.config.causal:
        pooled = nn.last_token(h, lengths)
    else:
        pooled = nn.last_token(h, np.ones_like(lengths))
    return nn.add(nn.matmul(pooled, head.w), head.b)


# ---------------------------------------------------------------------------
# checkpoint container: manifest.json + params.bin (+ optim.bin)
# ---------------------------------------------------------------------------

CKPT_FORMAT = "suggestlab-ckpt v1"


def hash_vocab(vocab: bpe.Vocab) -> str:
    payload = ";".join(f"{l},{r}" for l, r in vocab.merges)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _write_arrays(path: Path, arrays: list[np.ndarray]) -> None:
    with open(path, "wb") as f:
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _read_arrays(path: Path, shapes: list[tuple[int, ...]]) -> list[np.ndarray]:
    raw = np.fromfile(path, dtype="<f4")
    out = []
    off = 0
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        out.append(raw[off:off + size].reshape(shape).astype(np.float32))
        off += size
    if off != raw.size:
        raise ContractError(f"parameter blob size mismatch in {path}")
    return out


def save_checkpoint(ckpt_dir: str | Path, model: DecoderModel, *,
                    step: int = 0, tokens_seen: int = 0, vocab_hash: str = "",
                    train_loss: float | None = None, eval_loss: float | None = None,
                    head: ClassifierHead | None = None,
                    optimizer_arrays: tuple[list[np.ndarray], list[np.ndarray]] | None = None,
                    extra: dict | None = None) -> Path:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    named = model.named_parameters() + (head.named_parameters() if head else [])
    manifest = {
        "format": CKPT_FORMAT,
        "config": asdict(model.config),
        "step": int(step),
        "tokens_seen": int(tokens_seen),
        "vocab_hash": vocab_hash,
        "train_loss": train_loss,
        "eval_loss": eval_loss,
        "params": [{"name": n, "shape": list(t.data.shape)} for n, t in named],
        "has_head": head is not None,
        "has_optimizer": optimizer_arrays is not None,
        "extra": extra or {},
    }
    (ckpt_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    _write_arrays(ckpt_dir / "params.bin", [t.data for _, t in named])
    if optimizer_arrays is not None:
        m, v = optimizer_arrays
        _write_arrays(ckpt_dir / "optim.bin", list(m) + list(v))
    return ckpt_dir


def load_checkpoint(ckpt_dir: str | Path) -> tuple[DecoderModel, ClassifierHead | None, dict]:
    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    if manifest.get("format") != CKPT_FORMAT:
        raise ContractError(f"unrecognized checkpoint format in {ckpt_dir}")
    config = ModelConfig(**manifest["config"])
    names = [p["name"] for p in manifest["params"]]
    shapes = [tuple(p["shape"]) for p in manifest["params"]]
    arrays = _read_arrays(ckpt_dir / "params.bin", shapes)
    model = DecoderModel(config, seed=0)
    head = None
    for name, arr in zip(names, arrays):
        if name == "head.w":
            head = ClassifierHead(config.d_model, arr.shape[1])
            head.w = nn.parameter(arr)
        elif name == "head.b":
            assert head is not None
            head.b = nn.parameter(arr)
        else:
            if name not in model.params or model.params[name].data.shape != arr.shape:
                raise ContractError(f"unexpected parameter {name} in {ckpt_dir}")
            model.params[name] = nn.parameter(arr)
    return model, head, manifest


def load_optimizer_arrays(ckpt_dir: str | Path, model: DecoderModel) -> tuple[list[np.ndarray], list[np.ndarray]]:
    shapes = [t.data.shape for _, t in model.named_parameters()]
    arrays = _read_arrays(Path(ckpt_dir) / "optim.bin", shapes + shapes)
    return arrays[: len(shapes)], arrays[len(shapes):]
