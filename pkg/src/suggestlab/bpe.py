"""Trainable byte-level BPE tokenizer with end-of-text and pad specials.

Ids 0..255 are raw bytes, 256/257 are the two specials, and merge tokens
start at 258 in selection-rank order. Specials are never produced by
merges, so encoding ordinary text can never emit them.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError

N_BYTES = 256
EOT_ID = 256
PAD_ID = 257
FIRST_MERGE_ID = 258
EOT_TEXT = "<|endoftext|>"
PAD_TEXT = "<|pad|>"

FORMAT_HEADER = "suggestlab-bpe v1"

# training splits the stream into whitespace-terminated chunks so that merge
# candidates never straddle word boundaries; encoding works on whole strings
_CHUNK_RE = re.compile(rb"[^ \n]+[ \n]*|[ \n]+")


@dataclass
class Vocab:
    merges: list[tuple[int, int]] = field(default_factory=list)
    token_to_id: dict[bytes, int] = field(init=False)
    specials: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.specials = {"end_of_text": EOT_ID, "pad": PAD_ID}
        self.token_to_id = {bytes([b]): b for b in range(N_BYTES)}
        for rank, (left, right) in enumerate(self.merges):
            tok = self.bytes_of(left) + self.bytes_of(right)
            self.token_to_id.setdefault(tok, FIRST_MERGE_ID + rank)
        self._rank_of = {pair: r for r, pair in enumerate(self.merges)}
        self._encode_cache: dict[bytes, tuple[int, ...]] = {}

    @property
    def size(self) -> int:
        return FIRST_MERGE_ID + len(self.merges)

    @property
    def eot_id(self) -> int:
        return EOT_ID

    @property
    def pad_id(self) -> int:
        return PAD_ID

    def bytes_of(self, token_id: int) -> bytes:
        if 0 <= token_id < N_BYTES:
            return bytes([token_id])
        if token_id == EOT_ID:
            return EOT_TEXT.encode()
        if token_id == PAD_ID:
            return PAD_TEXT.encode()
        rank = token_id - FIRST_MERGE_ID
        if not (0 <= rank < len(self.merges)):
            raise ContractError(f"unknown token id {token_id}")
        left, right = self.merges[rank]
        return self.bytes_of(left) + self.bytes_of(right)


def train_bpe(corpus: bytes | str, vocab_size: int) -> Vocab:
    """Learn merges by iterated most-frequent-pair selection.

    Ties break toward the lexicographically smallest id pair so training is
    deterministic for a fixed corpus.
    """
    if isinstance(corpus, str):
        corpus = corpus.encode()
    if not corpus:
        raise ContractError("cannot train a tokenizer on an empty corpus")
    if vocab_size < FIRST_MERGE_ID:
        raise ContractError(f"vocab_size must be >= {FIRST_MERGE_ID}")
    n_merges = vocab_size - FIRST_MERGE_ID

    chunk_freq = Counter(_CHUNK_RE.findall(corpus))
    chunks: list[list[int]] = [list(c) for c in chunk_freq]
    freqs: list[int] = list(chunk_freq.values())

    pair_counts: Counter = Counter()
    pair_chunks: dict[tuple[int, int], set[int]] = {}
    for ci, symbols in enumerate(chunks):
        f = freqs[ci]
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += f
            pair_chunks.setdefault(pair, set()).add(ci)

    merges: list[tuple[int, int]] = []
    for rank in range(n_merges):
        best = None
        best_count = 0
        for pair, count in pair_counts.items():
            if count > best_count or (count == best_count and best is not None and pair < best):
                best, best_count = pair, count
        if best is None or best_count < 1:
            raise ContractError(
                f"corpus exhausted after {rank} merges; cannot reach vocab_size {vocab_size}"
            )
        new_id = FIRST_MERGE_ID + rank
        merges.append(best)
        for ci in sorted(pair_chunks.get(best, ())):
            symbols = chunks[ci]
            f = freqs[ci]
            for pair in zip(symbols, symbols[1:]):
                pair_counts[pair] -= f
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                owners = pair_chunks.get(pair)
                if owners is not None:
                    owners.discard(ci)
                    if not owners:
                        del pair_chunks[pair]
            merged = _apply_merge(symbols, best, new_id)
            chunks[ci] = merged
            for pair in zip(merged, merged[1:]):
                pair_counts[pair] += f
                pair_chunks.setdefault(pair, set()).add(ci)
    return Vocab(merges)


def _apply_merge(symbols: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out: list[int] = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _encode_chunk(chunk: bytes, vocab: Vocab) -> tuple[int, ...]:
    ids = list(chunk)
    rank_of = vocab._rank_of
    while len(ids) > 1:
        best_rank = None
        for pair in zip(ids, ids[1:]):
            r = rank_of.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
        if best_rank is None:
            break
        ids = _apply_merge(ids, vocab.merges[best_rank], FIRST_MERGE_ID + best_rank)
    return tuple(ids)


def encode(text: str | bytes, vocab: Vocab) -> list[int]:
    """Tokenize by applying merges in rank order within whitespace chunks.

    Chunking matches training, so merge application is independent of how
    callers batch their inputs; per-chunk results are memoized.
    """
    if isinstance(text, str):
        text = text.encode()
    if not text:
        return []
    cache = vocab._encode_cache
    out: list[int] = []
    for chunk in _CHUNK_RE.findall(text):
        ids = cache.get(chunk)
        if ids is None:
            ids = _encode_chunk(chunk, vocab)
            if len(cache) < 200_000:
                cache[chunk] = ids
        out.extend(ids)
    return out


def decode_bytes(ids: list[int], vocab: Vocab) -> bytes:
    return b"".join(vocab.bytes_of(i) for i in ids)


def decode(ids: list[int], vocab: Vocab) -> str:
    return decode_bytes(ids, vocab).decode(errors="replace")


# ---------------------------------------------------------------------------
# serialization: versioned text file, merges in rank order
# ---------------------------------------------------------------------------


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    lines = [FORMAT_HEADER, f"vocab_size {vocab.size}",
             f"special end_of_text {EOT_ID}", f"special pad {PAD_ID}"]
    lines.extend(f"merge {l} {r}" for l, r in vocab.merges)
    Path(path).write_text("\n".join(lines) + "\n")


def load_vocab(path: str | Path) -> Vocab:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ContractError(f"unrecognized vocab file format in {path}")
    merges: list[tuple[int, int]] = []
    declared_size = None
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "vocab_size":
            declared_size = int(parts[1])
        elif parts[0] == "special":
            expected = {"end_of_text": EOT_ID, "pad": PAD_ID}[parts[1]]
            if int(parts[2]) != expected:
                raise ContractError(f"special {parts[1]} id mismatch in {path}")
        elif parts[0] == "merge":
            merges.append((int(parts[1]), int(parts[2])))
        else:
            raise ContractError(f"unknown vocab line {line!r}")
    vocab = Vocab(merges)
    if declared_size is not None and declared_size != vocab.size:
        raise ContractError(f"vocab_size mismatch in {path}")
    return vocab
