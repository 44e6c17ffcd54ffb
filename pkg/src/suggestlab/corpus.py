"""Synthetic support-transcript generator and dataset formatting.

Cases are built from a generative grammar: a customer opens with an
intent-bearing message, automated system lines and clarifications follow,
and an advocate answers with a template reply whose id is the
classification label. The `ambiguity` knob mixes a shared vocabulary into
every intent's messages, controlling how separable the intents are.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bpe
from .errors import ContractError

ROLE_CUSTOMER = "CUSTOMER"
ROLE_SYSTEM = "SYSTEM"
ROLE_ADVOCATE = "ADVOCATE"
ROLES = (ROLE_CUSTOMER, ROLE_SYSTEM, ROLE_ADVOCATE)


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    template_id: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ContractError(f"unknown role {self.role!r}")
        if self.template_id is not None and self.role != ROLE_ADVOCATE:
            raise ContractError("template_id is only valid on advocate messages")


@dataclass
class Transcript:
    case_id: str
    messages: list[Message]
    intent: int = -1  # hidden generator label, diagnostics only

    def __post_init__(self):
        if not self.messages:
            raise ContractError("transcript must contain at least one message")
        if self.messages[0].role != ROLE_CUSTOMER:
            raise ContractError("cases are initiated by a customer message")

    def labeled_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.messages) if m.template_id is not None]


@dataclass
class TemplateCatalog:
    templates: dict[int, str]

    def __post_init__(self):
        if sorted(self.templates) != list(range(len(self.templates))):
            raise ContractError("template ids must be dense [0, N)")

    @property
    def size(self) -> int:
        return len(self.templates)


@dataclass(frozen=True)
class ClassificationExample:
    token_ids: np.ndarray
    label: int
    case_id: str


# ---------------------------------------------------------------------------
# intent language: synthetic word banks shared between catalog and generator
# ---------------------------------------------------------------------------

_SYLLABLES = [c + v for c in "bdfgklmnprstvz" for v in "aeiou"]

_GREETINGS = ["hi", "hello", "hey there", "good morning", "hi there", "hey", "hello!", ""]
_FUNCTION_WORDS = ["my", "the", "is", "not", "working", "please", "can", "you", "check",
                   "on", "it", "says", "i", "need", "with", "about", "still", "again",
                   "when", "why", "this", "that", "now", "today"]
# system acks echo one content word from the customer message ({kw}), giving
# the language a copy dependency that rewards attention capacity
_SYSTEM_LINES = [
    "Thanks for reaching out about {kw}. Connecting you with someone who can help.",
    "You are in the queue for a {kw} specialist. We will notify you when an advocate replies.",
    "An advocate will be with you shortly to look at the {kw} issue.",
    "Got it, {kw}. Routing your case now.",
    "We received your note about {kw}. Please stand by.",
    "Your {kw} request is in line. You don't have to wait here.",
]
_THANKS_LINES = ["ty", "thanks, that's it", "ok thank you", "no that's all, thanks",
                 "great, thanks!", "appreciate it"]
_CLOSING_LINES = ["Happy to help!", "Glad that worked out. Take care!",
                  "You're welcome. Have a great day!", "Any time. Take care!",
                  "Glad I could help with that."]
_TEMPLATE_SKELETONS = [
    "To sort out your {kw} request, open the app and follow the {kw2} steps shown.",
    "You can review your {kw} under the activity tab; the {kw2} entry has the details.",
    "I've flagged the {kw} item on your profile. The {kw2} update lands within two days.",
    "For {kw} issues we first need to verify the {kw2} record. Tap the badge to start.",
]


@dataclass(frozen=True)
class IntentLanguage:
    intent_words: list[list[str]]
    shared_words: list[str]


def _stable_seed(*parts) -> int:
    h = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def intent_language(n_intents: int, n_keywords: int = 4, n_shared: int = 240) -> IntentLanguage:
    """Disjoint per-intent keyword banks plus one shared pool, fixed by n_intents."""
    rng = np.random.default_rng(_stable_seed("intent-language", n_intents))
    seen: set[str] = set(_FUNCTION_WORDS)

    def fresh_word() -> str:
        while True:
            n = int(rng.integers(2, 4))
            w = "".join(rng.choice(_SYLLABLES) for _ in range(n))
            if w not in seen:
                seen.add(w)
                return w

    shared = [fresh_word() for _ in range(n_shared)]
    intents = [[fresh_word() for _ in range(n_keywords)] for _ in range(n_intents)]
    return IntentLanguage(intent_words=intents, shared_words=shared)


def default_catalog(size: int) -> TemplateCatalog:
    if size < 1:
        raise ContractError("catalog size must be >= 1")
    lang = intent_language(size)
    templates = {}
    for i in range(size):
        kw, kw2 = lang.intent_words[i][0], lang.intent_words[i][1]
        skeleton = _TEMPLATE_SKELETONS[i % len(_TEMPLATE_SKELETONS)]
        templates[i] = skeleton.format(kw=kw, kw2=kw2)
    return TemplateCatalog(templates)


# ---------------------------------------------------------------------------
# corpus generation
# ---------------------------------------------------------------------------


def _content_words(rng, lang: IntentLanguage, intent: int, n: int, ambiguity: float) -> list[str]:
    words = []
    for _ in range(n):
        if rng.random() < ambiguity:
            words.append(lang.shared_words[int(rng.integers(len(lang.shared_words)))])
        else:
            bank = lang.intent_words[intent]
            words.append(bank[int(rng.integers(len(bank)))])
    return words


def _weave(rng, content: list[str]) -> str:
    out = []
    for w in content:
        if rng.random() < 0.5:
            out.append(_FUNCTION_WORDS[int(rng.integers(len(_FUNCTION_WORDS)))])
        out.append(w)
    return " ".join(out)


def _sentence(rng, lang, intent, ambiguity, n_content) -> str:
    return _weave(rng, _content_words(rng, lang, intent, n_content, ambiguity))


def generate_case(case_id: str, intent: int, rng, catalog: TemplateCatalog,
                  lang: IntentLanguage, ambiguity: float) -> Transcript:
    messages: list[Message] = []
    greeting = _GREETINGS[int(rng.integers(len(_GREETINGS)))]
    opening_words = _content_words(rng, lang, intent, int(rng.integers(4, 9)), ambiguity)
    opening = _weave(rng, opening_words)
    messages.append(Message(ROLE_CUSTOMER, (greeting + " " + opening).strip()))
    echo = opening_words[int(rng.integers(len(opening_words)))]
    if rng.random() < 0.8:
        line = _SYSTEM_LINES[int(rng.integers(len(_SYSTEM_LINES)))]
        messages.append(Message(ROLE_SYSTEM, line.format(kw=echo)))
    if rng.random() < 0.5:
        detail_words = _content_words(rng, lang, intent, int(rng.integers(2, 5)), ambiguity)
        if rng.random() < 0.5:
            detail_words.append(echo)  # customers restate the key term
        messages.append(Message(ROLE_CUSTOMER, _weave(rng, detail_words)))
    template_id = intent % catalog.size
    reply = catalog.templates[template_id]
    if rng.random() < 0.3:
        reply = f"Sure thing, about the {echo}: " + reply
    messages.append(Message(ROLE_ADVOCATE, reply, template_id=template_id))
    if rng.random() < 0.6:
        messages.append(Message(ROLE_CUSTOMER, _THANKS_LINES[int(rng.integers(len(_THANKS_LINES)))]))
        if rng.random() < 0.5:
            messages.append(Message(ROLE_ADVOCATE, _CLOSING_LINES[int(rng.integers(len(_CLOSING_LINES)))]))
    return Transcript(case_id=case_id, messages=messages, intent=intent)


def generate_corpus(seed: int, n_cases: int, catalog: TemplateCatalog,
                    ambiguity: float) -> list[Transcript]:
    if n_cases < 1:
        raise ContractError("n_cases must be >= 1")
    if catalog.size < 1:
        raise ContractError("catalog must be non-empty")
    if not (0.0 <= ambiguity <= 1.0):
        raise ContractError("ambiguity must lie in [0, 1]")
    lang = intent_language(catalog.size)
    out = []
    for i in range(n_cases):
        rng = np.random.default_rng([seed, i])
        intent = int(rng.integers(catalog.size))
        case_id = f"case-{seed}-{i:06d}"
        out.append(generate_case(case_id, intent, rng, catalog, lang, ambiguity))
    return out


def keyword_intent_oracle(t: Transcript, lang: IntentLanguage) -> int:
    """Frequency classifier over intent keywords; ties break to the lowest intent."""
    words = [w for m in t.messages if m.role == ROLE_CUSTOMER for w in m.text.split()]
    scores = [sum(w in set(bank) for w in words) for bank in lang.intent_words]
    return int(np.argmax(scores))


# ---------------------------------------------------------------------------
# stage-1 formatting: role-annotated text, packed fixed-length sequences
# ---------------------------------------------------------------------------


def format_pretraining(t: Transcript) -> str:
    """Render each message as "<ROLE>: text" and join with newlines."""
    return "\n".join(f"<{m.role}>: {m.text}" for m in t.messages)


def pack_sequences(docs: list[list[int]], context_length: int, eot_id: int = bpe.EOT_ID) -> np.ndarray:
    """Concatenate documents, one end-of-text id after each, then slice into
    consecutive windows of exactly context_length; the final partial window
    is dropped."""
    if context_length < 2:
        raise ContractError("context_length must be >= 2")
    stream: list[int] = []
    for doc in docs:
        stream.extend(doc)
        stream.append(eot_id)
    n = len(stream) // context_length
    if n == 0:
        return np.empty((0, context_length), dtype=np.int32)
    return np.asarray(stream[: n * context_length], dtype=np.int32).reshape(n, context_length)


# ---------------------------------------------------------------------------
# stage-2 formatting: prefix-free context, whole-message truncation
# ---------------------------------------------------------------------------


def truncate_context(texts: list[str], max_len: int, vocab: bpe.Vocab) -> np.ndarray:
    """Keep the most recent whole messages whose summed token counts fit in
    max_len; a single oversized message keeps its most recent max_len tokens."""
    if not texts:
        raise ContractError("no context messages")
    if max_len < 1:
        raise ContractError("max_len must be >= 1")
    lens = [len(bpe.encode(s, vocab)) for s in texts]
    kept = 0
    total = 0
    for size in reversed(lens):
        if kept > 0 and total + size > max_len:
            break
        kept += 1
        total += size
        if total >= max_len:
            break
    ids = bpe.encode(" ".join(texts[len(texts) - kept:]), vocab)
    if len(ids) > max_len:
        ids = ids[-max_len:]
    return np.asarray(ids, dtype=np.int32)


def build_classification_example(t: Transcript, reply_index: int, max_len: int,
                                 vocab: bpe.Vocab) -> ClassificationExample:
    if reply_index < 1 or reply_index >= len(t.messages):
        raise ContractError(f"reply_index {reply_index} out of range")
    labeled = t.messages[reply_index]
    if labeled.template_id is None:
        raise ContractError("message at reply_index carries no template_id")
    context = [m.text for m in t.messages[:reply_index]]
    ids = truncate_context(context, max_len, vocab)
    return ClassificationExample(token_ids=ids, label=labeled.template_id, case_id=t.case_id)


def examples_from_corpus(transcripts: list[Transcript], max_len: int,
                         vocab: bpe.Vocab) -> list[ClassificationExample]:
    """All labeled advocate messages become examples; the case-level split
    is what prevents leakage between folds."""
    out = []
    for t in transcripts:
        for idx in t.labeled_indices():
            if idx >= 1:
                out.append(build_classification_example(t, idx, max_len, vocab))
    return out


def split_by_case(examples: list[ClassificationExample], train_fraction: float,
                  seed: int) -> tuple[list[ClassificationExample], list[ClassificationExample]]:
    if not (0.0 < train_fraction < 1.0):
        raise ContractError("train_fraction must lie in (0, 1)")
    train, test = [], []
    for ex in examples:
        u = _stable_seed("case-split", seed, ex.case_id) / 2.0 ** 64
        (train if u < train_fraction else test).append(ex)
    return train, test


def mask_tokens(seq: np.ndarray, mask_rate: float, seed: int,
                vocab: bpe.Vocab) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask round(mask_rate * len) positions (at least one) with the pad id;
    returns (masked sequence, positions, original ids at those positions)."""
    if not (0.0 < mask_rate < 1.0):
        raise ContractError("mask_rate must lie in (0, 1)")
    seq = np.asarray(seq)
    if seq.size < 1:
        raise ContractError("sequence must be non-empty")
    n_mask = max(1, round(mask_rate * seq.size))
    rng = np.random.default_rng(seed)
    positions = np.sort(rng.choice(seq.size, size=n_mask, replace=False))
    masked = seq.copy()
    targets = seq[positions].copy()
    masked[positions] = vocab.pad_id
    return masked, positions, targets


# ---------------------------------------------------------------------------
# persistence: NDJSON transcripts, CSV catalog
# ---------------------------------------------------------------------------


def save_transcripts(transcripts: list[Transcript], path: str | Path) -> None:
    with open(path, "w") as f:
        for t in transcripts:
            rec = {
                "case_id": t.case_id,
                "intent": t.intent,
                "messages": [
                    {"role": m.role, "text": m.text,
                     **({"template_id": m.template_id} if m.template_id is not None else {})}
                    for m in t.messages
                ],
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_transcripts(path: str | Path) -> list[Transcript]:
    out = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            msgs = [Message(m["role"], m["text"], m.get("template_id")) for m in rec["messages"]]
            out.append(Transcript(case_id=rec["case_id"], messages=msgs,
                                  intent=rec.get("intent", -1)))
    return out


def save_catalog(catalog: TemplateCatalog, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "text"])
        for i in range(catalog.size):
            w.writerow([i, catalog.templates[i]])


def load_catalog(path: str | Path) -> TemplateCatalog:
    templates = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            templates[int(row["id"])] = row["text"]
    return TemplateCatalog(templates)
