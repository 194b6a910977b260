"""Interpolated Kneser-Ney n-gram language models with ARPA I/O.

One absolute discount per order, estimated as D = n1 / (n1 + 2*n2) from
count-of-count statistics (0.5 when degenerate). Lower orders use
continuation counts, except n-grams starting with the sentence-start
marker, which keep raw counts (they cannot be extended to the left).
All probabilities are log base 10, following the ARPA convention.

A sentence-start marker is prepended as context; no end-of-sentence event
is modeled, so the unigram distribution covers exactly the observed word
types plus one unknown-word type.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .corpus import BOS, EOS, UNK
from .errors import DataError

logger = logging.getLogger(__name__)

NGram = tuple[str, ...]

_RESERVED = (BOS, EOS, UNK)


@dataclass
class NGramModel:
    """Backoff table representation of an interpolated KN model."""

    order: int
    logprobs: dict[NGram, float] = field(default_factory=dict)
    backoffs: dict[NGram, float] = field(default_factory=dict)
    unk_logprob: float = -99.0
    vocab: frozenset[str] = frozenset()

    def logprob(self, context: Sequence[str], word: str) -> float:
        """log10 p(word | context) with standard backoff recursion."""
        ctx = tuple(context)
        ctx = ctx[-(self.order - 1):] if self.order > 1 else ()
        penalty = 0.0
        while True:
            stored = self.logprobs.get(ctx + (word,))
            if stored is not None:
                return penalty + stored
            if not ctx:
                return penalty + self.unk_logprob
            penalty += self.backoffs.get(ctx, 0.0)
            ctx = ctx[1:]


def logprob(model: NGramModel, context: Sequence[str], word: str) -> float:
    return model.logprob(context, word)


def perplexity(model, sentences: Iterable[Sequence[str]]) -> float:
    """Per-token perplexity (base 10) including start-of-sentence context."""
    total = 0.0
    count = 0
    for sent in sentences:
        context: list[str] = [BOS]
        for word in sent:
            total += model.logprob(context, word)
            context.append(word)
            count += 1
    if count == 0:
        return float("inf")
    return 10.0 ** (-total / count)


def _discount(counts: Iterable[float]) -> float:
    n1 = n2 = 0
    for c in counts:
        if c == 1:
            n1 += 1
        elif c == 2:
            n2 += 1
    if n1 == 0 or n2 == 0:
        return 0.5
    return n1 / (n1 + 2.0 * n2)


MAX_ORDER = 5


def train_kn(corpus: Iterable[Sequence[str]], order: int) -> NGramModel:
    """Train an interpolated Kneser-Ney model of the given order (1..5)."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    sentences = [tuple(s) for s in corpus]
    if not any(sentences):
        raise DataError("cannot train a language model on an empty corpus")
    for sent in sentences:
        for tok in sent:
            if tok in _RESERVED:
                raise DataError(f"reserved marker {tok!r} appears in LM training data")

    # Raw counts over BOS-padded sentences; the bare BOS unigram is never
    # predicted and is skipped.
    raw: list[dict[NGram, int]] = [dict() for _ in range(order + 1)]
    for sent in sentences:
        padded = (BOS,) + sent
        for n in range(1, order + 1):
            grams = raw[n]
            for start in range(len(padded) - n + 1):
                gram = padded[start:start + n]
                if gram == (BOS,):
                    continue
                grams[gram] = grams.get(gram, 0) + 1

    vocab = frozenset(w for (w,) in raw[1])

    # Modified counts: continuation counts below the top order, except for
    # n-grams starting with BOS which cannot be extended to the left.
    modified: list[dict[NGram, float]] = [dict() for _ in range(order + 1)]
    modified[order] = dict(raw[order])
    for n in range(1, order):
        grams: dict[NGram, float] = {}
        for gram in raw[n + 1]:
            suffix = gram[1:]
            grams[suffix] = grams.get(suffix, 0) + 1
        for gram, count in raw[n].items():
            if gram[0] == BOS:
                grams[gram] = count
        modified[n] = grams

    discounts = [0.0] * (order + 1)
    for n in range(1, order + 1):
        discounts[n] = _discount(modified[n].values())

    probs: dict[NGram, float] = {}      # linear space while building
    backoffs: dict[NGram, float] = {}   # linear space while building

    # Unigram level: interpolate with the uniform distribution over the
    # vocabulary plus one unknown type.
    d1 = discounts[1]
    uni = modified[1]
    total = float(sum(uni.values()))
    n1plus = len(uni)
    v_plus_unk = len(vocab) + 1
    interp_mass = d1 * n1plus / total
    for (w,) in uni:
        probs[(w,)] = (max(uni[(w,)] - d1, 0.0) / total
                       + interp_mass / v_plus_unk)
    unk_prob = interp_mass / v_plus_unk

    for n in range(2, order + 1):
        d = discounts[n]
        grams = modified[n]
        by_context: dict[NGram, list[NGram]] = {}
        for gram in grams:
            by_context.setdefault(gram[:-1], []).append(gram)
        for context, extensions in by_context.items():
            denom = float(sum(grams[g] for g in extensions))
            bow = d * len(extensions) / denom
            backoffs[context] = bow
            for gram in extensions:
                lower = probs[gram[1:]]
                probs[gram] = max(grams[gram] - d, 0.0) / denom + bow * lower

    logprobs = {g: math.log10(p) for g, p in probs.items()}
    logprobs[(BOS,)] = -99.0  # context-only marker, never predicted
    log_backoffs = {c: math.log10(b) for c, b in backoffs.items()}
    return NGramModel(order=order, logprobs=logprobs, backoffs=log_backoffs,
                      unk_logprob=math.log10(unk_prob), vocab=vocab)


@dataclass
class MixtureModel:
    """Query-time linear interpolation of two same-order models."""

    a: NGramModel
    b: NGramModel
    lam: float

    def __post_init__(self) -> None:
        if self.a.order != self.b.order:
            raise ValueError(
                f"order mismatch: {self.a.order} vs {self.b.order}"
            )
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lambda must be in [0, 1]")

    @property
    def order(self) -> int:
        return self.a.order

    @property
    def vocab(self) -> frozenset[str]:
        return self.a.vocab | self.b.vocab

    def logprob(self, context: Sequence[str], word: str) -> float:
        if self.lam == 1.0:
            return self.a.logprob(context, word)
        if self.lam == 0.0:
            return self.b.logprob(context, word)
        pa = 10.0 ** self.a.logprob(context, word)
        pb = 10.0 ** self.b.logprob(context, word)
        return math.log10(self.lam * pa + (1.0 - self.lam) * pb)


def interpolate_lms(a: NGramModel, b: NGramModel, lam: float) -> MixtureModel:
    return MixtureModel(a=a, b=b, lam=lam)


# --- ARPA I/O ----------------------------------------------------------------

def write_arpa(model: NGramModel, dest: str | TextIO) -> None:
    if isinstance(dest, str):
        handle: TextIO = open(dest, "w", encoding="utf-8")
        close = True
    else:
        handle = dest
        close = False
    try:
        by_order: dict[int, list[NGram]] = {n: [] for n in range(1, model.order + 1)}
        for gram in model.logprobs:
            by_order[len(gram)].append(gram)
        handle.write("\\data\\\n")
        for n in range(1, model.order + 1):
            count = len(by_order[n]) + (1 if n == 1 else 0)  # +1 for <unk>
            handle.write(f"ngram {n}={count}\n")
        for n in range(1, model.order + 1):
            handle.write(f"\n\\{n}-grams:\n")
            if n == 1:
                handle.write(f"{model.unk_logprob:.7f}\t{UNK}\n")
            for gram in sorted(by_order[n]):
                line = f"{model.logprobs[gram]:.7f}\t{' '.join(gram)}"
                bow = model.backoffs.get(gram)
                if bow is not None:
                    line += f"\t{bow:.7f}"
                handle.write(line + "\n")
        handle.write("\n\\end\\\n")
    finally:
        if close:
            handle.close()


def read_arpa(src: str | TextIO | Iterable[str], name: str = "<arpa>") -> NGramModel:
    if isinstance(src, str):
        with open(src, "r", encoding="utf-8") as handle:
            lines: list[str] = handle.read().splitlines()
        name = src
    elif hasattr(src, "read"):
        lines = src.read().splitlines()  # type: ignore[union-attr]
    else:
        lines = [str(line).rstrip("\n") for line in src]

    counts: dict[int, int] = {}
    logprobs: dict[NGram, float] = {}
    backoffs: dict[NGram, float] = {}
    unk_logprob = -99.0
    section = None  # None | "data" | int order
    seen: dict[int, int] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped == "\\data\\":
            section = "data"
            continue
        if stripped == "\\end\\":
            section = "end"
            continue
        if stripped.startswith("\\") and stripped.endswith("-grams:"):
            try:
                section = int(stripped[1:-7])
            except ValueError as exc:
                raise DataError(f"{name}:{lineno}: malformed section header {stripped!r}") from exc
            if section not in counts:
                raise DataError(f"{name}:{lineno}: section {section} not declared in \\data\\")
            seen[section] = 0
            continue
        if section == "data":
            if not stripped.startswith("ngram "):
                raise DataError(f"{name}:{lineno}: expected 'ngram N=count', got {stripped!r}")
            try:
                n_str, count_str = stripped[6:].split("=")
                counts[int(n_str)] = int(count_str)
            except ValueError as exc:
                raise DataError(f"{name}:{lineno}: malformed count line {stripped!r}") from exc
            continue
        if isinstance(section, int):
            fields = line.split("\t")
            if len(fields) == 1:
                # whitespace-separated variant: prob, N tokens, optional backoff
                parts = stripped.split()
                if len(parts) in (section + 1, section + 2):
                    fields = [parts[0], " ".join(parts[1:section + 1])]
                    if len(parts) == section + 2:
                        fields.append(parts[-1])
            if len(fields) not in (2, 3):
                raise DataError(f"{name}:{lineno}: expected 2 or 3 fields, got {len(fields)}")
            try:
                prob = float(fields[0])
            except ValueError as exc:
                raise DataError(f"{name}:{lineno}: bad log probability {fields[0]!r}") from exc
            gram = tuple(fields[1].split())
            if len(gram) != section:
                raise DataError(
                    f"{name}:{lineno}: {len(gram)}-gram in \\{section}-grams\\ section"
                )
            seen[section] += 1
            if gram == (UNK,):
                unk_logprob = prob
            else:
                logprobs[gram] = prob
            if len(fields) == 3:
                try:
                    backoffs[gram] = float(fields[2])
                except ValueError as exc:
                    raise DataError(f"{name}:{lineno}: bad backoff {fields[2]!r}") from exc
            continue
        raise DataError(f"{name}:{lineno}: content outside any section: {stripped!r}")

    if not counts:
        raise DataError(f"{name}: missing \\data\\ section")
    for n, declared in counts.items():
        if declared and seen.get(n, 0) != declared:
            raise DataError(
                f"{name}: \\{n}-grams\\ section has {seen.get(n, 0)} entries, "
                f"header declares {declared}"
            )
    order = max(n for n, c in counts.items())
    vocab = frozenset(w for (w,) in [g for g in logprobs if len(g) == 1]
                      if w not in (BOS, UNK))
    return NGramModel(order=order, logprobs=logprobs, backoffs=backoffs,
                      unk_logprob=unk_logprob, vocab=vocab)


def context_normalization(model, context: Sequence[str]) -> float:
    """Sum of p(w|context) over the vocabulary plus the unknown type."""
    total = 10.0 ** model.logprob(context, "\x00unseen\x00")
    for word in model.vocab:
        total += 10.0 ** model.logprob(context, word)
    return total
