"""EM word alignment and grow-diag-final-and symmetrization.

IBM Model 1 stands in for a full alignment cascade: it is exactly testable
against a brute-force oracle and the downstream pipeline only consumes the
symmetrized link sets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Bitext
from .errors import DataError

logger = logging.getLogger(__name__)

NULL_TOKEN = "<null>"  # serialization form of the NULL conditioning row

TokenPair = tuple[Sequence[str], Sequence[str]]


@dataclass
class TranslationTable:
    """Lexical translation distribution t(predicted | conditioning).

    `probs[e][f]` is the probability of the predicted word f given the
    conditioning word e; the optional NULL row is keyed by None. Every row
    sums to 1 within 1e-9 after training.
    """

    probs: dict[str | None, dict[str, float]] = field(default_factory=dict)
    use_null: bool = False
    log_likelihoods: list[float] = field(default_factory=list)

    def prob(self, predicted: str, conditioning: str | None) -> float:
        row = self.probs.get(conditioning)
        if row is None:
            return 0.0
        return row.get(predicted, 0.0)


@dataclass(frozen=True)
class AlignmentMatrix:
    """Set of (source index, target index) word links for one sentence pair."""

    src_len: int
    tgt_len: int
    links: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for i, j in self.links:
            if not (0 <= i < self.src_len and 0 <= j < self.tgt_len):
                raise ValueError(f"link ({i},{j}) out of bounds for "
                                 f"{self.src_len}x{self.tgt_len} pair")


def _token_pairs(bitext: Bitext | Iterable[TokenPair]) -> list[TokenPair]:
    if isinstance(bitext, Bitext):
        return bitext.token_pairs()
    return [(tuple(s), tuple(t)) for s, t in bitext]


def train_model1(
    bitext: Bitext | Iterable[TokenPair],
    iterations: int,
    use_null: bool = True,
    initial: TranslationTable | None = None,
) -> TranslationTable:
    """EM-train t(source word | target word) on a bitext.

    The conditioning side is the target side of each pair (plus NULL when
    enabled), i.e. each source word is generated by one target word.
    Initialization is uniform over the source vocabulary; passing a
    previously trained table as `initial` resumes EM from it, so k
    iterations followed by k more equals 2k iterations in one call.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pairs = []
    for src, tgt in _token_pairs(bitext):
        if not src or not tgt:
            logger.warning("skipping sentence pair with an empty side")
            continue
        pairs.append((src, tgt))
    if not pairs:
        raise DataError("cannot train alignment model on an empty bitext")

    if initial is not None:
        if initial.use_null != use_null:
            raise ValueError("initial table NULL setting does not match use_null")
        probs = {e: dict(row) for e, row in initial.probs.items()}
        uniform = 0.0
    else:
        src_vocab = {w for src, _ in pairs for w in src}
        uniform = 1.0 / len(src_vocab)
        probs = {}

    log_likelihoods = list(initial.log_likelihoods) if initial is not None else []
    for _ in range(iterations):
        counts: dict[str | None, dict[str, float]] = {}
        totals: dict[str | None, float] = {}
        ll = 0.0
        for src, tgt in pairs:
            cond: list[str | None] = [None] + list(tgt) if use_null else list(tgt)
            rows = [probs.get(e) for e in cond]
            norm = math.log(len(cond))
            for f in src:
                scores = [
                    (row.get(f, uniform) if row is not None else uniform)
                    for row in rows
                ]
                denom = sum(scores)
                ll += math.log(denom) - norm
                for e, score in zip(cond, scores):
                    if score == 0.0:
                        continue
                    post = score / denom
                    row_counts = counts.setdefault(e, {})
                    row_counts[f] = row_counts.get(f, 0.0) + post
                    totals[e] = totals.get(e, 0.0) + post
        log_likelihoods.append(ll)
        probs = {
            e: {f: c / totals[e] for f, c in row.items()}
            for e, row in counts.items()
        }
        uniform = 0.0  # only the first E-step sees the uniform init

    return TranslationTable(probs=probs, use_null=use_null,
                            log_likelihoods=log_likelihoods)


def viterbi_align(
    table: TranslationTable,
    pair: TokenPair,
    direction: str = "forward",
) -> AlignmentMatrix:
    """Argmax word alignment of one sentence pair, links as (src, tgt) indices.

    direction "forward" expects a table conditioned on the pair's target
    side (the orientation train_model1 produces on this bitext) and aligns
    each source word to its best target word. direction "backward" expects
    a table conditioned on the pair's source side (trained on the swapped
    bitext) and aligns each target word to its best source word. Both
    directions emit links in the same (source, target) coordinate frame.

    Ties break toward the smaller conditioning-word index; NULL alignments
    produce no link. A word unknown to the table aligns to NULL when the
    NULL row is enabled, else to the uniform-fallback argmax (smallest
    index) with a warning.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction: {direction!r}")
    src, tgt = pair
    links: set[tuple[int, int]] = set()
    if direction == "forward":
        predicted, conditioning = list(src), list(tgt)
    else:
        predicted, conditioning = list(tgt), list(src)
    for p_idx, word in enumerate(predicted):
        if not conditioning:
            continue
        best_idx = -1
        best = 0.0
        for c_idx, cond_word in enumerate(conditioning):
            score = table.prob(word, cond_word)
            if score > best:
                best = score
                best_idx = c_idx
        null_score = table.prob(word, None) if table.use_null else 0.0
        if best == 0.0:
            if table.use_null:
                continue  # unknown word absorbed by NULL
            logger.warning("word %r unknown to table; uniform fallback alignment", word)
            best_idx = 0
        elif null_score > best:
            continue  # NULL alignment: no link
        if direction == "forward":
            links.add((p_idx, best_idx))
        else:
            links.add((best_idx, p_idx))
    return AlignmentMatrix(len(src), len(tgt), frozenset(links))


# Neighborhood scan order for the grow step: the published pseudocode leaves
# both the link scan order and the neighbor order open, so both are pinned
# here for reproducibility. Diagonal neighbors are examined before
# orthogonal ones; links are scanned row-major within each fixed-point sweep.
_NEIGHBORS = ((-1, -1), (-1, 1), (1, -1), (1, 1), (-1, 0), (1, 0), (0, -1), (0, 1))


def symmetrize_gdfa(forward: AlignmentMatrix, backward: AlignmentMatrix) -> AlignmentMatrix:
    """Grow-diag-final-and merge of two directional alignments.

    Both matrices must already be in the same (source, target) coordinate
    frame. Starting from the intersection, the grow step repeatedly adds
    union points adjacent (8-neighborhood) to an aligned point when at
    least one of the two words is still unaligned; the final-and step adds
    union points where both words are unaligned. The output always
    satisfies intersection <= result <= union.
    """
    if (forward.src_len, forward.tgt_len) != (backward.src_len, backward.tgt_len):
        raise ValueError(
            f"dimension mismatch: {forward.src_len}x{forward.tgt_len} vs "
            f"{backward.src_len}x{backward.tgt_len}"
        )
    union = forward.links | backward.links
    alignment = set(forward.links & backward.links)
    src_aligned = {i for i, _ in alignment}
    tgt_aligned = {j for _, j in alignment}

    changed = True
    while changed:
        changed = False
        for i, j in sorted(alignment):
            for di, dj in _NEIGHBORS:
                pt = (i + di, j + dj)
                if pt in alignment or pt not in union:
                    continue
                if pt[0] not in src_aligned or pt[1] not in tgt_aligned:
                    alignment.add(pt)
                    src_aligned.add(pt[0])
                    tgt_aligned.add(pt[1])
                    changed = True

    for pt in sorted(union - alignment):
        if pt[0] not in src_aligned and pt[1] not in tgt_aligned:
            alignment.add(pt)
            src_aligned.add(pt[0])
            tgt_aligned.add(pt[1])

    return AlignmentMatrix(forward.src_len, forward.tgt_len, frozenset(alignment))


# --- Serialization -----------------------------------------------------------

def format_alignment(matrix: AlignmentMatrix) -> str:
    """One line of `i-j` links, sorted, space-separated (Moses convention)."""
    return " ".join(f"{i}-{j}" for i, j in sorted(matrix.links))


def parse_alignment(line: str, src_len: int, tgt_len: int,
                    lineno: int = 0) -> AlignmentMatrix:
    links = set()
    for chunk in line.split():
        try:
            i_str, j_str = chunk.split("-")
            links.add((int(i_str), int(j_str)))
        except ValueError as exc:
            raise DataError(f"line {lineno}: malformed alignment link {chunk!r}") from exc
    try:
        return AlignmentMatrix(src_len, tgt_len, frozenset(links))
    except ValueError as exc:
        raise DataError(f"line {lineno}: {exc}") from exc


def write_alignments(path: str, matrices: Iterable[AlignmentMatrix]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for matrix in matrices:
            handle.write(format_alignment(matrix))
            handle.write("\n")


def read_alignments(lines: Iterable[str],
                    sizes: Sequence[tuple[int, int]]) -> list[AlignmentMatrix]:
    lines = list(lines)
    if len(lines) != len(sizes):
        raise DataError(
            f"alignment file has {len(lines)} lines but corpus has {len(sizes)} pairs"
        )
    return [
        parse_alignment(line, src_len, tgt_len, lineno)
        for lineno, (line, (src_len, tgt_len)) in enumerate(zip(lines, sizes), start=1)
    ]


def write_table(path: str, table: TranslationTable) -> None:
    """Dump `e<TAB>f<TAB>prob` lines sorted by (e, descending prob)."""
    with open(path, "w", encoding="utf-8") as handle:
        for cond in sorted(table.probs, key=lambda e: (e is None, e or "")):
            row = table.probs[cond]
            name = NULL_TOKEN if cond is None else cond
            for word, prob in sorted(row.items(), key=lambda kv: (-kv[1], kv[0])):
                handle.write(f"{name}\t{word}\t{prob:.10g}\n")


def read_table(lines: Iterable[str], path: str = "<table>") -> TranslationTable:
    probs: dict[str | None, dict[str, float]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
        cond = None if fields[0] == NULL_TOKEN else fields[0]
        try:
            prob = float(fields[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad probability {fields[2]!r}") from exc
        probs.setdefault(cond, {})[fields[1]] = prob
    return TranslationTable(probs=probs, use_null=None in probs)
