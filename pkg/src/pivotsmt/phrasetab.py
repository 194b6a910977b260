"""Phrase-pair extraction, phrase-table scoring, pruning and Moses-format I/O.

A phrase table maps source phrases to scored target candidates carrying the
four standard features: forward/backward phrase translation probabilities
and forward/backward lexical weights.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

from .align import AlignmentMatrix, TranslationTable
from .corpus import Bitext
from .errors import DataError

logger = logging.getLogger(__name__)

SCORE_FLOOR = 1e-12  # keeps log-linear scores finite on serialization

Phrase = tuple[str, ...]
Span = tuple[int, int]  # inclusive bounds


@dataclass(frozen=True)
class PhraseEntry:
    """One scored source/target phrase pair.

    Feature order matches the Moses line grammar: phi(t|s), lex(t|s),
    phi(s|t), lex(s|t).
    """

    source: Phrase
    target: Phrase
    phi_tgt_given_src: float
    lex_tgt_given_src: float
    phi_src_given_tgt: float
    lex_src_given_tgt: float

    def scores(self) -> tuple[float, float, float, float]:
        return (self.phi_tgt_given_src, self.lex_tgt_given_src,
                self.phi_src_given_tgt, self.lex_src_given_tgt)


class PhraseTable:
    """Map from source phrase to target candidates, no duplicate pairs."""

    def __init__(self, role: str = "", src_lang: str | None = None,
                 tgt_lang: str | None = None) -> None:
        self.role = role
        self.src_lang = src_lang
        self.tgt_lang = tgt_lang
        self.max_source_len = 0
        self._entries: dict[Phrase, dict[Phrase, PhraseEntry]] = {}

    def add(self, entry: PhraseEntry, replace: bool = False) -> None:
        targets = self._entries.setdefault(entry.source, {})
        if entry.target in targets and not replace:
            raise ValueError(
                f"duplicate phrase pair {entry.source!r} -> {entry.target!r}"
            )
        targets[entry.target] = entry
        if len(entry.source) > self.max_source_len:
            self.max_source_len = len(entry.source)

    def get(self, source: Phrase) -> list[PhraseEntry]:
        return list(self._entries.get(tuple(source), {}).values())

    def sources(self) -> list[Phrase]:
        return list(self._entries.keys())

    def __contains__(self, source: Phrase) -> bool:
        return tuple(source) in self._entries

    def __len__(self) -> int:
        return sum(len(t) for t in self._entries.values())

    def __iter__(self) -> Iterator[PhraseEntry]:
        for targets in self._entries.values():
            yield from targets.values()


@dataclass
class TableSet:
    """Phrase tables registered for decoding.

    "separate-features" scores each table as its own block of four
    features; "concat-data" is a marker that the merge already happened
    (or must happen) at the bitext level, so a single table is expected.
    """

    tables: list[PhraseTable]
    mode: str = "separate-features"

    def __post_init__(self) -> None:
        if not self.tables:
            raise ValueError("a table set needs at least one phrase table")
        if self.mode not in ("separate-features", "concat-data"):
            raise ValueError(f"unknown table combination mode: {self.mode!r}")


def extract_phrases(alignment: AlignmentMatrix, max_len: int) -> set[tuple[Span, Span]]:
    """All consistent phrase span pairs of one aligned sentence pair.

    A box (src span, tgt span) is extracted when it contains at least one
    link, no link crosses its boundary, both sides are at most max_len
    long, and every edge row/column carries a link (unaligned edge words
    are not expanded, so each source span yields at most its tight target
    projection). Spans are inclusive (first, last) index pairs.
    """
    links = sorted(alignment.links)
    if not links:
        return set()
    by_src: dict[int, list[int]] = {}
    for i, j in links:
        by_src.setdefault(i, []).append(j)
    # links_at_tgt[j] = number of links in target column j
    col_counts = [0] * alignment.tgt_len
    for _, j in links:
        col_counts[j] += 1
    col_prefix = [0]
    for c in col_counts:
        col_prefix.append(col_prefix[-1] + c)

    out: set[tuple[Span, Span]] = set()
    for i1 in range(alignment.src_len):
        if i1 not in by_src:
            continue  # tight boxes start on an aligned row
        j_lo = j_hi = None
        n_links = 0
        last_linked_row = i1
        for i2 in range(i1, min(i1 + max_len, alignment.src_len)):
            cols = by_src.get(i2)
            if cols:
                lo, hi = min(cols), max(cols)
                j_lo = lo if j_lo is None else min(j_lo, lo)
                j_hi = hi if j_hi is None else max(j_hi, hi)
                n_links += len(cols)
                last_linked_row = i2
            if j_lo is None or last_linked_row != i2:
                continue  # tight boxes end on an aligned row
            if j_hi - j_lo + 1 > max_len:
                continue
            # consistency: the target projection must not pull in rows
            # outside [i1, i2]; equivalently the box holds every link whose
            # column falls inside the projection.
            if col_prefix[j_hi + 1] - col_prefix[j_lo] == n_links:
                out.add(((i1, i2), (j_lo, j_hi)))
    return out


def _lex_weight(
    phrase_words: Sequence[str],
    other_words: Sequence[str],
    links_for: dict[int, list[int]],
    table: TranslationTable,
) -> float:
    """Product over phrase words of the average link probability.

    Unlinked words use the NULL row when the table has one, else 1.0.
    """
    weight = 1.0
    for idx, word in enumerate(phrase_words):
        linked = links_for.get(idx)
        if linked:
            avg = sum(table.prob(word, other_words[k]) for k in linked) / len(linked)
        elif table.use_null:
            avg = table.prob(word, None)
        else:
            avg = 1.0
        weight *= avg
    return max(weight, SCORE_FLOOR)


def score_phrase_table(
    bitext: Bitext | Iterable[tuple[Sequence[str], Sequence[str]]],
    alignments: Sequence[AlignmentMatrix],
    w_tgt_given_src: TranslationTable,
    w_src_given_tgt: TranslationTable,
    max_len: int = 5,
    role: str = "baseline",
) -> PhraseTable:
    """Extract and score a phrase table from a word-aligned bitext.

    Phrase probabilities are relative frequencies of extracted pair counts
    in both directions; lexical weights are alignment-based products of
    averages, keeping the best weight when a pair is observed with several
    internal alignments (deterministic).
    """
    if isinstance(bitext, Bitext):
        pairs = bitext.token_pairs()
    else:
        pairs = [(tuple(s), tuple(t)) for s, t in bitext]
    if len(pairs) != len(alignments):
        raise DataError(
            f"bitext has {len(pairs)} pairs but {len(alignments)} alignments given"
        )

    counts: dict[tuple[Phrase, Phrase], int] = {}
    src_totals: dict[Phrase, int] = {}
    tgt_totals: dict[Phrase, int] = {}
    lex_fwd: dict[tuple[Phrase, Phrase], float] = {}
    lex_bwd: dict[tuple[Phrase, Phrase], float] = {}

    for (src, tgt), alignment in zip(pairs, alignments):
        for (i1, i2), (j1, j2) in sorted(extract_phrases(alignment, max_len)):
            s_phrase = tuple(src[i1 : i2 + 1])
            t_phrase = tuple(tgt[j1 : j2 + 1])
            key = (s_phrase, t_phrase)
            counts[key] = counts.get(key, 0) + 1
            src_totals[s_phrase] = src_totals.get(s_phrase, 0) + 1
            tgt_totals[t_phrase] = tgt_totals.get(t_phrase, 0) + 1
            tgt_links: dict[int, list[int]] = {}
            src_links: dict[int, list[int]] = {}
            for i, j in sorted(alignment.links):
                if i1 <= i <= i2 and j1 <= j <= j2:
                    tgt_links.setdefault(j - j1, []).append(i - i1)
                    src_links.setdefault(i - i1, []).append(j - j1)
            fwd = _lex_weight(t_phrase, s_phrase, tgt_links, w_tgt_given_src)
            bwd = _lex_weight(s_phrase, t_phrase, src_links, w_src_given_tgt)
            if fwd > lex_fwd.get(key, 0.0):
                lex_fwd[key] = fwd
            if bwd > lex_bwd.get(key, 0.0):
                lex_bwd[key] = bwd

    table = PhraseTable(role=role)
    for (s_phrase, t_phrase), count in counts.items():
        table.add(PhraseEntry(
            source=s_phrase,
            target=t_phrase,
            phi_tgt_given_src=count / src_totals[s_phrase],
            lex_tgt_given_src=lex_fwd[(s_phrase, t_phrase)],
            phi_src_given_tgt=count / tgt_totals[t_phrase],
            lex_src_given_tgt=lex_bwd[(s_phrase, t_phrase)],
        ))
    return table


def prune_table(table: PhraseTable, top_k: int) -> PhraseTable:
    """Keep the top_k targets per source by phi(t|s), ties lexicographic."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    pruned = PhraseTable(role=table.role, src_lang=table.src_lang,
                         tgt_lang=table.tgt_lang)
    for source in table.sources():
        entries = sorted(table.get(source),
                         key=lambda e: (-e.phi_tgt_given_src, e.target))
        for entry in entries[:top_k]:
            pruned.add(entry)
    return pruned


# --- Moses-format I/O --------------------------------------------------------
#
# Line grammar: `src tokens ||| tgt tokens ||| phi(t|s) lex(t|s) phi(s|t) lex(s|t)`

_DELIM = " ||| "


def write_moses(table: PhraseTable, dest: str | TextIO) -> None:
    """Serialize a table; scores are floored at 1e-12 so logs stay finite."""
    handle: TextIO
    if isinstance(dest, str):
        handle = open(dest, "w", encoding="utf-8")
        close = True
    else:
        handle = dest
        close = False
    try:
        for source in sorted(table.sources()):
            for entry in sorted(table.get(source), key=lambda e: e.target):
                scores = " ".join(f"{max(s, SCORE_FLOOR):.10g}" for s in entry.scores())
                handle.write(f"{' '.join(entry.source)}{_DELIM}"
                             f"{' '.join(entry.target)}{_DELIM}{scores}\n")
    finally:
        if close:
            handle.close()


def read_moses(src: str | TextIO | Iterable[str], role: str = "",
               name: str = "<phrase-table>") -> PhraseTable:
    if isinstance(src, str):
        handle: Iterable[str] = open(src, "r", encoding="utf-8")
        name = src
        close = True
    else:
        handle = src
        close = False
    table = PhraseTable(role=role)
    try:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split(_DELIM)
            if len(fields) != 3:
                raise DataError(
                    f"{name}:{lineno}: expected 3 '|||'-separated fields, got {len(fields)}"
                )
            try:
                scores = [float(x) for x in fields[2].split()]
            except ValueError as exc:
                raise DataError(f"{name}:{lineno}: bad score field {fields[2]!r}") from exc
            if len(scores) != 4:
                raise DataError(f"{name}:{lineno}: expected 4 scores, got {len(scores)}")
            try:
                table.add(PhraseEntry(tuple(fields[0].split()), tuple(fields[1].split()),
                                      *scores))
            except ValueError as exc:
                raise DataError(f"{name}:{lineno}: {exc}") from exc
    finally:
        if close:
            handle.close()  # type: ignore[union-attr]
    return table


def moses_dumps(table: PhraseTable) -> str:
    buf = io.StringIO()
    write_moses(table, buf)
    return buf.getvalue()
