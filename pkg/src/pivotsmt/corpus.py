"""Text ingestion, tokenization, vocabularies, bitexts and dictionaries.

All text is Unicode; corpora on disk are UTF-8, one tokenized sentence per
line, with line i of the source file aligned to line i of the target file.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

PROVENANCE_TAGS = ("baseline", "synthetic", "dictionary")
DICTIONARY_SOURCES = ("wikipedia", "wiktionary", "omegawiki", "mesh")
TOKENIZE_SCHEMES = ("unicode-punct", "whitespace")

DEFAULT_MAX_SENT_LEN = 80


class Vocabulary:
    """Bijective word <-> dense id mapping with reserved marker ids.

    Ids 0/1/2 are reserved for the sentence-start, sentence-end and unknown
    markers. Construction is single-writer; after the building phase the
    instance should be treated as read-only and may be shared freely.
    """

    def __init__(self) -> None:
        self._words: list[str] = [BOS, EOS, UNK]
        self._ids: dict[str, int] = {BOS: 0, EOS: 1, UNK: 2}

    bos_id = 0
    eos_id = 1
    unk_id = 2

    def add(self, word: str) -> int:
        """Register a word (idempotent) and return its id."""
        idx = self._ids.get(word)
        if idx is None:
            idx = len(self._words)
            self._words.append(word)
            self._ids[word] = idx
        return idx

    def id_of(self, word: str) -> int:
        return self._ids[word]

    def id_or_unk(self, word: str) -> int:
        return self._ids.get(word, self.unk_id)

    def word_of(self, idx: int) -> str:
        return self._words[idx]

    def words(self) -> list[str]:
        """All registered words excluding the reserved markers."""
        return self._words[3:]

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def __len__(self) -> int:
        return len(self._words)


@dataclass(frozen=True)
class Sentence:
    """Token ids plus the original surface line they came from."""

    ids: tuple[int, ...]
    surface: str

    def __len__(self) -> int:
        return len(self.ids)

    def tokens(self, vocab: Vocabulary) -> tuple[str, ...]:
        return tuple(vocab.word_of(i) for i in self.ids)


def make_sentence(tokens: Sequence[str], vocab: Vocabulary) -> Sentence:
    return Sentence(tuple(vocab.add(t) for t in tokens), " ".join(tokens))


@dataclass
class Bitext:
    """Sentence-aligned parallel corpus with per-pair provenance tags."""

    src_vocab: Vocabulary = field(default_factory=Vocabulary)
    tgt_vocab: Vocabulary = field(default_factory=Vocabulary)
    pairs: list[tuple[Sentence, Sentence]] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)
    dropped_pairs: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def add_pair(self, src: Sentence, tgt: Sentence, provenance: str) -> None:
        if provenance not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag: {provenance!r}")
        self.pairs.append((src, tgt))
        self.provenance.append(provenance)

    def token_pairs(self) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
        return [
            (s.tokens(self.src_vocab), t.tokens(self.tgt_vocab))
            for s, t in self.pairs
        ]

    def source_tokens(self) -> list[tuple[str, ...]]:
        return [s.tokens(self.src_vocab) for s, _ in self.pairs]

    def target_tokens(self) -> list[tuple[str, ...]]:
        return [t.tokens(self.tgt_vocab) for _, t in self.pairs]


@dataclass(frozen=True)
class DictionaryEntry:
    """A mined term pair with its originating source."""

    source: tuple[str, ...]
    target: tuple[str, ...]
    provenance: str

    def __post_init__(self) -> None:
        if not self.source or not self.target:
            raise ValueError("dictionary entry sides must be non-empty")
        if self.provenance not in DICTIONARY_SOURCES:
            raise ValueError(f"unknown dictionary provenance: {self.provenance!r}")


def tokenize(raw_line: str, scheme: str = "unicode-punct",
             lowercase: bool = False) -> list[str]:
    """Split a line into tokens.

    Punctuation characters (Unicode general category P) are separated from
    adjacent word characters before whitespace splitting; the "whitespace"
    scheme skips the punctuation pass. Case is kept by default (folding is
    an experiment variable and caseless scripts pass through unchanged).
    """
    if scheme not in TOKENIZE_SCHEMES:
        raise ValueError(f"unknown tokenization scheme: {scheme!r}")
    if lowercase:
        raw_line = raw_line.lower()
    if scheme == "whitespace":
        return raw_line.split()
    out: list[str] = []
    for ch in raw_line:
        if unicodedata.category(ch).startswith("P"):
            out.append(" ")
            out.append(ch)
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out).split()


def read_lines(path: str) -> list[str]:
    """Read UTF-8 lines; a bad byte sequence reports its line number."""
    lines = []
    with open(path, "rb") as handle:
        for lineno, raw in enumerate(handle, start=1):
            try:
                lines.append(raw.decode("utf-8").rstrip("\n").rstrip("\r"))
            except UnicodeDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid UTF-8 ({exc})") from exc
    return lines


def write_lines(path: str, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line)
            handle.write("\n")


def ingest_bitext(
    source_lines: Iterable[str],
    target_lines: Iterable[str],
    max_len: int = DEFAULT_MAX_SENT_LEN,
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
    provenance: str = "baseline",
) -> Bitext:
    """Pair up two pre-tokenized line streams into a Bitext.

    Pairs where either side exceeds max_len tokens are dropped; the drop
    count is kept on the result and logged. Unequal line counts are a hard
    error naming both counts.
    """
    src_lines = list(source_lines)
    tgt_lines = list(target_lines)
    if len(src_lines) != len(tgt_lines):
        raise DataError(
            f"line count mismatch: source has {len(src_lines)} lines, "
            f"target has {len(tgt_lines)} lines"
        )
    bitext = Bitext(src_vocab or Vocabulary(), tgt_vocab or Vocabulary())
    dropped = 0
    for src_line, tgt_line in zip(src_lines, tgt_lines):
        src_toks = src_line.split()
        tgt_toks = tgt_line.split()
        if len(src_toks) > max_len or len(tgt_toks) > max_len:
            dropped += 1
            continue
        bitext.add_pair(
            make_sentence(src_toks, bitext.src_vocab),
            make_sentence(tgt_toks, bitext.tgt_vocab),
            provenance,
        )
    bitext.dropped_pairs = dropped
    if dropped:
        logger.info("ingest: dropped %d pairs over %d tokens", dropped, max_len)
    return bitext


def concat_bitexts(parts: Sequence[Bitext]) -> Bitext:
    """Order-preserving concatenation; vocabularies are merged as needed."""
    if not parts:
        return Bitext()
    first = parts[0]
    if all(p.src_vocab is first.src_vocab and p.tgt_vocab is first.tgt_vocab for p in parts):
        out = Bitext(first.src_vocab, first.tgt_vocab)
        for part in parts:
            out.pairs.extend(part.pairs)
            out.provenance.extend(part.provenance)
        return out
    # Distinct vocabularies: re-encode every sentence into merged ones.
    out = Bitext()
    for part in parts:
        for (src, tgt), tag in zip(part.pairs, part.provenance):
            out.add_pair(
                make_sentence(src.tokens(part.src_vocab), out.src_vocab),
                make_sentence(tgt.tokens(part.tgt_vocab), out.tgt_vocab),
                tag,
            )
    return out


def dict_to_bitext(
    entries: Sequence[DictionaryEntry],
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
) -> Bitext:
    """Turn dictionary entries into one-sentence-pair-per-entry training data."""
    bitext = Bitext(src_vocab or Vocabulary(), tgt_vocab or Vocabulary())
    for entry in entries:
        bitext.add_pair(
            make_sentence(entry.source, bitext.src_vocab),
            make_sentence(entry.target, bitext.tgt_vocab),
            "dictionary",
        )
    return bitext


def read_dictionary_tsv(lines: Iterable[str], path: str = "<dict>") -> list[DictionaryEntry]:
    """Parse `source<TAB>target<TAB>provenance` lines."""
    entries = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
        source, target, provenance = fields
        try:
            entries.append(
                DictionaryEntry(tuple(source.split()), tuple(target.split()), provenance.strip())
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return entries


def count_oov(sentences: Iterable[Sequence[str]], known: Iterable[str]) -> int:
    """Count tokens not present in the known-word set."""
    known_set = set(known)
    return sum(1 for sent in sentences for tok in sent if tok not in known_set)


# --- Simplified wiki language-link extraction -------------------------------
#
# Fixture format: pages are concatenated in one file, each introduced by a
# header line `== <title>`; everything until the next header is page text.
# Only inter-language links of the form [[code:title]] are interpreted.

_LINK_BODY = re.compile(r"^([A-Za-z][A-Za-z-]*):(.+)$", re.S)


def parse_wiki_pages(lines: Iterable[str]) -> list[tuple[str, str]]:
    """Split a concatenated page file into (title, body) chunks."""
    pages: list[tuple[str, str]] = []
    title = None
    body: list[str] = []
    for line in lines:
        if line.startswith("== "):
            if title is not None:
                pages.append((title, "\n".join(body)))
            title = line[3:].strip()
            body = []
        elif title is not None:
            body.append(line)
    if title is not None:
        pages.append((title, "\n".join(body)))
    return pages


def extract_language_links(
    title: str, page_text: str, target_lang: str
) -> tuple[list[DictionaryEntry], int]:
    """Scan one page for [[target_lang:title]] links.

    Returns the deduplicated entries plus the count of malformed link
    candidates (unclosed markup or empty titles); malformed links are
    skipped, never fatal.
    """
    entries: list[DictionaryEntry] = []
    seen: set[str] = set()
    malformed = 0
    pos = 0
    while True:
        start = page_text.find("[[", pos)
        if start < 0:
            break
        end = page_text.find("]]", start + 2)
        nxt = page_text.find("[[", start + 2)
        if end < 0 or (0 <= nxt < end):
            malformed += 1
            pos = start + 2
            continue
        inner = page_text[start + 2 : end]
        pos = end + 2
        match = _LINK_BODY.match(inner)
        if match is None:
            if ":" in inner:
                malformed += 1
            continue  # plain page link; not a language link
        code, linked = match.group(1), match.group(2).strip()
        if not linked:
            malformed += 1
            continue
        if code == target_lang and linked not in seen:
            seen.add(linked)
            entries.append(
                DictionaryEntry(tuple(title.split()), tuple(linked.split()), "wikipedia")
            )
    return entries, malformed


def mine_language_links(
    lines: Iterable[str], target_lang: str
) -> tuple[list[DictionaryEntry], int]:
    """Extract language links from every page of a concatenated fixture file."""
    all_entries: list[DictionaryEntry] = []
    malformed = 0
    for title, body in parse_wiki_pages(lines):
        entries, bad = extract_language_links(title, body, target_lang)
        all_entries.extend(entries)
        malformed += bad
    if malformed:
        logger.warning("skipped %d malformed language links", malformed)
    return all_entries, malformed
