"""Unsupervised transliteration mining and character-level transduction.

A two-component mixture is fit by EM over word pairs: the transliteration
component is a monotone character-alignment model (substitutions,
insertions and deletions of up to two characters); the non-transliteration
component is the product of independent source and target character
unigram frequencies. Pairs whose posterior clears a threshold are mined,
and a character model trained on them drives k-best transliteration.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .errors import DataError
from .phrasetab import PhraseEntry, PhraseTable

logger = logging.getLogger(__name__)

MAX_SEG = 2  # character operations map source segments of 0..2 chars to target segments of 0..2 chars

# Total characters a pair may leave unmatched (inserted plus deleted).
# Without this bound the transliteration component can explain arbitrary
# unrelated pairs through delete-everything/insert-everything paths and the
# mixture degenerates; transliterations are near-total character mappings,
# so a small budget covers script artifacts only.
INDEL_BUDGET = 3

# Multi-character operations exist to capture systematic digraph
# correspondences (aspirates, matras), not to memorize word pairs: a
# one-off 2:2 operation can explain any random pair far better than the
# character-unigram noise component ever could. They are therefore only
# admitted into the model family when their segments co-occur in at least
# this many distinct pairs.
MULTI_OP_MIN_SUPPORT = 3

_BOW = "\x02"  # begin-of-word marker for the target character model
_EOW = "\x03"


@dataclass
class WordPairCorpus:
    """Weighted (source word, target word) pairs feeding the miner."""

    pairs: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for src, tgt, weight in self.pairs:
            if not src or not tgt:
                raise ValueError("word pair sides must be non-empty")
            if weight <= 0:
                raise ValueError(f"pair ({src!r}, {tgt!r}) has non-positive weight")

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_tsv(cls, lines: Iterable[str], name: str = "<pairs>") -> "WordPairCorpus":
        """Parse `src<TAB>tgt[<TAB>weight]` lines (weight defaults to 1)."""
        pairs = []
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise DataError(f"{name}:{lineno}: expected 2 or 3 fields, got {len(fields)}")
            weight = 1.0
            if len(fields) == 3:
                try:
                    weight = float(fields[2])
                except ValueError as exc:
                    raise DataError(f"{name}:{lineno}: bad weight {fields[2]!r}") from exc
            try:
                pairs.append((fields[0], fields[1], weight))
            except ValueError as exc:
                raise DataError(f"{name}:{lineno}: {exc}") from exc
        try:
            return cls(pairs)
        except ValueError as exc:
            raise DataError(f"{name}: {exc}") from exc

    @classmethod
    def from_phrase_table(cls, table: PhraseTable) -> "WordPairCorpus":
        """Single-token entries of a phrase table as expectation-weighted pairs.

        The forward phrase probability serves as the pair weight.
        """
        pairs = []
        for entry in table:
            if len(entry.source) == 1 and len(entry.target) == 1:
                weight = entry.phi_tgt_given_src
                if weight > 0:
                    pairs.append((entry.source[0], entry.target[0], weight))
        return cls(pairs)


@dataclass(frozen=True)
class MinedPair:
    source: str
    target: str
    posterior: float


class CharTrigramModel:
    """Add-0.1 smoothed character trigram model over target words."""

    ALPHA = 0.1

    def __init__(self) -> None:
        self.counts: dict[tuple[str, str], dict[str, float]] = {}
        self.totals: dict[tuple[str, str], float] = {}
        self.alphabet: set[str] = set()

    def observe(self, word: str, weight: float = 1.0) -> None:
        chars = [_BOW, _BOW] + list(word) + [_EOW]
        self.alphabet.update(chars[2:])
        for k in range(2, len(chars)):
            ctx = (chars[k - 2], chars[k - 1])
            row = self.counts.setdefault(ctx, {})
            row[chars[k]] = row.get(chars[k], 0.0) + weight
            self.totals[ctx] = self.totals.get(ctx, 0.0) + weight

    def logprob(self, c1: str, c2: str, c3: str) -> float:
        # one extra slot of smoothing mass covers never-seen characters
        denom = self.totals.get((c1, c2), 0.0) + self.ALPHA * (len(self.alphabet) + 1)
        num = self.counts.get((c1, c2), {}).get(c3, 0.0) + self.ALPHA
        return math.log10(num / denom)

    def to_dict(self) -> dict:
        return {
            "alphabet": sorted(self.alphabet),
            "counts": {c1 + "\x00" + c2: row for (c1, c2), row in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CharTrigramModel":
        model = cls()
        model.alphabet = set(data["alphabet"])
        for key, row in data["counts"].items():
            c1, c2 = key.split("\x00")
            model.counts[(c1, c2)] = dict(row)
            model.totals[(c1, c2)] = sum(row.values())
        return model


@dataclass
class CharModel:
    """Monotone character transduction model plus mixture prior.

    ops[a][b] is the probability of emitting target segment b while
    consuming source segment a; the empty source segment conditions
    insertions and the empty target segment realizes deletions. Each
    conditioning row sums to 1.
    """

    ops: dict[str, dict[str, float]] = field(default_factory=dict)
    lam: float = 0.5
    src_chars: frozenset[str] = frozenset()
    tgt_lm: CharTrigramModel = field(default_factory=CharTrigramModel)
    log_likelihoods: list[float] = field(default_factory=list)

    def op_prob(self, a: str, b: str) -> float:
        row = self.ops.get(a)
        if row is None:
            return 0.0
        return row.get(b, 0.0)


def _forward_lattice(s: str, t: str, ops, init_prob=None, allowed_multi=None):
    """Forward DP over monotone segmentations within the indel budget.

    `ops` maps source segments to target-segment probability rows; when
    `init_prob` is given the lattice is dense over the admitted inventory
    and every operation takes init_prob(a, b) instead (first EM pass), with
    multi-character substitutions restricted to `allowed_multi`. Cells are
    indexed by source position, target position and unmatched-character
    budget used. Returns (total probability, forward table, move list);
    moves are (i, j, d, di, dj, src seg, tgt seg, p).
    """
    m, n = len(s), len(t)
    budget = INDEL_BUDGET
    fwd = [[[0.0] * (budget + 1) for _ in range(n + 1)] for _ in range(m + 1)]
    fwd[0][0][0] = 1.0
    moves = []
    for i in range(m + 1):
        for j in range(n + 1):
            cell = fwd[i][j]
            for d in range(budget + 1):
                v = cell[d]
                if v == 0.0:
                    continue
                for di in range(0, MAX_SEG + 1):
                    if i + di > m:
                        break
                    a = s[i:i + di]
                    if init_prob is None:
                        op_row = ops.get(a)
                        if op_row is None:
                            continue
                    for dj in range(0, MAX_SEG + 1):
                        if di == 0 and dj == 0:
                            continue
                        if j + dj > n:
                            break
                        spent = dj if di == 0 else (di if dj == 0 else 0)
                        if d + spent > budget:
                            continue
                        b = t[j:j + dj]
                        if init_prob is None:
                            p = op_row.get(b, 0.0)
                        else:
                            if (di >= 1 and dj >= 1 and di + dj > 2
                                    and (a, b) not in allowed_multi):
                                continue
                            p = init_prob(a, b)
                        if p:
                            fwd[i + di][j + dj][d + spent] += v * p
                            moves.append((i, j, d, di, dj, a, b, p))
    return sum(fwd[m][n]), fwd, moves


def _accumulate_counts(s: str, t: str, fwd, moves, total: float, scale: float,
                       counts: dict[str, dict[str, float]]) -> None:
    """Add forward-backward expectations of one pair into the count table."""
    m, n = len(s), len(t)
    budget = INDEL_BUDGET
    bwd = [[[0.0] * (budget + 1) for _ in range(n + 1)] for _ in range(m + 1)]
    for d in range(budget + 1):
        bwd[m][n][d] = 1.0
    for i, j, d, di, dj, a, b, p in reversed(moves):
        spent = dj if di == 0 else (di if dj == 0 else 0)
        bwd[i][j][d] += p * bwd[i + di][j + dj][d + spent]
    norm = scale / total
    for i, j, d, di, dj, a, b, p in moves:
        spent = dj if di == 0 else (di if dj == 0 else 0)
        gamma = fwd[i][j][d] * p * bwd[i + di][j + dj][d + spent] * norm
        if gamma:
            row = counts.setdefault(a, {})
            row[b] = row.get(b, 0.0) + gamma


def _segments(word: str, include_empty: bool) -> set[str]:
    segs = {""} if include_empty else set()
    for length in range(1, MAX_SEG + 1):
        for k in range(len(word) - length + 1):
            segs.add(word[k:k + length])
    return segs


def mine_transliterations(
    corpus: WordPairCorpus,
    iterations: int,
    threshold: float = 0.5,
) -> tuple[CharModel, list[MinedPair]]:
    """EM-fit the transliteration mixture and return pairs above threshold.

    The returned model carries the fitted character operations, the mixture
    prior, and a target-side character trigram model trained from the mined
    pairs (falling back to posterior-weighted training when nothing clears
    the threshold).
    """
    if len(corpus) == 0:
        raise DataError("cannot mine transliterations from an empty corpus")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    pairs = corpus.pairs
    # fixed non-transliteration component: independent char unigram products
    # over both sides jointly
    src_freq: dict[str, float] = {}
    tgt_freq: dict[str, float] = {}
    src_total = tgt_total = 0.0
    for s, t, w in pairs:
        for ch in s:
            src_freq[ch] = src_freq.get(ch, 0.0) + w
            src_total += w
        for ch in t:
            tgt_freq[ch] = tgt_freq.get(ch, 0.0) + w
            tgt_total += w
    log_noise = [
        sum(math.log(src_freq[ch] / src_total) for ch in s)
        + sum(math.log(tgt_freq[ch] / tgt_total) for ch in t)
        for s, t, _ in pairs
    ]

    # The operation distribution is a single joint multinomial during EM,
    # not a family of per-row conditionals: with row-local normalization,
    # low-traffic rows (rare source segments) are free to concentrate on
    # noise targets at high conditional probability and the mixture
    # degenerates; joint normalization makes junk operations compete with
    # every systematic correspondence and starve. The stored model is
    # conditionalized afterwards.
    #
    # Co-occurrence statistics steer the first E-step into the separating
    # basin: Dice-style scores (co^2 / (occ*occ), squared for contrast)
    # start systematic correspondences far above the character-unigram
    # baseline and chance combinations below it.
    co: dict[tuple[str, str], float] = {}
    occ_src: dict[str, float] = {}
    occ_tgt: dict[str, float] = {}
    all_src_segments: set[str] = set()
    all_tgt_segments: set[str] = set()
    for s, t, w in pairs:
        s_segs = _segments(s, include_empty=False)
        t_segs = _segments(t, include_empty=False)
        all_src_segments |= s_segs
        all_tgt_segments |= t_segs
        for a in s_segs:
            occ_src[a] = occ_src.get(a, 0.0) + w
        for b in t_segs:
            occ_tgt[b] = occ_tgt.get(b, 0.0) + w
        for a in s_segs:
            for b in t_segs:
                co[(a, b)] = co.get((a, b), 0.0) + w

    multi_weight = 1e-3  # multi-char ops must be earned from the data
    eps_weight = 1e-4    # insertions/deletions likewise

    def init_weight(a: str, b: str) -> float:
        if not a or not b:
            return eps_weight
        count = co.get((a, b), 0.0)
        if count == 0.0:
            return 0.0
        dice = count * count / (occ_src[a] * occ_tgt[b])
        score = dice * dice
        if len(a) == 1 and len(b) == 1:
            return score
        return score * multi_weight

    init_total = eps_weight * (len(all_src_segments) + len(all_tgt_segments))
    for key in co:
        init_total += init_weight(*key)

    def init_prob(a: str, b: str) -> float:
        return init_weight(a, b) / init_total

    # admit multi-character substitutions only with corpus support
    support: dict[tuple[str, str], int] = {}
    for s, t, _ in pairs:
        s_segs = _segments(s, include_empty=False)
        t_segs = _segments(t, include_empty=False)
        for a in s_segs:
            for b in t_segs:
                if len(a) + len(b) > 2:
                    key = (a, b)
                    support[key] = support.get(key, 0) + 1
    allowed_multi = {combo for combo, count in support.items()
                     if count >= MULTI_OP_MIN_SUPPORT}

    joint: dict[str, dict[str, float]] = {}
    first_pass = True
    lam = 0.5
    log_likelihoods: list[float] = []

    def e_pass(collect: bool):
        counts: dict[str, dict[str, float]] = {}
        lam_num = 0.0
        weight_total = 0.0
        ll = 0.0
        posteriors = []
        for idx, (s, t, w) in enumerate(pairs):
            p_translit, fwd, moves = _forward_lattice(
                s, t, joint, init_prob if first_pass else None, allowed_multi)
            p_noise = math.exp(log_noise[idx])
            mix = lam * p_translit + (1.0 - lam) * p_noise
            ll += w * math.log(mix)
            post = (lam * p_translit / mix) if mix > 0 else 0.0
            posteriors.append(post)
            lam_num += w * post
            weight_total += w
            if collect and post > 0 and p_translit > 0:
                _accumulate_counts(s, t, fwd, moves, p_translit, w * post, counts)
        return ll, counts, lam_num / weight_total, posteriors

    for _ in range(iterations):
        ll, counts, new_lam, _ = e_pass(collect=True)
        log_likelihoods.append(ll)
        # counts below 1e-12 carry no information and only slow the DP
        total = sum(c for row in counts.values() for c in row.values()
                    if c > 1e-12)
        joint = {}
        if total > 0:
            for a, row in counts.items():
                kept = {b: c / total for b, c in row.items() if c > 1e-12}
                if kept:
                    joint[a] = kept
        lam = min(max(new_lam, 1e-6), 1.0 - 1e-6)
        first_pass = False

    # final posteriors under the converged parameters
    ll, _, _, final_posteriors = e_pass(collect=False)
    log_likelihoods.append(ll)

    # expose row-conditional operation probabilities
    ops: dict[str, dict[str, float]] = {}
    for a, row in joint.items():
        row_total = sum(row.values())
        ops[a] = {b: p / row_total for b, p in row.items()}

    mined = [
        MinedPair(s, t, post)
        for (s, t, _), post in zip(pairs, final_posteriors)
        if post >= threshold
    ]

    tgt_lm = CharTrigramModel()
    if mined:
        for pair in mined:
            tgt_lm.observe(pair.target)
    else:
        logger.warning("no pairs cleared the mining threshold; "
                       "character model falls back to posterior weighting")
        for (s, t, _), post in zip(pairs, final_posteriors):
            tgt_lm.observe(t, weight=max(post, 1e-3))

    model = CharModel(
        ops=ops,
        lam=lam,
        src_chars=frozenset(ch for s, _, _ in pairs for ch in s),
        tgt_lm=tgt_lm,
        log_likelihoods=log_likelihoods,
    )
    return model, mined


@dataclass(frozen=True)
class TransliterationCandidate:
    target: str
    score: float  # log10 of transduction prob times target char LM prob
    fallback: bool  # identity mapping was used for unseen characters


def transliterate(model: CharModel, word: str, k: int) -> list[TransliterationCandidate]:
    """k-best monotone transliterations by exact best-first search.

    Candidates are scored by the character operations plus the target
    character trigram model; results come sorted by descending score with
    lexicographic tie-breaking. Characters never seen by the model fall
    back to identity mapping and flag the result.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    unseen = {ch for ch in word if ch not in model.src_chars}
    fallback = bool(unseen)

    def op_prob(a: str, b: str) -> float:
        p = model.op_prob(a, b)
        if p:
            return p
        if len(a) == 1 and a in unseen and b == a:
            return 1.0  # identity rescue for unknown characters
        return 0.0

    lm = model.tgt_lm
    max_out = 2 * len(word) + 4
    m = len(word)
    # state: (neg score, output, source position, last two output chars,
    # indel budget spent); the LM context is determined by the output, so
    # (output, position, spent) keys the visited set and best-first pops
    # are optimal per state.
    start = (0.0, "", 0, (_BOW, _BOW), 0)
    heap: list[tuple[float, str, int, tuple[str, str], int]] = [start]
    results: list[TransliterationCandidate] = []
    visited: set[tuple[str, int, int]] = set()
    pops = 0
    while heap and len(results) < k and pops < 200000:
        pops += 1
        neg, out, i, ctx, spent = heapq.heappop(heap)
        if i == m + 1:  # finalized
            results.append(TransliterationCandidate(out, -neg, fallback))
            continue
        if (out, i, spent) in visited:
            continue
        visited.add((out, i, spent))
        if i == m:
            end_lp = lm.logprob(ctx[0], ctx[1], _EOW)
            heapq.heappush(heap, (neg - end_lp, out, m + 1, ctx, spent))
            # insertions may still apply before finalizing (fall through)
        for di in range(0, MAX_SEG + 1):
            if i + di > m:
                break
            a = word[i:i + di]
            for dj in range(0, MAX_SEG + 1):
                if di == 0 and dj == 0:
                    continue
                cost = dj if di == 0 else (di if dj == 0 else 0)
                if spent + cost > INDEL_BUDGET:
                    continue
                if dj == 0:
                    candidates = [""]
                else:
                    row = model.ops.get(a)
                    candidates = [b for b in (row or ()) if len(b) == dj]
                    if not candidates and di == 1 and a in unseen and dj == 1:
                        candidates = [a]
                for b in candidates:
                    p = op_prob(a, b)
                    if not p or len(out) + dj > max_out:
                        continue
                    lp = math.log10(p)
                    new_ctx = ctx
                    for ch in b:
                        lp += lm.logprob(new_ctx[0], new_ctx[1], ch)
                        new_ctx = (new_ctx[1], ch)
                    heapq.heappush(heap, (neg - lp, out + b, i + di,
                                          new_ctx, spent + cost))
    if not results:
        # no usable operations at all: copy the word through, flagged
        score = 0.0
        ctx = (_BOW, _BOW)
        for ch in word:
            score += lm.logprob(ctx[0], ctx[1], ch)
            ctx = (ctx[1], ch)
        score += lm.logprob(ctx[0], ctx[1], _EOW)
        logger.warning("transliterate: no path for %r; identity fallback", word)
        results = [TransliterationCandidate(word, score, True)]
    return results


def build_translit_table(model: CharModel, words: Sequence[str], k: int) -> PhraseTable:
    """k-best transliterations of each word as a one-word-phrase table.

    Forward features are the normalized candidate scores, duplicated to the
    backward features.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    table = PhraseTable(role="transliterated")
    done: set[str] = set()
    for word in words:
        if word in done:
            continue
        done.add(word)
        candidates = transliterate(model, word, k)
        if not candidates:
            continue
        # normalize in linear space relative to the best candidate so long
        # words cannot underflow the partition sum
        best = max(c.score for c in candidates)
        rel = [10.0 ** (c.score - best) for c in candidates]
        total = sum(rel)
        for cand, mass in zip(candidates, rel):
            prob = mass / total
            table.add(PhraseEntry((word,), (cand.target,), prob, prob, prob, prob))
    return table


# --- Serialization -----------------------------------------------------------

def write_mined_pairs(pairs: Iterable[MinedPair], dest: str | TextIO) -> None:
    handle = open(dest, "w", encoding="utf-8") if isinstance(dest, str) else dest
    try:
        for pair in pairs:
            handle.write(f"{pair.source}\t{pair.target}\t{pair.posterior:.6f}\n")
    finally:
        if isinstance(dest, str):
            handle.close()


def read_mined_pairs(lines: Iterable[str], name: str = "<mined>") -> list[MinedPair]:
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{name}:{lineno}: expected 3 fields, got {len(fields)}")
        try:
            pairs.append(MinedPair(fields[0], fields[1], float(fields[2])))
        except ValueError as exc:
            raise DataError(f"{name}:{lineno}: {exc}") from exc
    return pairs


def write_char_model(model: CharModel, path: str) -> None:
    data = {
        "lambda": model.lam,
        "ops": model.ops,
        "src_chars": sorted(model.src_chars),
        "tgt_lm": model.tgt_lm.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, ensure_ascii=False, sort_keys=True)


def read_char_model(path: str) -> CharModel:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        return CharModel(
            ops={a: dict(row) for a, row in data["ops"].items()},
            lam=float(data["lambda"]),
            src_chars=frozenset(data["src_chars"]),
            tgt_lm=CharTrigramModel.from_dict(data["tgt_lm"]),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed character model ({exc})") from exc
