"""Unigram WordPiece segmentation: Viterbi best parse, exact n-best, and
smoothed sampling for sub-word regularization."""

from __future__ import annotations

import functools
import heapq
import io
import math
import os
import random
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence, TextIO, Union

DEFAULT_MARKER = "_"

Source = Union[str, os.PathLike, bytes, BinaryIO, TextIO]


class VocabularyError(ValueError):
    """Raised for malformed vocabulary input."""


class SegmentationError(ValueError):
    """Raised when a word cannot be covered by vocabulary pieces."""

    def __init__(self, message: str, word: str, word_index: int | None = None):
        super().__init__(message)
        self.word = word
        self.word_index = word_index


class Vocabulary:
    """Ordered unigram piece inventory; piece id is its position.

    Immutable after construction and safe to share across threads.
    """

    def __init__(self, pieces: Iterable[tuple[str, float]], marker: str = DEFAULT_MARKER):
        if not marker:
            raise VocabularyError("word-boundary marker must be non-empty")
        self.marker = marker
        self._pieces: list[str] = []
        self._logprobs: list[float] = []
        self._ids: dict[str, int] = {}
        for piece, logprob in pieces:
            if not piece:
                raise VocabularyError("empty piece string")
            logprob = float(logprob)
            if math.isnan(logprob) or logprob > 0:
                raise VocabularyError(f"piece {piece!r}: logprob must be <= 0, got {logprob}")
            if piece in self._ids:
                raise VocabularyError(f"duplicate piece {piece!r}")
            self._ids[piece] = len(self._pieces)
            self._pieces.append(piece)
            self._logprobs.append(logprob)
        self.max_piece_len = max((len(p) for p in self._pieces), default=0)

    def __len__(self) -> int:
        return len(self._pieces)

    def __contains__(self, piece: object) -> bool:
        return piece in self._ids

    def __repr__(self) -> str:
        return f"Vocabulary(V={len(self)}, marker={self.marker!r})"

    @property
    def pieces(self) -> list[str]:
        return list(self._pieces)

    def piece(self, idx: int) -> str:
        return self._pieces[idx]

    def logprob(self, idx: int) -> float:
        return self._logprobs[idx]

    def id(self, piece: str) -> int:
        try:
            return self._ids[piece]
        except KeyError:
            raise KeyError(f"unknown piece {piece!r}") from None

    def get(self, piece: str) -> int | None:
        return self._ids.get(piece)

    def items(self) -> list[tuple[str, float]]:
        return list(zip(self._pieces, self._logprobs))


@dataclass(frozen=True)
class Segmentation:
    ids: tuple[int, ...]
    logprob: float

    def __len__(self) -> int:
        return len(self.ids)

    def pieces(self, vocab: Vocabulary) -> list[str]:
        return [vocab.piece(i) for i in self.ids]


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return f.read().decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def load_vocab(source: Source, marker: str = DEFAULT_MARKER) -> Vocabulary:
    """Read ``piece<TAB>logprob`` lines; line order gives the piece ids.

    ``source`` may be a path, raw bytes, or an open (binary or text) stream.
    """
    text = _read_text(source)
    entries = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r")
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise VocabularyError(f"line {lineno}: expected 'piece<TAB>logprob', got {line!r}")
        try:
            logprob = float(fields[1])
        except ValueError:
            raise VocabularyError(f"line {lineno}: bad logprob {fields[1]!r}") from None
        entries.append((fields[0], logprob))
    try:
        return Vocabulary(entries, marker=marker)
    except VocabularyError as e:
        raise VocabularyError(f"{e}") from None


def _lattice(word: str, vocab: Vocabulary) -> list[list[tuple[int, int]]]:
    """edges[i] lists (piece id, end position) for pieces starting at i."""
    n = len(word)
    edges: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, min(n, i + vocab.max_piece_len) + 1):
            pid = vocab.get(word[i:j])
            if pid is not None:
                edges[i].append((pid, j))
    return edges


def _best_suffix(word: str, vocab: Vocabulary, edges) -> list[float]:
    n = len(word)
    best = [-math.inf] * (n + 1)
    best[n] = 0.0
    for i in range(n - 1, -1, -1):
        for pid, j in edges[i]:
            score = vocab.logprob(pid) + best[j]
            if score > best[i]:
                best[i] = score
    return best


def _sort_key(seg: Segmentation) -> tuple:
    return (-seg.logprob, len(seg.ids), seg.ids)


@functools.lru_cache(maxsize=4096)
def _nbest(vocab: Vocabulary, word: str, l: int) -> tuple[Segmentation, ...]:
    if not word:
        raise SegmentationError("cannot segment an empty word", word)
    edges = _lattice(word, vocab)
    h = _best_suffix(word, vocab, edges)
    if h[0] == -math.inf:
        bad = next((c for c in word if c not in vocab), None)
        detail = f" (no piece for character {bad!r})" if bad is not None else ""
        raise SegmentationError(f"word {word!r} is not segmentable{detail}", word)

    # A* over segmentation prefixes; the suffix bound is exact so complete
    # parses pop in score order up to float rounding, which the tolerance
    # window below absorbs before the exact re-sort.
    n = len(word)
    tol = 1e-9 * (1.0 + abs(h[0]))
    heap: list[tuple[float, int, tuple[int, ...], float]] = [(-h[0], 0, (), 0.0)]
    done: list[Segmentation] = []
    while heap:
        neg_prio, pos, ids, partial = heapq.heappop(heap)
        if len(done) >= l and -neg_prio < done[l - 1].logprob - tol:
            break
        if pos == n:
            logprob = math.fsum(vocab.logprob(i) for i in ids)
            done.append(Segmentation(ids, logprob))
            done.sort(key=_sort_key)
            continue
        for pid, j in edges[pos]:
            if h[j] == -math.inf:
                continue
            p = partial + vocab.logprob(pid)
            heapq.heappush(heap, (-(p + h[j]), j, ids + (pid,), p))
    done.sort(key=_sort_key)
    return tuple(done[:l])


def nbest_parses(word: str, vocab: Vocabulary, l: int) -> list[Segmentation]:
    """Top-``l`` segmentations of ``word``, best first.

    Ordering is by log-probability, then fewer pieces, then the
    lexicographically smallest id sequence. The search is exact.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    return list(_nbest(vocab, word, l))


def best_parse(word: str, vocab: Vocabulary) -> Segmentation:
    return _nbest(vocab, word, 1)[0]


@functools.lru_cache(maxsize=4096)
def _sampling_table(vocab: Vocabulary, word: str, l: int, alpha: float):
    cands = _nbest(vocab, word, l)
    scaled = [alpha * c.logprob for c in cands]
    top = max(scaled)
    weights = [math.exp(s - top) for s in scaled]
    return cands, weights


def sampling_distribution(word: str, vocab: Vocabulary, l: int, alpha: float) -> list[tuple[Segmentation, float]]:
    """The n-best candidates paired with their P^alpha / sum P^alpha mass."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    cands, weights = _sampling_table(vocab, word, l, float(alpha))
    total = math.fsum(weights)
    return [(c, w / total) for c, w in zip(cands, weights)]


def sample_parse(word: str, vocab: Vocabulary, l: int, alpha: float, rng: random.Random) -> Segmentation:
    """Draw one of the ``l`` best parses with probability proportional to P^alpha."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    cands, weights = _sampling_table(vocab, word, l, float(alpha))
    if len(cands) == 1:
        return cands[0]
    return rng.choices(cands, weights=weights, k=1)[0]


def segment_word(word: str, vocab: Vocabulary) -> Segmentation:
    """Best parse of a whitespace-free word with the word-initial marker."""
    return best_parse(vocab.marker + word, vocab)


def tokenize_sentence(
    text: str,
    vocab: Vocabulary,
    mode: str = "best",
    l: int = 5,
    alpha: float = 0.25,
    rng: random.Random | None = None,
) -> list[int]:
    """Piece ids for whitespace-separated ``text``.

    ``mode`` is ``"best"`` or ``"sample"``; sampling needs ``rng``.
    """
    if mode not in ("best", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampled tokenization needs an rng")
    out: list[int] = []
    for k, word in enumerate(text.split()):
        try:
            if mode == "best":
                seg = best_parse(vocab.marker + word, vocab)
            else:
                seg = sample_parse(vocab.marker + word, vocab, l, alpha, rng)
        except SegmentationError as e:
            raise SegmentationError(f"word {k} ({word!r}): {e}", word, k) from None
        out.extend(seg.ids)
    return out


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    text = "".join(vocab.piece(i) for i in ids)
    return " ".join(text.replace(vocab.marker, " ").split())


def format_vocab(vocab: Vocabulary) -> str:
    buf = io.StringIO()
    for piece, logprob in vocab.items():
        buf.write(f"{piece}\t{logprob!r}\n")
    return buf.getvalue()
