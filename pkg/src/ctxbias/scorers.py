"""Table-driven stand-ins for the transducer's encoder/predictor/joiner.

A scorer maps ``(frame t, emitted history)`` to a log-probability vector of
length ``V + 1``: the ``V`` pieces followed by BLANK at index ``V``.
"""

from __future__ import annotations

import json
import math
import os
from typing import Mapping, Protocol, Sequence

import numpy as np

NORM_TOL = 1e-6


class ScorerDomainError(KeyError):
    """The scorer has no entry for a requested (frame, history)."""


class Scorer(Protocol):
    num_frames: int
    vocab_size: int

    def log_probs(self, t: int, history: Sequence[int], h_plm: np.ndarray | None = None) -> np.ndarray:
        ...


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    return shifted - math.log(float(np.exp(shifted).sum()))


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if m == -math.inf:
        return m
    return m + math.log(float(np.sum(np.exp(v - m))))


def check_normalized(v: np.ndarray, tol: float = NORM_TOL) -> None:
    total = _logsumexp(v)
    if not abs(total) <= tol:
        raise ValueError(f"log-probabilities sum to exp({total:.3g}), not 1")


def _longest_suffix(table: Mapping, history: tuple[int, ...], prefix=()):
    for k in range(len(history), -1, -1):
        key = prefix + (history[len(history) - k:],)
        if key in table:
            return table[key]
    return None


class TableScorer:
    """Explicit per-(frame, history suffix) log-probability tables.

    Lookups use the longest stored suffix of the history. ``h_plm`` is
    accepted for interface compatibility and ignored.
    """

    def __init__(self, num_frames: int, vocab_size: int, tables: Mapping[tuple[int, tuple[int, ...]], Sequence[float]]):
        if num_frames < 1 or vocab_size < 1:
            raise ValueError("need at least one frame and one piece")
        self.num_frames = num_frames
        self.vocab_size = vocab_size
        self._tables: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}
        for (t, hist), values in tables.items():
            if not 0 <= t < num_frames:
                raise ValueError(f"frame {t} outside [0, {num_frames})")
            vec = np.asarray(values, dtype=np.float64)
            if vec.shape != (vocab_size + 1,):
                raise ValueError(f"entry ({t}, {hist}) has {vec.size} values, expected {vocab_size + 1}")
            check_normalized(vec)
            vec.setflags(write=False)
            self._tables[(t, tuple(hist))] = vec

    def log_probs(self, t: int, history: Sequence[int], h_plm: np.ndarray | None = None) -> np.ndarray:
        vec = _longest_suffix(self._tables, tuple(history), (t,))
        if vec is None:
            raise ScorerDomainError(f"no table entry for frame {t}, history {tuple(history)}")
        return vec


def load_table_scorer(path: str | os.PathLike, vocab=None) -> TableScorer:
    """Header ``T V``; then ``t<TAB>history<TAB>logprobs`` lines.

    History is space-separated piece strings when ``vocab`` is given,
    otherwise piece ids; it may be empty. Log-probs are whitespace
    separated, BLANK last.
    """
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in f]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty scorer file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"{path}: header must be 'T V'")
    T, V = int(header[0]), int(header[1])
    if vocab is not None and len(vocab) != V:
        raise ValueError(f"{path}: V={V} does not match vocabulary size {len(vocab)}")
    tables = {}
    for lineno, line in enumerate(lines[1:], 2):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}:{lineno}: expected 't<TAB>history<TAB>logprobs'")
        try:
            t = int(fields[0])
            if vocab is not None:
                hist = tuple(vocab.id(p) for p in fields[1].split())
            else:
                hist = tuple(int(p) for p in fields[1].split())
            values = [float(x) for x in fields[2].split()]
        except (KeyError, ValueError) as e:
            raise ValueError(f"{path}:{lineno}: {e}") from None
        if (t, hist) in tables:
            raise ValueError(f"{path}:{lineno}: duplicate entry")
        tables[(t, hist)] = values
    try:
        return TableScorer(T, V, tables)
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None


class ToyJoiner:
    """Encoder/predictor lookup tables feeding a linear joiner.

    ``predictor`` maps history suffixes to vectors (longest suffix wins; the
    empty suffix must be present). Logits are
    ``W (h_enc[t] + h_pred(history) [+ h_plm]) + b``.
    """

    def __init__(
        self,
        encoder: np.ndarray,
        predictor: Mapping[tuple[int, ...], np.ndarray],
        weight: np.ndarray,
        bias: np.ndarray,
        max_entries: int = 100_000,
    ):
        self.encoder = np.asarray(encoder, dtype=np.float64)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.encoder.ndim != 2:
            raise ValueError("encoder table must be (T, d)")
        T, d = self.encoder.shape
        if self.weight.ndim != 2 or self.weight.shape[1] != d:
            raise ValueError(f"joiner weight must be (V+1, {d}), got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError("joiner bias length must match joiner rows")
        self.predictor = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in predictor.items()}
        if () not in self.predictor:
            raise ValueError("predictor table needs an entry for the empty history")
        for k, v in self.predictor.items():
            if v.shape != (d,):
                raise ValueError(f"predictor entry {k} must have dim {d}")
        if T * d + len(self.predictor) * d + self.weight.size > max_entries:
            raise ValueError("toy joiner tables exceed the configured size cap")
        self.num_frames = T
        self.dim = d
        self.vocab_size = self.weight.shape[0] - 1

    def pred(self, history: Sequence[int]) -> np.ndarray:
        history = tuple(history)
        for k in range(len(history), -1, -1):
            vec = self.predictor.get(history[len(history) - k:])
            if vec is not None:
                return vec
        raise AssertionError("unreachable: empty history is always present")

    def logits(self, t: int, history: Sequence[int], h_plm: np.ndarray | None = None) -> np.ndarray:
        if not 0 <= t < self.num_frames:
            raise ScorerDomainError(f"frame {t} outside [0, {self.num_frames})")
        h = self.encoder[t] + self.pred(history)
        if h_plm is not None:
            h_plm = np.asarray(h_plm, dtype=np.float64)
            if h_plm.shape != (self.dim,):
                raise ValueError(f"h_plm must have dim {self.dim}, got {h_plm.shape}")
            h = h + h_plm
        return self.weight @ h + self.bias


class ToyJoinerScorer:
    def __init__(self, joiner: ToyJoiner):
        self.joiner = joiner
        self.num_frames = joiner.num_frames
        self.vocab_size = joiner.vocab_size

    def log_probs(self, t: int, history: Sequence[int], h_plm: np.ndarray | None = None) -> np.ndarray:
        return log_softmax(self.joiner.logits(t, history, h_plm))


def toy_joiner_logits(j: ToyJoiner, t: int, history: Sequence[int], h_plm: np.ndarray | None = None) -> np.ndarray:
    return j.logits(t, history, h_plm)


def load_toy_joiner(path: str | os.PathLike) -> ToyJoiner:
    """JSON object with ``encoder`` (T x d), ``predictor`` (list of
    ``[history ids, vector]`` pairs), ``weight`` ((V+1) x d) and ``bias``."""
    with open(path, encoding="utf-8") as f:
        spec = json.load(f)
    try:
        predictor = {tuple(h): v for h, v in spec["predictor"]}
        return ToyJoiner(spec["encoder"], predictor, spec["weight"], spec["bias"])
    except (KeyError, TypeError) as e:
        raise ValueError(f"{path}: malformed toy joiner ({e})") from None


def random_toy_joiner(rng: np.random.Generator, num_frames: int, vocab_size: int, dim: int, scale: float = 1.5) -> ToyJoiner:
    """Random joiner whose predictor is keyed on the last emitted piece."""
    predictor = {(): rng.normal(size=dim)}
    for p in range(vocab_size):
        predictor[(p,)] = rng.normal(size=dim)
    return ToyJoiner(
        rng.normal(size=(num_frames, dim)),
        predictor,
        scale * rng.normal(size=(vocab_size + 1, dim)),
        rng.normal(size=vocab_size + 1),
    )
