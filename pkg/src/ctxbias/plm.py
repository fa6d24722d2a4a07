"""Trie-based personalized LM predictor.

Contacts are stored as WordPiece sequences in a prefix tree. A query with
a prefix returns a binary vector over the vocabulary marking the pieces that
extend the prefix to a prefix of some contact; three such vectors (empty
prefix, last piece, and the OR over all longer history suffixes) are
concatenated and projected to the joiner dimension.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .biasing import BiasingError, Contact, spelling_pieces
from .tokenizer import SegmentationError, Vocabulary

ROOT = 0


class ContactTrie:
    """Immutable prefix tree over piece-id sequences in ``[0, V)``."""

    def __init__(self, sequences: Iterable[Sequence[int]], vocab_size: int):
        if vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        self.vocab_size = vocab_size
        self._children: list[dict[int, int]] = [{}]
        self._terminal: list[bool] = [False]
        self._depth: list[int] = [0]
        n = 0
        for seq in sequences:
            n += 1
            node = ROOT
            for p in seq:
                p = int(p)
                if not 0 <= p < vocab_size:
                    raise ValueError(f"piece id {p} outside [0, {vocab_size})")
                nxt = self._children[node].get(p)
                if nxt is None:
                    nxt = len(self._children)
                    self._children.append({})
                    self._terminal.append(False)
                    self._depth.append(self._depth[node] + 1)
                    self._children[node][p] = nxt
                node = nxt
            self._terminal[node] = True
        if n == 0:
            raise ValueError("a contact trie needs at least one sequence")
        self._vec_cache: dict[int, np.ndarray] = {}

    @property
    def num_nodes(self) -> int:
        return len(self._children)

    def children(self, node: int) -> dict[int, int]:
        return self._children[node]

    def is_terminal(self, node: int) -> bool:
        return self._terminal[node]

    def depth(self, node: int) -> int:
        return self._depth[node]

    def walk(self, prefix: Sequence[int]) -> int | None:
        node = ROOT
        for p in prefix:
            node = self._children[node].get(p)
            if node is None:
                return None
        return node

    def next_vector(self, node: int | None) -> np.ndarray:
        """Binary vector of the child labels of ``node`` (zeros for ``None``)."""
        if node is None:
            return np.zeros(self.vocab_size, dtype=np.uint8)
        vec = self._vec_cache.get(node)
        if vec is None:
            vec = np.zeros(self.vocab_size, dtype=np.uint8)
            vec[list(self._children[node])] = 1
            vec.setflags(write=False)
            self._vec_cache[node] = vec
        return vec.copy()

    def sequences(self) -> list[tuple[int, ...]]:
        out = []
        stack = [(ROOT, ())]
        while stack:
            node, path = stack.pop()
            if self._terminal[node]:
                out.append(path)
            for p, child in self._children[node].items():
                stack.append((child, path + (p,)))
        return sorted(out)


def build_trie(contacts: Sequence[Contact], vocab: Vocabulary) -> ContactTrie:
    if not contacts:
        raise BiasingError("empty contact list")
    seqs = []
    for c in contacts:
        for sp in c.spellings:
            try:
                seqs.append(spelling_pieces(sp, vocab))
            except SegmentationError as e:
                raise BiasingError(f"contact {c.display!r}: {e}") from None
    return ContactTrie(seqs, len(vocab))


def trie_query(trie: ContactTrie, prefix: Sequence[int]) -> np.ndarray:
    return trie.next_vector(trie.walk(prefix))


def trie_query_ge2(trie: ContactTrie, history: Sequence[int]) -> np.ndarray:
    """OR of the queries on every history suffix of length two or more."""
    out = np.zeros(trie.vocab_size, dtype=np.uint8)
    for k in range(2, len(history) + 1):
        out |= trie_query(trie, history[len(history) - k:])
    return out


# incremental suffix state ----------------------------------------------------

def suffix_state_start() -> frozenset[int]:
    return frozenset()


def suffix_state_advance(trie: ContactTrie, state: frozenset[int], piece: int) -> frozenset[int]:
    """Trie nodes matched by each non-empty history suffix after ``piece``.

    A node's depth equals the length of the suffix it matches.
    """
    nxt = set()
    for node in state | {ROOT}:
        child = trie.children(node).get(piece)
        if child is not None:
            nxt.add(child)
    return frozenset(nxt)


def suffix_state_vectors(trie: ContactTrie, state: frozenset[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Trie(), Trie(last piece), Trie>=2(history))`` from a suffix state."""
    v0 = trie.next_vector(ROOT)
    v1 = np.zeros(trie.vocab_size, dtype=np.uint8)
    v2 = np.zeros(trie.vocab_size, dtype=np.uint8)
    for node in state:
        if trie.depth(node) == 1:
            v1 |= trie.next_vector(node)
        else:
            v2 |= trie.next_vector(node)
    return v0, v1, v2


def suffix_state_for(trie: ContactTrie, history: Sequence[int]) -> frozenset[int]:
    state = suffix_state_start()
    for p in history:
        state = suffix_state_advance(trie, state, p)
    return state


# projection -------------------------------------------------------------------

class PlmProjection:
    """Projection ``W`` of shape ``(d, 3V)`` applied to the stacked trie vectors."""

    def __init__(self, weight: np.ndarray):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.ndim != 2 or weight.shape[1] % 3 or weight.shape[1] == 0:
            raise ValueError(f"projection must have shape (d, 3V), got {weight.shape}")
        if not np.all(np.isfinite(weight)):
            raise ValueError("projection has non-finite entries")
        self.weight = weight
        self.weight.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[1] // 3

    @classmethod
    def zeros(cls, dim: int, vocab_size: int) -> "PlmProjection":
        return cls(np.zeros((dim, 3 * vocab_size)))

    def __call__(self, stacked: np.ndarray) -> np.ndarray:
        return self.weight @ stacked


def load_projection(path: str | os.PathLike) -> PlmProjection:
    """First line ``d V``, then ``d`` rows of ``3V`` reals."""
    with open(path, encoding="utf-8") as f:
        lines = [ln.split() for ln in f if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ValueError(f"{path}: header must be 'd V'")
    try:
        d, v = int(lines[0][0]), int(lines[0][1])
        rows = [[float(x) for x in ln] for ln in lines[1:]]
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None
    if len(rows) != d or any(len(r) != 3 * v for r in rows):
        raise ValueError(f"{path}: expected {d} rows of {3 * v} values")
    return PlmProjection(np.array(rows, dtype=np.float64).reshape(d, 3 * v))


def _stack(trie: ContactTrie, proj: PlmProjection, vectors) -> np.ndarray:
    if proj.vocab_size != trie.vocab_size:
        raise ValueError(f"projection expects V={proj.vocab_size}, trie has V={trie.vocab_size}")
    return proj(np.concatenate(vectors).astype(np.float64))


def plm_embed(trie: ContactTrie, history: Sequence[int], proj: PlmProjection) -> np.ndarray:
    """``W [Trie(); Trie(y_{u-1}); Trie>=2(y_1..y_{u-1})]``."""
    last = trie_query(trie, history[-1:]) if history else np.zeros(trie.vocab_size, dtype=np.uint8)
    return _stack(trie, proj, (trie_query(trie, ()), last, trie_query_ge2(trie, history)))


def plm_embed_state(trie: ContactTrie, state: frozenset[int], proj: PlmProjection) -> np.ndarray:
    """Same as :func:`plm_embed`, from an incremental suffix state."""
    return _stack(trie, proj, suffix_state_vectors(trie, state))
