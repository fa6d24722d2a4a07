"""Grapheme-to-grapheme variant maps: loading, decode-time expansion and
training-time random replacement."""

from __future__ import annotations

import os
import random
import warnings
from typing import Collection, Sequence


class G2GError(ValueError):
    pass


class G2GMap(dict):
    """word -> ranked tuple of variant spellings, 1st-best first."""

    def first_best(self, word: str) -> str | None:
        variants = self.get(word)
        return variants[0] if variants else None

    def eligible(self, word: str) -> bool:
        """Replaceable at training time: mapped and 1st-best differs from the word."""
        variants = self.get(word)
        return bool(variants) and variants[0] != word


def parse_g2g(text: str, source: str = "<string>") -> G2GMap:
    g2g = G2GMap()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0].strip():
            raise G2GError(f"{source}:{lineno}: expected 'word<TAB>variant1,variant2,...'")
        word = fields[0].strip()
        variants = tuple(v.strip() for v in fields[1].split(",") if v.strip())
        if not variants:
            raise G2GError(f"{source}:{lineno}: empty variant list for {word!r}")
        if word in g2g:
            warnings.warn(f"{source}:{lineno}: duplicate entry for {word!r}; keeping the last one", stacklevel=2)
        g2g[word] = variants
    return g2g


def load_g2g(source: str | os.PathLike) -> G2GMap:
    with open(source, encoding="utf-8") as f:
        return parse_g2g(f.read(), str(source))


def decode_variants(word: str, g2g: G2GMap, k: int = 2) -> list[str]:
    """The word itself followed by its top-``k`` variants, without duplicates."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    out = [word]
    for v in g2g.get(word, ())[:k]:
        if v not in out:
            out.append(v)
    return out


def train_replace(
    tokens: Sequence[str],
    g2g: G2GMap,
    p: float,
    rng: random.Random,
    only: Collection[str] | None = None,
) -> list[str]:
    """Swap each eligible token for a random non-identity variant with probability ``p``.

    Tokens absent from the map, or whose 1st-best variant equals the token,
    are never touched and consume no randomness. ``only`` restricts
    replacement to the given words (e.g. tagged entities).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    out = []
    for tok in tokens:
        if (only is not None and tok not in only) or not g2g.eligible(tok):
            out.append(tok)
            continue
        if rng.random() < p:
            choices = [v for v in g2g[tok] if v != tok]
            out.append(rng.choice(choices))
        else:
            out.append(tok)
    return out
