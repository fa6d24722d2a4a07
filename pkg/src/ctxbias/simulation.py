"""Contact-list simulation for training utterances that carry a tagged
target entity but no real contact list."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Sequence

from .biasing import Contact
from .g2g import G2GMap, decode_variants

MIN_NAMES = 200
MAX_NAMES = 400
REMOVE_TARGET_P = 0.5
SWAP_TARGET_P = 0.3
G2G_VARIANTS = 2


@dataclass(frozen=True)
class SimulatedUtterance:
    contacts: list[Contact]
    reference: str
    target: str | None
    target_removed: bool
    target_swapped: bool
    swapped_with: str | None = None

    @property
    def size(self) -> int:
        return len(self.contacts)


def entity_pool(tagged_corpus: Sequence[tuple[str, str | None]]) -> list[str]:
    """Distinct tagged entities in first-seen order."""
    seen: dict[str, None] = {}
    for _, entity in tagged_corpus:
        if entity:
            seen.setdefault(entity, None)
    return list(seen)


def _to_contact(name: str, g2g: G2GMap | None, k: int) -> Contact:
    spellings = decode_variants(name, g2g, k) if g2g is not None else [name]
    return Contact(name.replace(" ", "_"), tuple(tuple(s.split()) for s in spellings))


def simulate_utterance(
    text: str,
    target: str | None,
    pool: Sequence[str],
    rng: random.Random,
    g2g: G2GMap | None = None,
    min_names: int = MIN_NAMES,
    max_names: int = MAX_NAMES,
    remove_p: float = REMOVE_TARGET_P,
    swap_p: float = SWAP_TARGET_P,
    k: int = G2G_VARIANTS,
) -> SimulatedUtterance:
    """One simulated contact list of ``min_names..max_names`` names.

    The target is part of the list unless dropped (``remove_p``); the
    reference has the target swapped for another listed name with
    probability ``swap_p``. Every name is expanded with ``k`` G2G variants.
    """
    if len(pool) < max_names:
        raise ValueError(f"entity pool has {len(pool)} names, need at least {max_names}")
    size = rng.randint(min_names, max_names)
    removed = swapped = False
    if target is not None:
        removed = rng.random() < remove_p
        swapped = rng.random() < swap_p
    n_others = size if (target is None or removed) else size - 1
    draw = rng.sample(list(pool), min(len(pool), n_others + 1))
    others = [n for n in draw if n != target][:n_others]
    names = others if (target is None or removed) else [target] + others
    rng.shuffle(names)

    reference = text
    swapped_with = None
    if swapped:
        swapped_with = rng.choice(others)
        reference = re.sub(rf"(?<!\S){re.escape(target)}(?!\S)", swapped_with.replace("\\", r"\\"), text)
    contacts = [_to_contact(n, g2g, k) for n in names]
    return SimulatedUtterance(contacts, reference, target, removed, swapped, swapped_with)


def simulate_contact_list(
    tagged_corpus: Sequence[tuple[str, str | None]],
    rng: random.Random,
    g2g: G2GMap | None = None,
    pool: Sequence[str] | None = None,
) -> list[SimulatedUtterance]:
    """Simulate a contact list (and possibly-modified reference) per utterance."""
    if pool is None:
        pool = entity_pool(tagged_corpus)
    if len(pool) < MAX_NAMES:
        raise ValueError(f"entity pool has {len(pool)} names, need at least {MAX_NAMES}")
    return [simulate_utterance(text, target, pool, rng, g2g) for text, target in tagged_corpus]
