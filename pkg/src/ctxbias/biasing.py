"""Class-based biasing graph: pattern n-gram LM, WordPiece arc expansion,
the ``@name`` contact FST with an OOV failure loop, class replacement and
the stepwise LM interface used for shallow fusion."""

from __future__ import annotations

import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .fstlib import EPS, INF, PHI, FstError, SymbolTable, Wfst, determinize, minimize, rmepsilon
from .tokenizer import SegmentationError, Vocabulary, segment_word

NAME_TAG = "@name"
BOS = "<s>"
EOS = "</s>"
DEFAULT_OOV_WEIGHT = 6.0


class BiasingError(ValueError):
    pass


# contacts -----------------------------------------------------------------

@dataclass(frozen=True)
class Contact:
    """One contact: display form plus every spelling (word tuples) that may
    be recognised for it. ``weight`` is an optional extra cost in -log units."""

    display: str
    spellings: tuple[tuple[str, ...], ...]
    weight: float = 0.0

    def __post_init__(self):
        if not self.display or any(c.isspace() for c in self.display):
            raise BiasingError(f"display form must be a non-empty token, got {self.display!r}")
        if not self.spellings or any(not sp for sp in self.spellings):
            raise BiasingError(f"contact {self.display!r} needs at least one non-empty spelling")


ContactList = list  # list[Contact]


def contact(display: str, *spellings: str, weight: float = 0.0) -> Contact:
    """Shorthand: ``contact("Kaity", "Kaity", "Katie")``; no spellings means the display form."""
    sp = spellings or (display,)
    return Contact(display, tuple(tuple(s.split()) for s in sp), weight)


def load_contacts(path: str | os.PathLike) -> list[Contact]:
    """Lines ``display<TAB>spelling1|spelling2``; a bare display form is its own spelling."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) > 2:
                raise BiasingError(f"{path}:{lineno}: too many fields")
            display = fields[0].strip()
            spellings = [s.strip() for s in fields[1].split("|")] if len(fields) == 2 else [display]
            if any(not s for s in spellings):
                raise BiasingError(f"{path}:{lineno}: empty spelling")
            out.append(contact(display, *spellings))
    if not out:
        raise BiasingError(f"{path}: empty contact list")
    return out


def expand_contacts(contacts: Sequence[Contact], g2g, k: int = 2) -> list[Contact]:
    """Add up to ``k`` G2G variants per spelling.

    Variant ``j`` of a multi-word spelling replaces every word by its
    ``j``-th variant (or keeps it when the word has fewer variants).
    """
    from .g2g import decode_variants

    out = []
    for c in contacts:
        spellings: list[tuple[str, ...]] = []
        for sp in c.spellings:
            per_word = [decode_variants(w, g2g, k) for w in sp]
            for j in range(k + 1):
                cand = tuple(v[j] if j < len(v) else v[0] for v in per_word)
                if cand not in spellings:
                    spellings.append(cand)
        out.append(Contact(c.display, tuple(spellings), c.weight))
    return out


def spelling_pieces(spelling: Sequence[str], vocab: Vocabulary) -> tuple[int, ...]:
    """Best-parse piece ids of a word sequence (each word gets the marker)."""
    ids: list[int] = []
    for word in spelling:
        ids.extend(segment_word(word, vocab).ids)
    return tuple(ids)


# symbol tables --------------------------------------------------------------

def piece_symbols(vocab: Vocabulary, class_tags: Iterable[str] = ()) -> SymbolTable:
    """Piece table where piece id ``i`` becomes symbol ``i + 2``; class tags follow."""
    table = SymbolTable()
    for p in vocab.pieces:
        table.add_symbol(p)
    for tag in class_tags:
        if tag in table:
            raise BiasingError(f"class tag {tag!r} collides with a vocabulary piece")
        table.add_symbol(tag)
    return table


def is_class_tag(token: str) -> bool:
    return token.startswith("@") and len(token) > 1


# pattern LM ---------------------------------------------------------------

@dataclass
class PatternCorpus:
    patterns: list[tuple[tuple[str, ...], float]] = field(default_factory=list)

    def add(self, words: Sequence[str] | str, weight: float = 1.0) -> None:
        if isinstance(words, str):
            words = words.split()
        words = tuple(words)
        if not words:
            raise BiasingError("empty pattern")
        if not weight > 0 or not math.isfinite(weight):
            raise BiasingError(f"pattern weight must be positive, got {weight}")
        for w in words:
            if NAME_TAG in w and w != NAME_TAG:
                raise BiasingError(f"{NAME_TAG} must be a standalone token, got {w!r}")
            if w in (BOS, EOS):
                raise BiasingError(f"reserved token {w!r} in pattern")
        self.patterns.append((words, float(weight)))

    def __len__(self) -> int:
        return len(self.patterns)


def load_patterns(path: str | os.PathLike) -> PatternCorpus:
    corpus = PatternCorpus()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise BiasingError(f"{path}:{lineno}: expected 'weight<TAB>pattern'")
            try:
                weight = float(fields[0])
            except ValueError:
                raise BiasingError(f"{path}:{lineno}: bad weight {fields[0]!r}") from None
            try:
                corpus.add(fields[1], weight)
            except BiasingError as e:
                raise BiasingError(f"{path}:{lineno}: {e}") from None
    return corpus


class NgramModel:
    """Interpolated Witten-Bell n-gram model over weighted pattern counts.

    The lowest order interpolates with a uniform distribution over the
    word vocabulary (all seen words plus ``</s>``).
    """

    def __init__(self, corpus: PatternCorpus, order: int = 4):
        if order < 1:
            raise BiasingError(f"order must be >= 1, got {order}")
        if not len(corpus):
            raise BiasingError("empty pattern corpus")
        self.order = order
        self.counts: dict[tuple[str, ...], dict[str, float]] = defaultdict(lambda: defaultdict(float))
        for words, weight in corpus.patterns:
            sent = (BOS,) + words + (EOS,)
            for i in range(1, len(sent)):
                for k in range(1, order + 1):
                    lo = i - k + 1
                    if lo < 0:
                        break
                    self.counts[sent[lo:i]][sent[i]] += weight
        self.counts = {h: dict(c) for h, c in self.counts.items()}
        self.words = sorted(self.counts[()])
        self._total = {h: sum(c.values()) for h, c in self.counts.items()}
        self._types = {h: len(c) for h, c in self.counts.items()}

    @property
    def histories(self) -> list[tuple[str, ...]]:
        return sorted(self.counts, key=lambda h: (len(h), h))

    def backoff(self, history: tuple[str, ...]) -> float:
        """Mass reserved for unseen continuations, T(h) / (c(h) + T(h))."""
        t = self._types[history]
        return t / (self._total[history] + t)

    def prob(self, word: str, history: Sequence[str] = ()) -> float:
        history = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        while history not in self.counts:
            history = history[1:]
        if history == ():
            lower = 1.0 / len(self.words)
        else:
            lower = self.prob(word, history[1:])
        c = self.counts[history].get(word, 0.0)
        t = self._types[history]
        return (c + t * lower) / (self._total[history] + t)


def build_pattern_lm(corpus: PatternCorpus, order: int = 4) -> Wfst:
    """Word-level backoff acceptor with ``@name`` as an ordinary token.

    States are n-gram histories; ``</s>`` becomes a final weight and each
    non-empty history backs off to its suffix through an epsilon arc.
    """
    model = NgramModel(corpus, order)
    syms = SymbolTable()
    for w in model.words:
        if w != EOS:
            syms.add_symbol(w)
    fst = Wfst(syms, syms)
    states = {h: fst.add_state() for h in model.histories}
    fst.set_start(states[(BOS,)] if order > 1 else states[()])
    for h, s in states.items():
        for w in sorted(model.counts[h]):
            cost = -math.log(model.prob(w, h))
            if w == EOS:
                fst.set_final(s, cost)
                continue
            dest = (h + (w,))[-(order - 1):] if order > 1 else ()
            while dest not in states:
                dest = dest[1:]
            fst.add_arc(s, syms.find(w), syms.find(w), cost, states[dest])
        if h:
            fst.add_arc(s, EPS, EPS, -math.log(model.backoff(h)), states[h[1:]])
    return fst


def expand_word_arcs(word_fst: Wfst, vocab: Vocabulary) -> Wfst:
    """Replace each word arc by a chain of WordPiece arcs.

    Every piece arc repeats the word arc's weight; the word is emitted on
    the last piece. Epsilon arcs and class-tag arcs are copied unchanged
    (class tags move into the piece table after the vocabulary pieces).
    """
    wsyms = word_fst.isymbols
    if wsyms is None:
        raise BiasingError("word FST needs an input symbol table")
    tags = [sym for idx, sym in wsyms if idx > PHI and is_class_tag(sym)]
    psyms = piece_symbols(vocab, tags)
    out = Wfst(psyms, word_fst.osymbols)
    out.add_states(word_fst.num_states)
    out.set_start(word_fst.start)
    cache: dict[int, tuple[int, ...]] = {}
    for s in word_fst.states():
        for a in word_fst.arcs(s):
            if a.ilabel in (EPS, PHI):
                out.add_arc(s, a.ilabel, a.olabel, a.weight, a.nextstate)
                continue
            word = wsyms.symbol(a.ilabel)
            if is_class_tag(word):
                out.add_arc(s, psyms.find(word), a.olabel, a.weight, a.nextstate)
                continue
            if a.ilabel not in cache:
                try:
                    cache[a.ilabel] = segment_word(word, vocab).ids
                except SegmentationError as e:
                    raise BiasingError(f"cannot decompose word {word!r}: {e}") from None
            pieces = cache[a.ilabel]
            src = s
            for i, pid in enumerate(pieces):
                last = i == len(pieces) - 1
                dst = a.nextstate if last else out.add_state()
                out.add_arc(src, pid + 2, a.olabel if last else EPS, a.weight, dst)
                src = dst
        if word_fst.is_final(s):
            out.set_final(s, word_fst.final(s))
    return out


def build_name_fst(
    contacts: Sequence[Contact],
    vocab: Vocabulary,
    oov_weight: float = DEFAULT_OOV_WEIGHT,
) -> Wfst:
    """The ``@name`` FST: one piece chain per spelling plus an OOV loop.

    The loop reads any piece through a phi arc at ``oov_weight`` per piece
    and is final, so an unknown name can be traversed at a fixed penalty.
    The result is epsilon-removed, determinized and minimized.
    """
    if not contacts:
        raise BiasingError("empty contact list")
    if not math.isfinite(oov_weight):
        raise BiasingError("oov weight must be finite")
    isyms = piece_symbols(vocab)
    osyms = SymbolTable()
    fst = Wfst(isyms, osyms)
    start = fst.add_state()
    fst.set_start(start)
    for c in contacts:
        olabel = osyms.add_symbol(c.display)
        seen = set()
        for sp in c.spellings:
            try:
                pieces = spelling_pieces(sp, vocab)
            except SegmentationError as e:
                raise BiasingError(f"contact {c.display!r}: cannot decompose {' '.join(sp)!r}: {e}") from None
            if pieces in seen:
                continue
            seen.add(pieces)
            src = start
            for i, pid in enumerate(pieces):
                last = i == len(pieces) - 1
                dst = fst.add_state()
                fst.add_arc(src, pid + 2, olabel if last else EPS, c.weight if i == 0 else 0.0, dst)
                src = dst
            fst.set_final(src, 0.0)
    oov = fst.add_state()
    fst.add_arc(start, PHI, EPS, oov_weight, oov)
    fst.add_arc(oov, PHI, EPS, oov_weight, oov)
    fst.set_final(oov, 0.0)
    return minimize(determinize(rmepsilon(fst)))


def replace_class_tag(lm: Wfst, name_fst: Wfst, tag: str = NAME_TAG) -> Wfst:
    """Inline a copy of ``name_fst`` for every ``tag`` arc of ``lm``.

    A tag arc ``s -> t`` with weight w becomes an epsilon arc of weight w
    into the copy's start, and every final state of the copy gets an
    epsilon arc (carrying its final weight) to ``t``.
    """
    if lm.isymbols is None or name_fst.isymbols is None:
        raise BiasingError("both machines need input symbol tables")
    tag_id = lm.isymbols.get(tag)
    tag_arcs = [] if tag_id is None else [
        (s, a) for s in lm.states() for a in lm.arcs(s) if a.ilabel == tag_id
    ]
    if not tag_arcs:
        warnings.warn(f"LM has no {tag} arc; class replacement is a no-op", stacklevel=2)
        return lm.copy()
    for idx, sym in name_fst.isymbols:
        if idx > PHI and lm.isymbols.get(sym) != idx:
            raise BiasingError(f"piece symbol {sym!r} has different ids in LM and name FST")

    osyms = (lm.osymbols or SymbolTable()).copy()
    omap = {EPS: EPS, PHI: PHI}
    if name_fst.osymbols is not None:
        for idx, sym in name_fst.osymbols:
            if idx > PHI:
                omap[idx] = osyms.add_symbol(sym)
    out = Wfst(lm.isymbols, osyms)
    out.add_states(lm.num_states)
    out.set_start(lm.start)
    for s in lm.states():
        for a in lm.arcs(s):
            if a.ilabel != tag_id:
                out.add_arc(s, a.ilabel, a.olabel, a.weight, a.nextstate)
        if lm.is_final(s):
            out.set_final(s, lm.final(s))
    for s, a in tag_arcs:
        offset = out.num_states
        out.add_states(name_fst.num_states)
        for q in name_fst.states():
            for b in name_fst.arcs(q):
                out.add_arc(offset + q, b.ilabel, omap.get(b.olabel, b.olabel), b.weight, offset + b.nextstate)
            if name_fst.is_final(q):
                out.add_arc(offset + q, EPS, EPS, name_fst.final(q), a.nextstate)
        out.add_arc(s, EPS, EPS, a.weight, offset + name_fst.start)
    return out


def build_biasing_graph(
    corpus: PatternCorpus,
    contacts: Sequence[Contact],
    vocab: Vocabulary,
    order: int = 4,
    oov_weight: float = DEFAULT_OOV_WEIGHT,
) -> Wfst:
    lm = expand_word_arcs(build_pattern_lm(corpus, order), vocab)
    return replace_class_tag(lm, build_name_fst(contacts, vocab, oov_weight))


# stepwise LM ----------------------------------------------------------------

@dataclass(frozen=True)
class LmState:
    """Set of live graph states after the pieces consumed so far.

    Each entry is ``(state, cost, olabels)`` for the cheapest path reaching
    that state. ``weight`` is the cheapest cost overall; an empty frontier
    is a dead end with infinite weight.
    """

    frontier: tuple[tuple[int, float, tuple[int, ...]], ...]
    weight: float = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "weight", min((c for _, c, _ in self.frontier), default=INF))

    @property
    def dead(self) -> bool:
        return not self.frontier


def _closure(graph: Wfst, items: dict[int, tuple[float, tuple[int, ...]]]):
    index = graph.arc_index()
    queue = list(items)
    updates: dict[int, int] = defaultdict(int)
    while queue:
        q = queue.pop()
        cost, olabels = items[q]
        for a in index[q][1]:
            nc = cost + a.weight
            cur = items.get(a.nextstate)
            if cur is None or nc < cur[0]:
                updates[a.nextstate] += 1
                if updates[a.nextstate] > graph.num_states + 1:
                    raise FstError("negative-weight epsilon cycle in biasing graph")
                items[a.nextstate] = (nc, olabels + (a.olabel,) if a.olabel != EPS else olabels)
                queue.append(a.nextstate)
    return items


def _pack(items) -> LmState:
    return LmState(tuple(sorted((s, c, o) for s, (c, o) in items.items())))


def lm_start(graph: Wfst) -> LmState:
    if graph.num_states == 0 or graph.start < 0:
        raise BiasingError("empty biasing graph")
    return _pack(_closure(graph, {graph.start: (0.0, ())}))


def lm_advance(graph: Wfst, state: LmState, piece: int) -> LmState:
    """Consume one piece symbol (graph label space, ids >= 2).

    At each live state an explicit arc for ``piece`` is followed when one
    exists; otherwise the state's phi arc reads it. Epsilon arcs (backoff,
    class entry and exit) are followed freely before and after.
    """
    if piece in (EPS, PHI) or piece < 0:
        raise BiasingError(f"reserved or invalid symbol {piece}")
    index = graph.arc_index()
    nxt: dict[int, tuple[float, tuple[int, ...]]] = {}
    for s, cost, olabels in state.frontier:
        by_label, _, phi_arcs = index[s]
        arcs = by_label.get(piece)
        if arcs is None:
            arcs = phi_arcs
        for a in arcs:
            nc = cost + a.weight
            cur = nxt.get(a.nextstate)
            if cur is None or nc < cur[0]:
                nxt[a.nextstate] = (nc, olabels + (a.olabel,) if a.olabel not in (EPS, PHI) else olabels)
    return _pack(_closure(graph, nxt))


def lm_final_weight(graph: Wfst, state: LmState) -> float:
    """Cheapest cost of ending here, including final weights."""
    return min((c + graph.final(s) for s, c, _ in state.frontier), default=INF)


def lm_words(graph: Wfst, state: LmState, final: bool = True) -> list[str]:
    """Word olabels on the best path; prefers paths that can end when ``final``."""
    if not state.frontier:
        return []
    key = (lambda e: (e[1] + graph.final(e[0]), e[1])) if final else (lambda e: e[1])
    best = min(state.frontier, key=key)
    syms = graph.osymbols
    return [syms.symbol(o) if syms is not None else str(o) for o in best[2]]
