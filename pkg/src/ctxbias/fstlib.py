"""Small weighted FST kernel over the tropical semiring (min, +).

Label 0 is epsilon and label 1 is the failure/"phi" label. Phi is an
opaque label to every algorithm here; matching semantics live in the
caller (see :mod:`ctxbias.biasing`), except in :func:`enumerate_language`
which can expand it for testing.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict, deque
from typing import Iterable, NamedTuple

EPS = 0
PHI = 1
NO_STATE = -1
INF = math.inf

EPS_SYMBOL = "<eps>"
PHI_SYMBOL = "<phi>"

# Weights are compared after rounding to this many decimals when used as keys.
_WEIGHT_DIGITS = 9


class FstError(ValueError):
    pass


class SymbolTable:
    """Bijective symbol <-> id map with ids 0/1 reserved for epsilon and phi."""

    def __init__(self, symbols: Iterable[str] = ()):
        self._syms: list[str] = [EPS_SYMBOL, PHI_SYMBOL]
        self._ids: dict[str, int] = {EPS_SYMBOL: EPS, PHI_SYMBOL: PHI}
        for s in symbols:
            self.add_symbol(s)

    def add_symbol(self, symbol: str) -> int:
        idx = self._ids.get(symbol)
        if idx is not None:
            return idx
        if not symbol or any(c.isspace() for c in symbol):
            raise FstError(f"invalid symbol {symbol!r}")
        self._ids[symbol] = len(self._syms)
        self._syms.append(symbol)
        return self._ids[symbol]

    def find(self, symbol: str) -> int:
        try:
            return self._ids[symbol]
        except KeyError:
            raise KeyError(f"symbol {symbol!r} not in table") from None

    def get(self, symbol: str) -> int | None:
        return self._ids.get(symbol)

    def symbol(self, idx: int) -> str:
        return self._syms[idx]

    def __contains__(self, symbol: object) -> bool:
        return symbol in self._ids

    def __len__(self) -> int:
        return len(self._syms)

    def __iter__(self):
        return iter(enumerate(self._syms))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SymbolTable) and self._syms == other._syms

    def copy(self) -> "SymbolTable":
        new = SymbolTable()
        new._syms = list(self._syms)
        new._ids = dict(self._ids)
        return new

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for idx, sym in enumerate(self._syms):
                f.write(f"{sym}\t{idx}\n")

    @classmethod
    def read(cls, path: str | os.PathLike) -> "SymbolTable":
        pairs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise FstError(f"{path}:{lineno}: expected 'symbol<TAB>id'")
                try:
                    pairs.append((fields[0], int(fields[1])))
                except ValueError:
                    raise FstError(f"{path}:{lineno}: bad id {fields[1]!r}") from None
        pairs.sort(key=lambda p: p[1])
        if [p[1] for p in pairs] != list(range(len(pairs))) or len(pairs) < 2:
            raise FstError(f"{path}: ids must be contiguous from 0")
        if pairs[0][0] != EPS_SYMBOL or pairs[1][0] != PHI_SYMBOL:
            raise FstError(f"{path}: ids 0 and 1 must be {EPS_SYMBOL} and {PHI_SYMBOL}")
        table = cls()
        for sym, idx in pairs[2:]:
            if table.add_symbol(sym) != idx:
                raise FstError(f"{path}: duplicate symbol {sym!r}")
        return table


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    nextstate: int


class Wfst:
    """Mutable-while-building weighted transducer.

    Algorithms in this module never modify their input; they return new
    machines. Once handed to a decoder a machine should be treated as frozen.
    """

    def __init__(self, isymbols: SymbolTable | None = None, osymbols: SymbolTable | None = None):
        self._arcs: list[list[Arc]] = []
        self._finals: dict[int, float] = {}
        self.start = NO_STATE
        self.isymbols = isymbols
        self.osymbols = osymbols
        self._index = None

    # construction -------------------------------------------------------
    def add_state(self) -> int:
        self._arcs.append([])
        self._index = None
        return len(self._arcs) - 1

    def add_states(self, n: int) -> None:
        for _ in range(n):
            self.add_state()

    def set_start(self, state: int) -> None:
        self._check_state(state)
        self.start = state
        self._index = None

    def set_final(self, state: int, weight: float = 0.0) -> None:
        self._check_state(state)
        weight = float(weight)
        if weight == INF:
            self._finals.pop(state, None)
        else:
            if not math.isfinite(weight):
                raise FstError(f"non-finite final weight {weight}")
            self._finals[state] = weight
        self._index = None

    def add_arc(self, state: int, ilabel: int, olabel: int, weight: float, nextstate: int) -> None:
        self._check_state(state)
        self._check_state(nextstate)
        weight = float(weight)
        if not math.isfinite(weight):
            raise FstError(f"non-finite arc weight {weight}")
        self._arcs[state].append(Arc(ilabel, olabel, weight, nextstate))
        self._index = None

    def _check_state(self, state: int) -> None:
        if not 0 <= state < len(self._arcs):
            raise FstError(f"state {state} out of range [0, {len(self._arcs)})")

    # access -------------------------------------------------------------
    @property
    def num_states(self) -> int:
        return len(self._arcs)

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, state: int) -> list[Arc]:
        return self._arcs[state]

    def final(self, state: int) -> float:
        return self._finals.get(state, INF)

    def is_final(self, state: int) -> bool:
        return state in self._finals

    @property
    def finals(self) -> dict[int, float]:
        return dict(self._finals)

    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def copy(self) -> "Wfst":
        new = Wfst(self.isymbols, self.osymbols)
        new._arcs = [list(a) for a in self._arcs]
        new._finals = dict(self._finals)
        new.start = self.start
        return new

    def arc_index(self):
        """Per-state lookup ``(by_ilabel, eps_arcs, phi_arcs)``, cached."""
        if self._index is None:
            index = []
            for arcs in self._arcs:
                by_label: dict[int, list[Arc]] = defaultdict(list)
                eps, phi = [], []
                for a in arcs:
                    if a.ilabel == EPS:
                        eps.append(a)
                    elif a.ilabel == PHI:
                        phi.append(a)
                    else:
                        by_label[a.ilabel].append(a)
                index.append((dict(by_label), eps, phi))
            self._index = index
        return self._index

    def validate(self) -> None:
        n = len(self._arcs)
        if n and not 0 <= self.start < n:
            raise FstError(f"invalid start state {self.start}")
        for s, arcs in enumerate(self._arcs):
            for a in arcs:
                if not 0 <= a.nextstate < n:
                    raise FstError(f"arc from {s} targets missing state {a.nextstate}")
                if not math.isfinite(a.weight):
                    raise FstError(f"arc from {s} has non-finite weight")

    def __repr__(self) -> str:
        return f"Wfst(states={self.num_states}, arcs={self.num_arcs()}, start={self.start})"


def is_deterministic(fst: Wfst, joint: bool = True) -> bool:
    """No state has two arcs with the same label.

    With ``joint`` the label is the (ilabel, olabel) pair; otherwise the
    ilabel alone. Phi arcs count like any other label.
    """
    for s in fst.states():
        seen = set()
        for a in fst.arcs(s):
            key = (a.ilabel, a.olabel) if joint else a.ilabel
            if key in seen:
                return False
            seen.add(key)
    return True


def has_epsilons(fst: Wfst) -> bool:
    return any(a.ilabel == EPS for s in fst.states() for a in fst.arcs(s))


def _relax_all(n: int, sources: dict[int, float], edges, what: str) -> list[float]:
    """Single-source-set shortest distances with negative-cycle detection.

    ``edges(q)`` yields ``(weight, target)`` pairs.
    """
    dist = [INF] * n
    updates = [0] * n
    queue = deque()
    queued = [False] * n
    for s, w in sources.items():
        if w < dist[s]:
            dist[s] = w
            if not queued[s]:
                queue.append(s)
                queued[s] = True
    while queue:
        q = queue.popleft()
        queued[q] = False
        dq = dist[q]
        for w, t in edges(q):
            nd = dq + w
            if nd < dist[t]:
                dist[t] = nd
                updates[t] += 1
                if updates[t] > n + 1:
                    raise FstError(f"negative-weight cycle found during {what}")
                if not queued[t]:
                    queue.append(t)
                    queued[t] = True
    return dist


def connect(fst: Wfst) -> Wfst:
    """Trim states that are unreachable from start or cannot reach a final."""
    n = fst.num_states
    out = Wfst(fst.isymbols, fst.osymbols)
    if n == 0 or fst.start == NO_STATE:
        return out
    acc = [False] * n
    acc[fst.start] = True
    stack = [fst.start]
    while stack:
        s = stack.pop()
        for a in fst.arcs(s):
            if not acc[a.nextstate]:
                acc[a.nextstate] = True
                stack.append(a.nextstate)
    rev = [[] for _ in range(n)]
    for s in fst.states():
        for a in fst.arcs(s):
            rev[a.nextstate].append(s)
    coacc = [False] * n
    stack = [s for s in fst._finals]
    for s in stack:
        coacc[s] = True
    while stack:
        s = stack.pop()
        for p in rev[s]:
            if not coacc[p]:
                coacc[p] = True
                stack.append(p)
    if not coacc[fst.start]:
        out.set_start(out.add_state())
        return out
    keep = [s for s in fst.states() if acc[s] and coacc[s]]
    remap = {s: i for i, s in enumerate(keep)}
    out.add_states(len(keep))
    out.set_start(remap[fst.start])
    for s in keep:
        for a in fst.arcs(s):
            if a.nextstate in remap:
                out.add_arc(remap[s], a.ilabel, a.olabel, a.weight, remap[a.nextstate])
        if fst.is_final(s):
            out.set_final(remap[s], fst.final(s))
    return out


def rmepsilon(fst: Wfst) -> Wfst:
    """Remove epsilon (``<eps>:<eps>``) arcs by folding closures forward.

    Arcs with an epsilon input and a real output cannot be folded into a
    single-symbol olabel and are rejected.
    """
    n = fst.num_states
    eps_out: list[list[tuple[float, int]]] = [[] for _ in range(n)]
    for s in fst.states():
        for a in fst.arcs(s):
            if a.ilabel == EPS:
                if a.olabel != EPS:
                    raise FstError(f"state {s}: epsilon-input arc with output label {a.olabel} unsupported")
                eps_out[s].append((a.weight, a.nextstate))
    if not any(eps_out):
        return connect(fst)

    out = Wfst(fst.isymbols, fst.osymbols)
    out.add_states(n)
    if fst.start != NO_STATE:
        out.set_start(fst.start)
    for s in fst.states():
        if eps_out[s]:
            dist = _relax_all(n, {s: 0.0}, lambda q: eps_out[q], "epsilon removal")
            closure = [(q, d) for q, d in enumerate(dist) if d < INF]
        else:
            closure = [(s, 0.0)]
        best: dict[tuple[int, int, int], float] = {}
        order: list[tuple[int, int, int]] = []
        final = INF
        for q, d in closure:
            final = min(final, d + fst.final(q))
            for a in fst.arcs(q):
                if a.ilabel == EPS:
                    continue
                key = (a.ilabel, a.olabel, a.nextstate)
                w = d + a.weight
                if key not in best:
                    order.append(key)
                    best[key] = w
                elif w < best[key]:
                    best[key] = w
        for key in order:
            out.add_arc(s, key[0], key[1], best[key], key[2])
        if final < INF:
            out.set_final(s, final)
    return connect(out)


def _wkey(w: float) -> float:
    return round(w, _WEIGHT_DIGITS) + 0.0


def determinize(fst: Wfst, max_states: int = 1_000_000) -> Wfst:
    """Weighted subset construction on joint (ilabel, olabel) labels.

    Encoding the pair as one label makes any transducer determinizable as an
    acceptor; on acyclic input this always terminates.
    """
    if has_epsilons(fst):
        raise FstError("determinize needs an epsilon-free input; run rmepsilon first")
    out = Wfst(fst.isymbols, fst.osymbols)
    if fst.num_states == 0 or fst.start == NO_STATE:
        return out

    def key_of(subset: dict[int, float]) -> tuple:
        return tuple(sorted((q, _wkey(r)) for q, r in subset.items()))

    start_subset = {fst.start: 0.0}
    table = {key_of(start_subset): 0}
    subsets = [start_subset]
    out.set_start(out.add_state())
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        subset = subsets[sid]
        final = min((r + fst.final(q) for q, r in subset.items()), default=INF)
        if final < INF:
            out.set_final(sid, final)
        moves: dict[tuple[int, int], dict[int, float]] = {}
        for q in sorted(subset):
            r = subset[q]
            for a in fst.arcs(q):
                targets = moves.setdefault((a.ilabel, a.olabel), {})
                w = r + a.weight
                if w < targets.get(a.nextstate, INF):
                    targets[a.nextstate] = w
        for label in sorted(moves):
            targets = moves[label]
            w = min(targets.values())
            nxt = {t: v - w for t, v in targets.items()}
            k = key_of(nxt)
            tid = table.get(k)
            if tid is None:
                if len(subsets) >= max_states:
                    raise FstError("determinization exceeded state limit (non-determinizable input?)")
                tid = out.add_state()
                table[k] = tid
                subsets.append(nxt)
                queue.append(tid)
            out.add_arc(sid, label[0], label[1], w, tid)
    return out


def shortest_distance_to_final(fst: Wfst) -> list[float]:
    rev: list[list[tuple[float, int]]] = [[] for _ in range(fst.num_states)]
    for s in fst.states():
        for a in fst.arcs(s):
            rev[a.nextstate].append((a.weight, s))
    return _relax_all(fst.num_states, fst.finals, lambda q: rev[q], "shortest distance")


def push_weights(fst: Wfst) -> Wfst:
    """Push weights toward the start state.

    Afterwards every state (other than the start) has a cheapest future of
    zero; the start's residual is folded into its outgoing arcs and final
    weight, through a fresh start state if the old one has incoming arcs.
    """
    fst = connect(fst)
    if fst.num_states == 0 or not fst.finals:
        return fst
    d = shortest_distance_to_final(fst)
    out = Wfst(fst.isymbols, fst.osymbols)
    out.add_states(fst.num_states)
    for s in fst.states():
        for a in fst.arcs(s):
            out.add_arc(s, a.ilabel, a.olabel, a.weight + d[a.nextstate] - d[s], a.nextstate)
        if fst.is_final(s):
            out.set_final(s, fst.final(s) - d[s])
    residual = d[fst.start]
    start = fst.start
    if residual != 0.0:
        has_incoming = any(a.nextstate == start for s in fst.states() for a in fst.arcs(s))
        if has_incoming:
            new_start = out.add_state()
            for a in out.arcs(start):
                out.add_arc(new_start, a.ilabel, a.olabel, a.weight + residual, a.nextstate)
            if out.is_final(start):
                out.set_final(new_start, out.final(start) + residual)
            start = new_start
        else:
            out._arcs[start] = [a._replace(weight=a.weight + residual) for a in out.arcs(start)]
            if out.is_final(start):
                out.set_final(start, out.final(start) + residual)
    out.set_start(start)
    return out


def minimize(fst: Wfst) -> Wfst:
    """State-minimal equivalent of a deterministic machine.

    Weights are pushed first, then states are merged by iterated partition
    refinement on (finality, pushed final weight, outgoing label/weight/
    target-class) signatures.
    """
    if not is_deterministic(fst, joint=True):
        raise FstError("minimize needs a deterministic input")
    fst = push_weights(fst)
    n = fst.num_states
    if n == 0:
        return fst
    cls = [0] * n
    keys: dict = {}
    for s in fst.states():
        k = (fst.is_final(s), _wkey(fst.final(s)) if fst.is_final(s) else None)
        cls[s] = keys.setdefault(k, len(keys))
    num = len(keys)
    while True:
        sigs: dict = {}
        new = [0] * n
        for s in fst.states():
            sig = (
                cls[s],
                tuple(sorted((a.ilabel, a.olabel, _wkey(a.weight), cls[a.nextstate]) for a in fst.arcs(s))),
            )
            new[s] = sigs.setdefault(sig, len(sigs))
        if len(sigs) == num:
            break
        cls, num = new, len(sigs)

    # Renumber classes in order of first appearance in a BFS from start.
    order: dict[int, int] = {}
    reps: list[int] = []
    queue = deque([fst.start])
    seen = {fst.start}
    while queue:
        s = queue.popleft()
        if cls[s] not in order:
            order[cls[s]] = len(reps)
            reps.append(s)
        for a in fst.arcs(s):
            if a.nextstate not in seen:
                seen.add(a.nextstate)
                queue.append(a.nextstate)
    out = Wfst(fst.isymbols, fst.osymbols)
    out.add_states(len(reps))
    out.set_start(order[cls[fst.start]])
    for c, s in enumerate(reps):
        for a in fst.arcs(s):
            out.add_arc(c, a.ilabel, a.olabel, a.weight, order[cls[a.nextstate]])
        if fst.is_final(s):
            out.set_final(c, fst.final(s))
    return out


def optimize(fst: Wfst) -> Wfst:
    """Epsilon removal, determinization and minimization, in that order."""
    return minimize(determinize(rmepsilon(fst)))


def enumerate_language(
    fst: Wfst,
    max_len: int,
    phi: str | None = None,
    alphabet: Iterable[int] | None = None,
) -> dict[tuple[tuple[int, ...], tuple[int, ...]], float]:
    """All accepted (input, output) label strings up to ``max_len`` symbols.

    Epsilons are dropped from both strings; the weight of a string pair is
    the tropical minimum over every path producing it.

    ``phi`` controls failure arcs: ``None`` keeps label 1 as an ordinary
    symbol, ``"any"`` lets a phi arc read every symbol of ``alphabet``, and
    ``"rest"`` only the symbols with no explicit arc at that state. A phi
    arc whose output is also phi writes the symbol it read.
    """
    if phi not in (None, "any", "rest"):
        raise ValueError(f"unknown phi mode {phi!r}")
    if phi is not None and alphabet is None:
        raise ValueError("phi expansion needs an alphabet")
    result: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
    if fst.num_states == 0 or fst.start == NO_STATE:
        return result
    alphabet = sorted(set(alphabet)) if alphabet is not None else []

    def moves(s: int):
        explicit = {a.ilabel for a in fst.arcs(s) if a.ilabel not in (EPS, PHI)}
        for a in fst.arcs(s):
            if a.ilabel == PHI and phi is not None:
                syms = alphabet if phi == "any" else [x for x in alphabet if x not in explicit]
                for x in syms:
                    yield x, (x if a.olabel == PHI else a.olabel), a.weight, a.nextstate
            else:
                yield a.ilabel, a.olabel, a.weight, a.nextstate

    best: dict[tuple[int, tuple, tuple], float] = {(fst.start, (), ()): 0.0}
    queue = deque([(fst.start, (), ())])
    while queue:
        item = queue.popleft()
        w0 = best[item]
        s, iseq, oseq = item
        for il, ol, w, t in moves(s):
            ni = iseq if il == EPS else iseq + (il,)
            no = oseq if ol == EPS else oseq + (ol,)
            if len(ni) > max_len or len(no) > max_len:
                continue
            nk = (t, ni, no)
            nw = w0 + w
            if nw < best.get(nk, INF):
                best[nk] = nw
                queue.append(nk)
    for (s, iseq, oseq), w in best.items():
        if fst.is_final(s):
            total = w + fst.final(s)
            if total < result.get((iseq, oseq), INF):
                result[(iseq, oseq)] = total
    return result


# text serialization -----------------------------------------------------

def write_text(fst: Wfst, path: str | os.PathLike) -> None:
    """AT&T-style text: arcs ``src dst ilabel olabel weight``, finals ``state weight``.

    The start state is the source of the first line.
    """
    lines = []
    order = [fst.start] + [s for s in fst.states() if s != fst.start] if fst.num_states else []
    for s in order:
        for a in fst.arcs(s):
            lines.append(f"{s}\t{a.nextstate}\t{a.ilabel}\t{a.olabel}\t{a.weight!r}")
        if fst.is_final(s):
            lines.append(f"{s}\t{fst.final(s)!r}")
        elif s == fst.start and not fst.arcs(s):
            lines.append(f"{s}\tInfinity")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def read_text(
    path: str | os.PathLike,
    isymbols: SymbolTable | None = None,
    osymbols: SymbolTable | None = None,
) -> Wfst:
    fst = Wfst(isymbols, osymbols)
    start = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t")
            try:
                if len(fields) == 5:
                    src, dst, il, ol = (int(x) for x in fields[:4])
                    w = float(fields[4])
                    for s in (src, dst):
                        while fst.num_states <= s:
                            fst.add_state()
                    fst.add_arc(src, il, ol, w, dst)
                elif len(fields) in (1, 2):
                    src = int(fields[0])
                    w = float(fields[1]) if len(fields) == 2 else 0.0
                    while fst.num_states <= src:
                        fst.add_state()
                    fst.set_final(src, w)
                else:
                    raise FstError("wrong field count")
            except (ValueError, FstError) as e:
                raise FstError(f"{path}:{lineno}: malformed line {line!r} ({e})") from None
            if start is None:
                start = src
    if start is not None:
        fst.set_start(start)
    return fst
