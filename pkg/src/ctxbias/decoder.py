"""Time-synchronous transducer beam search with shallow fusion applied
before pruning and optional deep PLM input to the joiner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .biasing import LmState, lm_advance, lm_start, lm_words
from .fstlib import Wfst
from .plm import ContactTrie, PlmProjection, plm_embed_state, suffix_state_advance, suffix_state_start
from .scorers import Scorer, ScorerDomainError

NEG_INF = -math.inf


@dataclass(frozen=True)
class DecodeConfig:
    beam: int = 8
    lm_weight: float = 1.0
    max_symbols_per_frame: int = 4
    nbest: int = 1
    plm: bool = False

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError(f"beam must be >= 1, got {self.beam}")
        if not self.lm_weight >= 0 or not math.isfinite(self.lm_weight):
            raise ValueError(f"fusion weight must be finite and >= 0, got {self.lm_weight}")
        if self.max_symbols_per_frame < 1:
            raise ValueError("max symbols per frame must be >= 1")
        if self.nbest < 1:
            raise ValueError("nbest must be >= 1")


def fuse(model_logprob: float, lm_weight: float, lam: float) -> float:
    """Log-linear fusion; ``lm_weight`` is a tropical cost (infinite = dead end)."""
    if lam == 0.0:
        return model_logprob
    if lm_weight == math.inf:
        return NEG_INF
    return model_logprob + lam * -lm_weight


@dataclass
class Hypothesis:
    pieces: tuple[int, ...]
    model_score: float
    fused_score: float
    lm_state: LmState | None = None
    plm_state: frozenset | None = None


@dataclass(frozen=True)
class DecodeResult:
    pieces: tuple[int, ...]
    words: tuple[str, ...]
    score: float
    model_score: float = field(compare=False, default=0.0)


def _rank_key(h: Hypothesis):
    return (-h.fused_score, h.pieces)


def _prune(hyps: dict[tuple[int, ...], Hypothesis], beam: int) -> list[Hypothesis]:
    ranked = sorted(hyps.values(), key=_rank_key)
    return ranked[:beam]


def _keep_best(bucket: dict[tuple[int, ...], Hypothesis], hyp: Hypothesis) -> None:
    cur = bucket.get(hyp.pieces)
    if cur is None or hyp.fused_score > cur.fused_score or (
        hyp.fused_score == cur.fused_score and hyp.model_score > cur.model_score
    ):
        bucket[hyp.pieces] = hyp


def beam_decode(
    scorer: Scorer,
    config: DecodeConfig,
    graph: Wfst | None = None,
    trie: ContactTrie | None = None,
    proj: PlmProjection | None = None,
) -> list[DecodeResult]:
    """n-best list of ``(pieces, words, fused score)``, best first.

    Per frame each hypothesis may emit up to ``max_symbols_per_frame``
    pieces before a BLANK moves it to the next frame. Every emission
    advances the biasing LM and is fused before the beam is pruned.
    Hypotheses with the same pieces at the same point are merged by max
    (Viterbi), which is exact because their futures are identical.
    """
    if config.plm and (trie is None or proj is None):
        raise ValueError("PLM decoding needs a contact trie and a projection")
    V = scorer.vocab_size
    blank = V
    lam = config.lm_weight if graph is not None else 0.0
    use_plm = config.plm

    if use_plm and trie.vocab_size != V:
        raise ValueError(f"trie V={trie.vocab_size} does not match scorer V={V}")

    lm0 = lm_start(graph) if graph is not None else None
    init = Hypothesis(
        (),
        0.0,
        fuse(0.0, lm0.weight, lam) if lm0 is not None else 0.0,
        lm0,
        suffix_state_start() if use_plm else None,
    )
    # Many piece sequences share an LM or trie state, so transitions are
    # memoised on (state, piece).
    lm_cache: dict[tuple, LmState] = {}
    plm_step_cache: dict[tuple, frozenset] = {}
    plm_cache: dict[frozenset, object] = {}

    def advance(hyp, p):
        lm = pl = None
        if graph is not None:
            key = (hyp.lm_state, p)
            lm = lm_cache.get(key)
            if lm is None:
                lm = lm_cache[key] = lm_advance(graph, hyp.lm_state, p + 2)
        if use_plm:
            key = (hyp.plm_state, p)
            pl = plm_step_cache.get(key)
            if pl is None:
                pl = plm_step_cache[key] = suffix_state_advance(trie, hyp.plm_state, p)
        return hyp.pieces + (p,), lm, pl

    def embed(state):
        vec = plm_cache.get(state)
        if vec is None:
            vec = plm_cache[state] = plm_embed_state(trie, state, proj)
        return vec

    beam = [init]
    for t in range(scorer.num_frames):
        next_frame: dict[tuple[int, ...], Hypothesis] = {}
        frontier = beam
        for step in range(config.max_symbols_per_frame + 1):
            emitted: dict[tuple[int, ...], Hypothesis] = {}
            for hyp in frontier:
                h_plm = embed(hyp.plm_state) if use_plm else None
                lp = scorer.log_probs(t, hyp.pieces, h_plm)
                if len(lp) != V + 1:
                    raise ScorerDomainError(f"scorer returned {len(lp)} values, expected {V + 1}")
                model = hyp.model_score + float(lp[blank])
                _keep_best(next_frame, Hypothesis(
                    hyp.pieces, model, fuse(model, hyp.lm_state.weight, lam) if graph is not None else model,
                    hyp.lm_state, hyp.plm_state,
                ))
                if step == config.max_symbols_per_frame:
                    continue
                for p in range(V):
                    model = hyp.model_score + float(lp[p])
                    pieces, lm, pl = advance(hyp, p)
                    fused = fuse(model, lm.weight, lam) if lm is not None else model
                    _keep_best(emitted, Hypothesis(pieces, model, fused, lm, pl))
            frontier = _prune(emitted, config.beam)
            if not frontier:
                break
        beam = _prune(next_frame, config.beam)

    results = []
    for hyp in beam[: config.nbest]:
        words = tuple(lm_words(graph, hyp.lm_state)) if graph is not None else ()
        results.append(DecodeResult(hyp.pieces, words, hyp.fused_score, hyp.model_score))
    return results

