import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctxbias.biasing import PatternCorpus, build_biasing_graph, build_name_fst, contact
from ctxbias.decoder import DecodeConfig, beam_decode, fuse
from ctxbias.plm import ContactTrie, PlmProjection, build_trie
from ctxbias.scorers import (
    ScorerDomainError,
    TableScorer,
    ToyJoiner,
    ToyJoinerScorer,
    check_normalized,
    load_table_scorer,
    load_toy_joiner,
    log_softmax,
    random_toy_joiner,
    toy_joiner_logits,
)
from ctxbias.tokenizer import Vocabulary
from gen import random_decode_instance
from oracles import exhaustive_decode

FULL_BEAM = 10**6


def norm(values):
    z = np.asarray(values, dtype=float)
    return np.log(z / z.sum())


# fusion and config ---------------------------------------------------------------

def test_fuse_examples():
    assert fuse(-1.5, 7.0, 0.0) == -1.5
    assert fuse(-1.5, 2.3, 1.0) == -1.5 - 2.3
    assert fuse(-1.5, math.inf, 1.0) == -math.inf
    assert fuse(-1.5, math.inf, 0.0) == -1.5


@pytest.mark.parametrize(
    "kw", [dict(beam=0), dict(lm_weight=-0.1), dict(lm_weight=math.nan), dict(max_symbols_per_frame=0), dict(nbest=0)]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DecodeConfig(**kw)


# scorers ---------------------------------------------------------------------------

def test_toy_joiner_examples():
    j = ToyJoiner(np.zeros((2, 3)), {(): np.zeros(3)}, np.zeros((4, 3)), np.zeros(4))
    lp = ToyJoinerScorer(j).log_probs(0, [])
    assert np.allclose(np.exp(lp), 0.25)
    # d=2, V=3, hand-set weights
    enc = np.array([[1.0, 2.0]])
    pred = {(): np.array([0.5, -1.0]), (2,): np.array([0.0, 1.0])}
    W = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]])
    b = np.array([0.0, 0.5, -0.5, 1.0])
    j = ToyJoiner(enc, pred, W, b)
    h = np.array([1.5, 1.0])  # enc + pred(())
    assert toy_joiner_logits(j, 0, []).tolist() == [1.5, 1.5, 2.0, 3.0]
    assert toy_joiner_logits(j, 0, [1, 2]).tolist() == [1.0, 3.5, 3.5, 0.0]
    assert np.array_equal(toy_joiner_logits(j, 0, [], np.zeros(2)), W @ h + b)
    assert toy_joiner_logits(j, 0, [], np.array([1.0, 0.0])).tolist() == [2.5, 1.5, 3.0, 5.0]
    with pytest.raises(ValueError):
        toy_joiner_logits(j, 0, [], np.zeros(3))
    with pytest.raises(ScorerDomainError):
        toy_joiner_logits(j, 5, [])


def test_toy_joiner_validation():
    with pytest.raises(ValueError):
        ToyJoiner(np.zeros((2, 3)), {}, np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ValueError):
        ToyJoiner(np.zeros((2, 3)), {(): np.zeros(3)}, np.zeros((4, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        ToyJoiner(np.zeros((2, 3)), {(): np.zeros(3)}, np.zeros((4, 3)), np.zeros(4), max_entries=10)


def test_toy_joiner_json(tmp_path):
    j = random_toy_joiner(np.random.default_rng(0), 2, 3, 4)
    spec = {
        "encoder": j.encoder.tolist(),
        "predictor": [[list(k), v.tolist()] for k, v in j.predictor.items()],
        "weight": j.weight.tolist(),
        "bias": j.bias.tolist(),
    }
    p = tmp_path / "j.json"
    p.write_text(json.dumps(spec))
    k = load_toy_joiner(p)
    assert np.array_equal(k.logits(1, [2]), j.logits(1, [2]))
    p.write_text("{}")
    with pytest.raises(ValueError):
        load_toy_joiner(p)


def test_table_scorer_lookup_and_errors(tmp_path):
    s = TableScorer(2, 2, {(0, ()): norm([1, 1, 2]), (0, (1,)): norm([1, 2, 1]), (1, ()): norm([1, 1, 1])})
    assert np.allclose(np.exp(s.log_probs(0, [0, 1])), [0.25, 0.5, 0.25])
    assert np.allclose(np.exp(s.log_probs(0, [1, 0])), [0.25, 0.25, 0.5])
    with pytest.raises(ScorerDomainError):
        TableScorer(2, 2, {(0, ()): norm([1, 1, 1])}).log_probs(1, [])
    with pytest.raises(ValueError):
        TableScorer(1, 2, {(0, ()): [0.0, 0.0, 0.0]})
    with pytest.raises(ValueError):
        TableScorer(1, 2, {(0, ()): norm([1, 1])})
    v = Vocabulary([("_a", -1.0), ("b", -1.0)])
    p = tmp_path / "s.txt"
    rows = [f"0\t\t{' '.join(map(str, norm([1, 1, 2])))}", f"0\t_a\t{' '.join(map(str, norm([1, 2, 1])))}"]
    p.write_text("1 2\n" + "\n".join(rows) + "\n")
    t = load_table_scorer(p, v)
    assert np.allclose(np.exp(t.log_probs(0, [0])), [0.25, 0.5, 0.25])
    p.write_text("1 2\n0\t\t0 0 0\n")
    with pytest.raises(ValueError):
        load_table_scorer(p)


def test_normalization_check():
    check_normalized(log_softmax(np.array([1.0, 2.0, 3.0])))
    with pytest.raises(ValueError):
        check_normalized(np.array([0.0, 0.0]))


# decoding ------------------------------------------------------------------------------

def test_two_frame_full_beam_is_exhaustive():
    j = random_toy_joiner(np.random.default_rng(7), 2, 3, 4)
    sc = ToyJoinerScorer(j)
    cfg = DecodeConfig(beam=FULL_BEAM, lm_weight=0.0, max_symbols_per_frame=2)
    (best,) = beam_decode(sc, cfg)
    score, pieces = exhaustive_decode(sc, 2)
    assert best.pieces == pieces
    assert best.score == pytest.approx(score, abs=1e-9)


def test_nbest_sorted_and_distinct():
    sc = ToyJoinerScorer(random_toy_joiner(np.random.default_rng(3), 3, 3, 4))
    res = beam_decode(sc, DecodeConfig(beam=20, nbest=10, max_symbols_per_frame=2))
    assert len(res) == 10
    assert [r.score for r in res] == sorted((r.score for r in res), reverse=True)
    assert len({r.pieces for r in res}) == 10


def test_domain_error_propagates():
    sc = TableScorer(2, 2, {(0, ()): norm([1, 1, 1])})
    with pytest.raises(ScorerDomainError):
        beam_decode(sc, DecodeConfig())


def test_plm_requires_trie():
    sc = ToyJoinerScorer(random_toy_joiner(np.random.default_rng(0), 1, 2, 3))
    with pytest.raises(ValueError):
        beam_decode(sc, DecodeConfig(plm=True))
    with pytest.raises(ValueError):
        beam_decode(sc, DecodeConfig(plm=True), trie=ContactTrie([(0,)], 3), proj=PlmProjection.zeros(3, 3))


def flip_case():
    """Acoustics prefer _Katy by 0.4 nats; the contact's variant _Katie costs 0.1."""
    v = Vocabulary([("_K", -3.0), ("aity", -3.0), ("_Katie", -1.0), ("_Katy", -1.0)])
    a = 0.55
    first = [0.01, 0.01, a * math.exp(-0.4), a]
    first.append(1.0 - sum(first))
    after = [0.025] * 4 + [0.9]
    sc = TableScorer(1, 4, {(0, ()): np.log(first), (0, (2,)): np.log(after), (0, (3,)): np.log(after),
                            (0, (0,)): np.log(after), (0, (1,)): np.log(after)})
    g = build_name_fst([contact("Kaity", "Kaity", "Katie", weight=0.1)], v, 6.0)
    return v, sc, g


def test_flip_by_fusion():
    v, sc, g = flip_case()
    plain = beam_decode(sc, DecodeConfig(beam=8, lm_weight=1.0))[0]
    assert plain.pieces == (v.id("_Katy"),)
    biased = beam_decode(sc, DecodeConfig(beam=8, lm_weight=1.0), graph=g)[0]
    assert biased.pieces == (v.id("_Katie"),) and biased.words == ("Kaity",)
    assert biased.score == pytest.approx(math.log(0.55) - 0.4 + math.log(0.9) - 0.1, abs=1e-12)
    assert beam_decode(sc, DecodeConfig(lm_weight=0.0), graph=g)[0].pieces == plain.pieces
    score, pieces = exhaustive_decode(sc, 3, lam=1.0, graph=g)
    assert pieces == biased.pieces and score == pytest.approx(biased.score, abs=1e-12)


def random_instance(seed, with_graph=True, with_plm=False):
    return random_decode_instance(seed, (3, 6), (1, 3), with_graph, with_plm)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.5, 1.0]), st.booleans())
def test_full_beam_matches_exhaustive(seed, lam, use_plm):
    sc, graph, trie, proj = random_instance(seed, True, use_plm)
    cfg = DecodeConfig(beam=FULL_BEAM, lm_weight=lam, max_symbols_per_frame=2, plm=use_plm)
    (best,) = beam_decode(sc, cfg, graph, trie, proj)
    plm = (trie.sequences(), proj.weight) if use_plm else None
    score, pieces = exhaustive_decode(sc, 2, lam=lam, graph=graph, plm=plm)
    assert best.pieces == pieces
    assert best.score == pytest.approx(score, abs=1e-9)


def hyp_set(results):
    return [(r.pieces, r.score, r.model_score) for r in results]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_neutrality(seed, beam):
    sc, graph, trie, _ = random_instance(seed, True, True)
    base = hyp_set(beam_decode(sc, DecodeConfig(beam=beam, nbest=beam, max_symbols_per_frame=2)))
    cfg = DecodeConfig(beam=beam, nbest=beam, lm_weight=0.0, max_symbols_per_frame=2)
    assert hyp_set(beam_decode(sc, cfg, graph)) == base
    zero = PlmProjection.zeros(3, sc.vocab_size)
    cfg = DecodeConfig(beam=beam, nbest=beam, max_symbols_per_frame=2, plm=True)
    assert hyp_set(beam_decode(sc, cfg, trie=trie, proj=zero)) == base
