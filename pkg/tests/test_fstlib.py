import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from ctxbias.fstlib import (
    EPS,
    PHI,
    FstError,
    SymbolTable,
    Wfst,
    connect,
    determinize,
    enumerate_language,
    is_deterministic,
    minimize,
    optimize,
    read_text,
    rmepsilon,
    write_text,
)
from gen import random_acyclic_fst
from oracles import dfs_language


def chain(labels, weights=None, final=0.0):
    f = Wfst()
    f.add_states(len(labels) + 1)
    f.set_start(0)
    for i, lab in enumerate(labels):
        il, ol = lab if isinstance(lab, tuple) else (lab, lab)
        f.add_arc(i, il, ol, weights[i] if weights else 0.0, i + 1)
    f.set_final(len(labels), final)
    return f


def residuals(fst):
    """Per state: the pair-label suffix language {((i,o),...): weight}."""
    memo = {}

    def res(s):
        if s in memo:
            return memo[s]
        out = {}
        if fst.is_final(s):
            out[()] = fst.final(s)
        for a in fst.arcs(s):
            for seq, w in res(a.nextstate).items():
                key = ((a.ilabel, a.olabel),) + seq
                out[key] = min(out.get(key, math.inf), a.weight + w)
        memo[s] = out
        return out

    return {s: res(s) for s in fst.states()}


def minimal_state_count(fst):
    """Distinct residual classes, normalised by each state's cheapest future
    (the start keeps its raw residual since there is no initial weight)."""
    fst = connect(fst)
    if not fst.finals:
        return 1  # empty language still needs a start state
    keys = set()
    for s, r in residuals(fst).items():
        d = min(r.values())
        shift = 0.0 if s == fst.start else d
        keys.add(frozenset((k, w - shift) for k, w in r.items()))
    return len(keys)


# examples ----------------------------------------------------------------

def test_symbol_table_reserved_and_io(tmp_path):
    t = SymbolTable(["a", "b"])
    assert t.find("<eps>") == EPS and t.find("<phi>") == PHI
    assert t.find("a") == 2 and t.symbol(3) == "b"
    assert t.add_symbol("a") == 2
    p = tmp_path / "syms"
    t.write(p)
    assert SymbolTable.read(p) == t
    with pytest.raises(KeyError):
        t.find("zz")


def test_determinize_keeps_pair_paths():
    f = Wfst()
    f.add_states(3)
    f.set_start(0)
    f.add_arc(0, 2, 4, 1.0, 1)
    f.add_arc(0, 2, 5, 2.0, 2)
    f.set_final(1)
    f.set_final(2)
    before = enumerate_language(f, 3)
    d = determinize(f)
    assert enumerate_language(d, 3) == before == {((2,), (4,)): 1.0, ((2,), (5,)): 2.0}
    assert is_deterministic(d)


def test_determinize_deterministic_acceptor_is_isomorphic():
    f = chain([2, 3, 4], [1.0, 0.5, 2.0])
    f.add_arc(1, 5, 5, 1.0, 3)
    d = determinize(f)
    assert (d.num_states, d.num_arcs()) == (f.num_states, f.num_arcs())
    assert enumerate_language(d, 4) == enumerate_language(f, 4)


def test_determinize_shares_common_prefix():
    # "_Jo n" and "_Jo hn" share the "_Jo" arc after determinization
    f = Wfst()
    f.add_states(6)
    f.set_start(0)
    f.add_arc(0, 2, 0, 0.0, 1)
    f.add_arc(1, 3, 9, 0.0, 2)
    f.add_arc(0, 2, 0, 0.0, 3)
    f.add_arc(3, 4, 0, 0.0, 4)
    f.add_arc(4, 3, 9, 0.0, 5)
    f.set_final(2)
    f.set_final(5)
    d = determinize(f)
    assert len(d.arcs(d.start)) == 1
    assert enumerate_language(d, 4) == enumerate_language(f, 4)


def test_determinize_rejects_epsilons():
    f = chain([(EPS, EPS)])
    with pytest.raises(FstError):
        determinize(f)


def test_minimize_merges_identical_branches():
    f = Wfst()
    f.add_states(5)
    f.set_start(0)
    f.add_arc(0, 2, 2, 0.0, 1)
    f.add_arc(0, 3, 3, 0.0, 2)
    f.add_arc(1, 4, 4, 1.0, 3)
    f.add_arc(2, 4, 4, 1.0, 4)
    f.set_final(3)
    f.set_final(4)
    m = minimize(f)
    assert m.num_states == 3
    assert enumerate_language(m, 3) == enumerate_language(f, 3)


def test_minimize_minimal_and_chain_unchanged():
    for n in range(1, 6):
        f = chain(list(range(2, 2 + n)), [float(i) for i in range(n)])
        m = minimize(f)
        assert m.num_states == n + 1
        assert enumerate_language(m, n) == enumerate_language(f, n)
        assert minimize(m).num_states == m.num_states


def test_minimize_rejects_nondeterministic():
    f = Wfst()
    f.add_states(3)
    f.set_start(0)
    f.add_arc(0, 2, 2, 0.0, 1)
    f.add_arc(0, 2, 2, 1.0, 2)
    f.set_final(1)
    f.set_final(2)
    with pytest.raises(FstError):
        minimize(f)


def test_rmepsilon_closure_arithmetic():
    f = Wfst()
    f.add_states(3)
    f.set_start(0)
    f.add_arc(0, EPS, EPS, 1.0, 1)
    f.add_arc(1, 2, 2, 2.0, 2)
    f.set_final(2)
    r = rmepsilon(f)
    arcs = r.arcs(r.start)
    assert [(a.ilabel, a.weight) for a in arcs] == [(2, 3.0)]
    assert r.is_final(arcs[0].nextstate)


def test_rmepsilon_epsilon_free_unchanged():
    f = chain([2, 3], [1.0, 2.0], final=0.5)
    r = rmepsilon(f)
    assert (r.num_states, r.num_arcs()) == (f.num_states, f.num_arcs())
    assert enumerate_language(r, 3) == enumerate_language(f, 3)


def test_rmepsilon_diamond_keeps_min():
    f = Wfst()
    f.add_states(5)
    f.set_start(0)
    f.add_arc(0, EPS, EPS, 1.0, 1)
    f.add_arc(0, EPS, EPS, 3.0, 2)
    f.add_arc(1, EPS, EPS, 0.0, 3)
    f.add_arc(2, EPS, EPS, 0.0, 3)
    f.add_arc(3, 2, 2, 0.0, 4)
    f.set_final(4)
    r = rmepsilon(f)
    assert enumerate_language(r, 2) == {((2,), (2,)): 1.0} == dfs_language(f, 2)
    assert not any(a.ilabel == EPS for s in r.states() for a in r.arcs(s))


def test_rmepsilon_negative_cycle():
    f = Wfst()
    f.add_states(2)
    f.set_start(0)
    f.add_arc(0, EPS, EPS, -1.0, 1)
    f.add_arc(1, EPS, EPS, 0.0, 0)
    f.set_final(1)
    with pytest.raises(FstError):
        rmepsilon(f)


def test_rmepsilon_rejects_eps_input_with_output():
    f = chain([(EPS, 3)])
    with pytest.raises(FstError):
        rmepsilon(f)


def test_enumerate_empty():
    f = Wfst()
    f.set_start(f.add_state())
    assert enumerate_language(f, 5) == {}
    assert enumerate_language(Wfst(), 5) == {}


def test_enumerate_phi_modes():
    f = Wfst()
    f.add_states(3)
    f.set_start(0)
    f.add_arc(0, 2, 7, 0.0, 1)
    f.add_arc(0, PHI, EPS, 5.0, 2)
    f.set_final(1)
    f.set_final(2)
    assert enumerate_language(f, 1) == {((2,), (7,)): 0.0, ((PHI,), ()): 5.0}
    anyl = enumerate_language(f, 1, phi="any", alphabet=[2, 3])
    assert anyl == {((2,), (7,)): 0.0, ((2,), ()): 5.0, ((3,), ()): 5.0}
    rest = enumerate_language(f, 1, phi="rest", alphabet=[2, 3])
    assert rest == {((2,), (7,)): 0.0, ((3,), ()): 5.0}
    with pytest.raises(ValueError):
        enumerate_language(f, 1, phi="any")


def test_enumerate_cyclic_is_bounded():
    f = Wfst()
    f.set_start(f.add_state())
    f.add_arc(0, 2, 2, 1.0, 0)
    f.set_final(0)
    lang = enumerate_language(f, 3)
    assert lang == {((2,) * k, (2,) * k): float(k) for k in range(4)}
    assert lang == dfs_language(f, 3)


def test_text_round_trip(tmp_path):
    rng = random.Random(3)
    for _ in range(20):
        f = random_acyclic_fst(rng, 8)
        p = tmp_path / "f.txt"
        write_text(f, p)
        g = read_text(p)
        assert g.start == f.start
        assert enumerate_language(g, 8) == enumerate_language(f, 8)


def test_read_text_malformed(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0\t1\tx\t2\t0.0\n")
    with pytest.raises(FstError):
        read_text(p)


# properties ----------------------------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_enumerate_matches_dfs(seed):
    f = random_acyclic_fst(random.Random(seed), 10)
    assert enumerate_language(f, 10) == dfs_language(f, 10)


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_optimize_preserves_language_and_is_minimal(seed):
    f = random_acyclic_fst(random.Random(seed), 8)
    ref = dfs_language(f, 8)
    r = rmepsilon(f)
    d = determinize(r)
    m = minimize(d)
    assert enumerate_language(r, 8) == ref
    assert enumerate_language(d, 8) == ref
    assert enumerate_language(m, 8) == ref
    assert is_deterministic(d) and is_deterministic(m)
    assert m.num_states == minimal_state_count(d)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_minimize_small_deterministic_is_minimal(seed):
    rng = random.Random(seed)
    f = random_acyclic_fst(rng, 6, n_labels=2, det=True, arc_p=0.6)
    m = minimize(f)
    assert enumerate_language(m, 6) == enumerate_language(f, 6)
    assert m.num_states == minimal_state_count(f)
    assert minimize(m).num_states == m.num_states


def test_optimize_is_pipeline():
    f = random_acyclic_fst(random.Random(11), 10)
    assert enumerate_language(optimize(f), 10) == dfs_language(f, 10)
