"""Random instance generators shared by unit and acceptance tests."""

import random

from ctxbias.biasing import Contact
from ctxbias.fstlib import EPS, Wfst
from ctxbias.tokenizer import Vocabulary


def random_acyclic_fst(rng: random.Random, max_states=12, n_labels=3, eps_p=0.2, arc_p=0.35, det=False):
    """Arcs only go forward, so the machine is acyclic. Weights are small
    integers so every later sum is exact in floating point."""
    n = rng.randint(1, max_states)
    f = Wfst()
    f.add_states(n)
    f.set_start(0)
    for s in range(n):
        used = set()
        for t in range(s + 1, n):
            if rng.random() >= arc_p:
                continue
            if rng.random() < eps_p and not det:
                il = ol = EPS
            else:
                il = rng.randint(2, n_labels + 1)
                ol = rng.choice([EPS, rng.randint(2, n_labels + 1)])
            if det and (il, ol) in used:
                continue
            used.add((il, ol))
            f.add_arc(s, il, ol, float(rng.randint(-1, 4)), t)
        if rng.random() < 0.35 or s == n - 1:
            f.set_final(s, float(rng.randint(0, 3)))
    return f


def random_vocab(rng: random.Random, alphabet="abcd", n_extra=6, marker="_"):
    pieces = [marker] + list(alphabet)
    while len(pieces) < len(alphabet) + 1 + n_extra:
        k = rng.randint(1, 3)
        p = ("_" if rng.random() < 0.4 else "") + "".join(rng.choice(alphabet) for _ in range(k))
        if p not in pieces:
            pieces.append(p)
    return Vocabulary([(p, -rng.choice([1.0, 1.5, 2.0, 2.5])) for p in pieces], marker=marker)


def random_word(rng: random.Random, alphabet="abcd", lo=1, hi=4):
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(lo, hi)))


def random_contacts(rng: random.Random, n_names, alphabet="abcd", max_variants=2, weights=(0.0, 0.25, 0.5, 1.5)):
    out = []
    for i in range(n_names):
        spellings = {(random_word(rng, alphabet),)}
        for _ in range(rng.randint(0, max_variants)):
            spellings.add((random_word(rng, alphabet),))
        out.append(Contact(f"N{i}", tuple(sorted(spellings)), rng.choice(weights)))
    return out


def random_decode_instance(seed, v_range=(2, 6), t_range=(1, 3), with_graph=True, with_plm=False, dim=3):
    """Toy joiner scorer plus (optionally) a biasing graph, trie and projection."""
    import numpy as np

    from ctxbias.biasing import PatternCorpus, build_biasing_graph, build_name_fst
    from ctxbias.plm import PlmProjection, build_trie
    from ctxbias.scorers import ToyJoinerScorer, random_toy_joiner

    rng = random.Random(seed)
    V = rng.randint(*v_range)
    T = rng.randint(*t_range)
    alphabet = "a" if V == 2 else "ab"
    v = random_vocab(rng, alphabet=alphabet, n_extra=V - 1 - len(alphabet))
    nrng = np.random.default_rng(seed)
    sc = ToyJoinerScorer(random_toy_joiner(nrng, T, V, dim))
    graph = trie = proj = None
    if with_graph:
        cs = random_contacts(rng, rng.randint(1, 4), alphabet=alphabet)
        if rng.random() < 0.5:
            graph = build_name_fst(cs, v, rng.choice([1.0, 3.0]))
        else:
            corpus = PatternCorpus()
            corpus.add([alphabet, "@name"])
            corpus.add(["@name"], 2.0)
            graph = build_biasing_graph(corpus, cs, v, order=2, oov_weight=2.0)
        if with_plm:
            trie = build_trie(cs, v)
            proj = PlmProjection(nrng.normal(size=(dim, 3 * V)))
    return sc, graph, trie, proj
