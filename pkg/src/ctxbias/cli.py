"""``ctxbias`` command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .biasing import (
    DEFAULT_OOV_WEIGHT,
    build_name_fst,
    build_pattern_lm,
    expand_contacts,
    expand_word_arcs,
    load_contacts,
    load_patterns,
    piece_symbols,
    replace_class_tag,
)
from .decoder import DecodeConfig, beam_decode
from .fstlib import SymbolTable, read_text, write_text
from .g2g import G2GMap, decode_variants, load_g2g, train_replace
from .plm import build_trie, load_projection, trie_query
from .scorers import ToyJoinerScorer, load_table_scorer, load_toy_joiner
from .simulation import simulate_contact_list
from .tokenizer import load_vocab, tokenize_sentence

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

FORMATS = """file formats:
  vocab      piece<TAB>logprob per line; id = line number (0-based)
  patterns   weight<TAB>word word @name ...
  contacts   display<TAB>spelling1|spelling2 (bare display = its own spelling)
  g2g map    word<TAB>variant1,variant2,...
  scorer     header 'T V', then t<TAB>history pieces<TAB>V+1 logprobs (BLANK last);
             a .json file is read as a toy joiner instead
  projection header 'd V', then d rows of 3V reals
  graph      AT&T text (src dst ilabel olabel weight / state weight),
             symbols in <graph>.isyms and <graph>.osyms
  corpus     text<TAB>tagged entity (simulate)
  config     key=value lines, keys as listed in Config
"""


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    vocab: str | None = None
    patterns: str | None = None
    contacts: str | None = None
    g2g: str | None = None
    proj: str | None = None
    scorer: str | None = None
    beam: int = 8
    lam: float = 1.0
    max_symbols: int = 4
    nbest: int = 1
    oov_weight: float = DEFAULT_OOV_WEIGHT
    order: int = 4
    k_g2g: int = 2
    p: float = 0.2
    l: int = 5
    alpha: float = 0.25
    seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        checks = [
            (self.beam >= 1, "beam must be >= 1"),
            (self.lam >= 0, "lambda must be >= 0"),
            (self.max_symbols >= 1, "max_symbols must be >= 1"),
            (self.nbest >= 1, "nbest must be >= 1"),
            (self.order >= 1, "order must be >= 1"),
            (self.k_g2g >= 0, "k_g2g must be >= 0"),
            (0.0 <= self.p <= 1.0, "p must be in [0, 1]"),
            (self.l >= 1, "l must be >= 1"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.jobs >= 1, "jobs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


_PATH_KEYS = ("vocab", "patterns", "contacts", "g2g", "proj", "scorer")
_KEY_ALIASES = {"lambda": "lam", "max_symbols_per_frame": "max_symbols"}


def load_config(path: str | os.PathLike | None) -> Config:
    """Read ``key=value`` lines (``#`` comments allowed); missing keys keep defaults."""
    cfg = Config()
    if path is None:
        return cfg
    types = {f.name: f.type for f in fields(Config)}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = _KEY_ALIASES.get(key, key)
            if key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in _PATH_KEYS:
                if not Path(value).exists():
                    raise ConfigError(f"{path}:{lineno}: {key} file {value!r} does not exist")
                setattr(cfg, key, value)
                continue
            conv = int if "int" in str(types[key]) else float
            try:
                setattr(cfg, key, conv(value))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    cfg.validate()
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _merged(args, *keys) -> Config:
    cfg = load_config(args.config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _require(cfg: Config, *keys) -> None:
    missing = [k for k in keys if getattr(cfg, k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _load_g2g(cfg: Config) -> G2GMap | None:
    return load_g2g(cfg.g2g) if cfg.g2g else None


def _contacts(cfg: Config):
    contacts = load_contacts(cfg.contacts)
    g2g = _load_g2g(cfg)
    if g2g is not None:
        contacts = expand_contacts(contacts, g2g, cfg.k_g2g)
    return contacts


# subcommands ----------------------------------------------------------------

def cmd_tokenize(args, out) -> int:
    cfg = _merged(args, "vocab", "l", "alpha", "seed")
    _require(cfg, "vocab")
    vocab = load_vocab(cfg.vocab)
    rng = random.Random(cfg.seed)
    for line in args.stdin:
        ids = tokenize_sentence(line, vocab, mode=args.mode, l=cfg.l, alpha=cfg.alpha, rng=rng)
        out.write(" ".join(vocab.piece(i) for i in ids) + "\n")
    return EXIT_OK


def cmd_build_graph(args, out) -> int:
    cfg = _merged(args, "patterns", "contacts", "vocab", "g2g", "oov_weight", "order", "k_g2g")
    _require(cfg, "patterns", "contacts", "vocab")
    if not args.out:
        raise UsageError("missing required option: --out")
    vocab = load_vocab(cfg.vocab)
    lm = expand_word_arcs(build_pattern_lm(load_patterns(cfg.patterns), cfg.order), vocab)
    names = build_name_fst(_contacts(cfg), vocab, cfg.oov_weight)
    graph = replace_class_tag(lm, names)
    write_text(graph, args.out)
    graph.isymbols.write(f"{args.out}.isyms")
    graph.osymbols.write(f"{args.out}.osyms")
    out.write(f"wrote {args.out}: {graph.num_states} states, {graph.num_arcs()} arcs\n")
    return EXIT_OK


def cmd_query_trie(args, out) -> int:
    cfg = _merged(args, "contacts", "vocab", "g2g", "k_g2g")
    _require(cfg, "contacts", "vocab")
    vocab = load_vocab(cfg.vocab)
    trie = build_trie(_contacts(cfg), vocab)
    prefix = [vocab.id(p) for p in (args.prefix or "").split()]
    vec = trie_query(trie, prefix)
    out.write(" ".join(vocab.piece(i) for i in vec.nonzero()[0]) + "\n")
    return EXIT_OK


def cmd_g2g_expand(args, out) -> int:
    g2g = load_g2g(args.map)
    k = args.k if args.k is not None else _merged(args).k_g2g
    for line in args.stdin:
        for word in line.split():
            out.write(f"{word}\t{','.join(decode_variants(word, g2g, k))}\n")
    return EXIT_OK


def cmd_g2g_replace(args, out) -> int:
    cfg = _merged(args, "p", "seed")
    g2g = load_g2g(args.map)
    rng = random.Random(cfg.seed)
    for line in args.stdin:
        out.write(" ".join(train_replace(line.split(), g2g, cfg.p, rng)) + "\n")
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    cfg = _merged(args, "g2g", "seed")
    corpus = []
    with open(args.corpus, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            text, _, entity = line.partition("\t")
            corpus.append((text, entity.strip() or None))
    rng = random.Random(cfg.seed)
    for sim in simulate_contact_list(corpus, rng, _load_g2g(cfg)):
        record = {
            "reference": sim.reference,
            "target": sim.target,
            "target_removed": sim.target_removed,
            "target_swapped": sim.target_swapped,
            "contacts": [{"name": c.display, "spellings": [" ".join(s) for s in c.spellings]} for c in sim.contacts],
        }
        out.write(json.dumps(record, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_decode(args, out) -> int:
    cfg = _merged(args, "vocab", "contacts", "g2g", "proj", "beam", "lam", "nbest", "max_symbols", "k_g2g", "jobs")
    _require(cfg, "vocab")
    scorers = args.scorer or ([cfg.scorer] if cfg.scorer else [])
    if not scorers:
        raise UsageError("missing required option: --scorer")
    vocab = load_vocab(cfg.vocab)
    graph = None
    if args.graph:
        isyms = SymbolTable.read(f"{args.graph}.isyms") if Path(f"{args.graph}.isyms").exists() else piece_symbols(vocab)
        osyms = SymbolTable.read(f"{args.graph}.osyms") if Path(f"{args.graph}.osyms").exists() else None
        for i, p in enumerate(vocab.pieces):
            if isyms.get(p) != i + 2:
                raise ValueError(f"graph symbols do not match vocabulary at piece {p!r}")
        graph = read_text(args.graph, isyms, osyms)
    trie = proj = None
    if args.plm:
        _require(cfg, "contacts", "proj")
        trie = build_trie(_contacts(cfg), vocab)
        proj = load_projection(cfg.proj)
    dcfg = DecodeConfig(cfg.beam, cfg.lam, cfg.max_symbols, cfg.nbest, plm=bool(args.plm))

    def run_one(path):
        if str(path).endswith(".json"):
            scorer = ToyJoinerScorer(load_toy_joiner(path))
        else:
            scorer = load_table_scorer(path, vocab)
        return beam_decode(scorer, dcfg, graph, trie, proj)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(run_one, scorers))
    else:
        results = [run_one(p) for p in scorers]
    for path, hyps in zip(scorers, results):
        for rank, hyp in enumerate(hyps):
            record = {
                "utt": str(path),
                "rank": rank,
                "pieces": [vocab.piece(i) for i in hyp.pieces],
                "words": list(hyp.words),
                "score": hyp.score,
            }
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")

    parser = _Parser(
        prog="ctxbias",
        description="Contextual-biasing decoding toolkit.",
        epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, epilog=FORMATS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("tokenize", cmd_tokenize, "segment text read from stdin into WordPieces")
    p.add_argument("--vocab")
    p.add_argument("--mode", choices=["best", "sample"], default="best", help="Viterbi parse or subword-regularisation sample")
    p.add_argument("--l", type=int, help="n-best size for sampling (default 5)")
    p.add_argument("--alpha", type=float, help="sampling temperature (default 0.25)")
    p.add_argument("--seed", type=int)

    p = add("build-graph", cmd_build_graph, "build the class-based biasing graph")
    p.add_argument("--patterns")
    p.add_argument("--contacts")
    p.add_argument("--vocab")
    p.add_argument("--g2g")
    p.add_argument("--k", dest="k_g2g", type=int)
    p.add_argument("--oov-weight", dest="oov_weight", type=float, help="per-piece cost of the open-class path")
    p.add_argument("--order", type=int, help="n-gram order of the pattern LM")
    p.add_argument("--out")

    p = add("query-trie", cmd_query_trie, "print the pieces that may follow a prefix")
    p.add_argument("--contacts")
    p.add_argument("--vocab")
    p.add_argument("--g2g")
    p.add_argument("--k", dest="k_g2g", type=int)
    p.add_argument("--prefix", default="", help="space-separated prefix pieces")

    p = add("g2g-expand", cmd_g2g_expand, "list decode-time variants for words on stdin")
    p.add_argument("--map", required=True)
    p.add_argument("--k", type=int)

    p = add("g2g-replace", cmd_g2g_replace, "randomly replace words with G2G variants")
    p.add_argument("--map", required=True)
    p.add_argument("--p", type=float, help="replacement probability (default 0.2)")
    p.add_argument("--seed", type=int)

    p = add("simulate", cmd_simulate, "simulate per-utterance contact lists")
    p.add_argument("--corpus", required=True)
    p.add_argument("--g2g")
    p.add_argument("--seed", type=int)

    p = add("decode", cmd_decode, "beam-search decode table or toy-joiner scorers")
    p.add_argument("--scorer", action="append", help="scorer file; repeat for several utterances")
    p.add_argument("--graph", help="biasing graph written by build-graph")
    p.add_argument("--contacts", help="contacts file (needed with --plm)")
    p.add_argument("--vocab")
    p.add_argument("--g2g")
    p.add_argument("--k", dest="k_g2g", type=int)
    p.add_argument("--plm", action="store_true", help="enable the contact-trie PLM input")
    p.add_argument("--proj", help="PLM projection matrix file")
    p.add_argument("--beam", type=int, help="beam width (default 8)")
    p.add_argument("--lambda", dest="lam", type=float, help="LM fusion weight (default 1.0)")
    p.add_argument("--max-symbols", dest="max_symbols", type=int, help="max pieces emitted per frame (default 4)")
    p.add_argument("--nbest", type=int, help="hypotheses to print per utterance")
    p.add_argument("--jobs", type=int, help="worker threads")
    return parser


def run(argv=None, out=None, err=None, inp=None) -> int:
    """Run one command; returns the exit code instead of exiting."""
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:  # --help / --version
            return int(e.code or 0)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage())
        args.stdin = inp if inp is not None else sys.stdin
        return args.func(args, out)
    except UsageError as e:
        err.write(f"error: {e}\n")
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as e:
        err.write(f"error: {e}\n")
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
