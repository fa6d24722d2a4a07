"""Contextual biasing for transducer decoding: WordPiece tokenization with
sub-word sampling, class-based WFST shallow fusion with OOV failure arcs and
G2G variants, and a trie-based personalized LM fed into the joiner."""

__version__ = "0.1.0"

from .tokenizer import (
    Segmentation,
    SegmentationError,
    Vocabulary,
    VocabularyError,
    best_parse,
    detokenize,
    load_vocab,
    nbest_parses,
    sample_parse,
    tokenize_sentence,
)
from .fstlib import EPS, PHI, Arc, FstError, SymbolTable, Wfst, determinize, enumerate_language, minimize, rmepsilon
from .biasing import (
    Contact,
    LmState,
    PatternCorpus,
    build_name_fst,
    build_pattern_lm,
    contact,
    expand_word_arcs,
    lm_advance,
    lm_start,
    replace_class_tag,
)
from .plm import ContactTrie, PlmProjection, build_trie, plm_embed, trie_query, trie_query_ge2
from .g2g import G2GMap, decode_variants, load_g2g, train_replace
from .scorers import TableScorer, ToyJoiner, ToyJoinerScorer, toy_joiner_logits
from .decoder import DecodeConfig, DecodeResult, beam_decode, fuse
from .simulation import simulate_contact_list
