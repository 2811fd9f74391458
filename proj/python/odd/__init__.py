from ._core import (
    FusionEngine,
    OddError,
    PrefixTrie,
    Vocab,
    calibrate,
    continuity,
    evaluate_pair,
    run_cli,
    softmax,
    trie_prior,
)

__all__ = [
    "FusionEngine",
    "OddError",
    "PrefixTrie",
    "Vocab",
    "calibrate",
    "continuity",
    "evaluate_pair",
    "run_cli",
    "softmax",
    "trie_prior",
]
__version__ = "0.1.0"
