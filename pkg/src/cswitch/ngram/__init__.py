"""Backoff n-gram language models over a closed bilingual vocabulary."""

from .arpa import read_arpa, write_arpa
from .mixture import MixtureLM, fit_weights
from .model import NGramModel, Perplexity, logprob, perplexity, scored_positions, uniform_model
from .train import SMOOTHERS, train
from .vocab import BOS, EOS, UNK, UNKNOWN_LANG, Vocabulary, read_vocab, write_vocab

__all__ = [
    "BOS",
    "EOS",
    "UNK",
    "UNKNOWN_LANG",
    "SMOOTHERS",
    "MixtureLM",
    "NGramModel",
    "Perplexity",
    "Vocabulary",
    "fit_weights",
    "logprob",
    "perplexity",
    "read_arpa",
    "read_vocab",
    "scored_positions",
    "train",
    "uniform_model",
    "write_arpa",
    "write_vocab",
]


def load_arpa(path, vocab=None):
    with open(path, encoding="utf-8") as f:
        return read_arpa(f, vocab)


def save_arpa(model, path):
    with open(path, "w", encoding="utf-8") as f:
        write_arpa(model, f)


def load_vocab(path, open_vocab=False):
    with open(path, encoding="utf-8") as f:
        return read_vocab(f, open_vocab=open_vocab)
