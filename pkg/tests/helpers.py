"""Small builders shared by the test modules."""

import numpy as np

from cswitch.corpus import Corpus, Token, Utterance

LANGS = ("en", "zu", "xh", "st", "tn")


def toks(text):
    """``"a/en b/zu"`` -> tokens."""
    out = []
    for item in text.split():
        w, _, lang = item.rpartition("/")
        out.append(Token(w, lang))
    return tuple(out)


def utt(uid, text, duration=1.0, speaker="spk"):
    return Utterance(uid, speaker, duration, toks(text))


def corpus(*texts, langs=LANGS, name="test"):
    """Corpus from tagged strings; ids u1, u2, ..."""
    return Corpus(langs, [utt(f"u{k}", t) for k, t in enumerate(texts, 1)], name)


def random_tagged_corpus(rng, n_utts, vocab_size, langs=("en", "zu"), max_len=12, switch_p=0.3):
    """Random code-switched corpus; words are ``<lang><k>`` so each has one language."""
    words = {l: [f"{l}{k}" for k in range(max(1, vocab_size // len(langs)))] for l in langs}
    utts = []
    for u in range(n_utts):
        n = int(rng.integers(1, max_len + 1))
        lang = langs[int(rng.integers(len(langs)))]
        tokens = []
        for _ in range(n):
            if rng.random() < switch_p:
                lang = langs[int(rng.integers(len(langs)))]
            pool = words[lang]
            # skewed choice so some words repeat
            k = min(int(rng.geometric(0.3)) - 1, len(pool) - 1)
            tokens.append(Token(pool[k], lang))
        utts.append(Utterance(f"r{u:04d}", "spk", 1.0, tuple(tokens)))
    return Corpus(tuple(langs), utts, "random")


def rng(seed):
    return np.random.default_rng(seed)


# Five reference/hypothesis pairs over en/zu with hand-counted switch metrics.
# Switch points: ukudla (U1), very (U2), now and hamba (U3), okay (U4), imoto (U5).
SWITCH_REFS = [
    "I/en want/en ukudla/zu manje/zu",
    "ngiyabonga/zu very/en much/en",
    "hamba/zu now/en hamba/zu",
    "yebo/zu okay/en",
    "the/en car/en imoto/zu",
]
SWITCH_HYPS = [
    "I/en want/en ukudla/zu manje/zu",
    "ngiyabonga/zu vary/en much/en",
    "hamba/zu hamba/zu",
    "yebo/zu ngiyabonga/zu",
    "a/en car/en imoto/zu uh/en",
]
# (label, numerator, denominator)
SWITCH_EXPECTED = [
    ("Eng token correct", 4, 8),
    ("Zul token correct", 7, 7),
    ("Word correct after switch", 3, 6),
    ("Zul word correct after switch", 3, 3),
    ("English word correct after switch", 0, 3),
    ("Language correct after switch", 4, 6),
    ("Code-switch bigram correct", 2, 6),
]


# "PASS C<n> <title>" / "FAIL C<n> <title>" lines, printed by conftest at the end
ACCEPTANCE_LINES = []
