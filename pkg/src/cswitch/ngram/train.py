"""Count-based training: interpolated modified Kneser-Ney and Witten-Bell.

Both estimators are interpolated with the next lower order and finally with a
uniform distribution over the vocabulary plus ``</s>``, then stored in backoff
form (interpolated probability for seen n-grams, interpolation mass as the
backoff weight), which is exactly what ARPA files hold.
"""

import math
import warnings
from collections import Counter, defaultdict

from ..errors import InsufficientData, OOVInTraining
from .model import NGramModel
from .vocab import BOS, EOS, UNK, Vocabulary, words_of

SMOOTHERS = ("kneser-ney", "witten-bell")


def _sentences(corpus, vocab):
    for item in corpus:
        words = words_of(item)
        if not words:
            continue
        out = []
        for w in words:
            if w in vocab:
                out.append(w)
            elif vocab.open_vocab:
                out.append(UNK)
            else:
                raise OOVInTraining(w)
        yield out


def count_ngrams(sentences, order):
    """Raw counts for orders 1..order; ``counts[k]`` holds (k+1)-grams."""
    counts = [Counter() for _ in range(order)]
    for words in sentences:
        padded = [BOS] + list(words) + [EOS]
        for i in range(1, len(padded)):
            for k in range(min(order, i + 1)):
                counts[k][tuple(padded[i - k:i + 1])] += 1
    return counts


def kn_adjusted_counts(counts):
    """Highest order and ``<s>``-initial n-grams keep raw counts; the rest use
    the number of distinct left extensions."""
    order = len(counts)
    adjusted = [None] * order
    adjusted[-1] = Counter(counts[-1])
    for k in range(order - 1):
        left = Counter(g[1:] for g in counts[k + 1])
        adj = Counter()
        for g, c in counts[k].items():
            adj[g] = c if g[0] == BOS else left[g]
        adjusted[k] = adj
    return adjusted


def modified_kn_discounts(counts):
    """Discounts (D1, D2, D3+) from count-of-counts; None when undefined."""
    coc = Counter(c for c in counts.values() if 1 <= c <= 4)
    n1, n2, n3, n4 = (coc[i] for i in (1, 2, 3, 4))
    if not (n1 and n2 and n3 and n4):
        return None
    y = n1 / (n1 + 2 * n2)
    d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    if not (0 < d[0] < 1 and 0 < d[1] < 2 and 0 < d[2] < 3):
        return None
    return d


def _by_context(counts):
    grouped = defaultdict(dict)
    for g, c in counts.items():
        if c > 0:
            grouped[g[:-1]][g[-1]] = c
    return grouped


def _interpolate(counts, events, discount):
    """Interpolate each order with the one below, bottom-up.

    ``discount(order_index, count)`` is subtracted from every seen count (Kneser-Ney);
    ``discount=None`` selects Witten-Bell, where the lower-order mass is the
    number of distinct followers.
    """
    order = len(counts)
    probs = [dict() for _ in range(order)]
    bows = [dict() for _ in range(order - 1)]
    model = NGramModel(order, None, probs, bows)
    uniform = 1.0 / len(events)
    for k in range(order):
        for ctx, followers in sorted(_by_context(counts[k]).items()):
            if discount is None:
                denom = sum(followers.values()) + len(followers)
                numer = dict(followers)
                gamma = len(followers) / denom
            else:
                denom = sum(followers.values())
                numer = {w: c - discount(k, c) for w, c in followers.items()}
                gamma = sum(discount(k, c) for c in followers.values()) / denom
            if k == 0:
                for w in events:
                    probs[0][(w,)] = math.log(numer.get(w, 0.0) / denom + gamma * uniform)
                continue
            for w in followers:
                lower = math.exp(model._logprob(ctx[1:], w))
                probs[k][ctx + (w,)] = math.log(numer[w] / denom + gamma * lower)
            bows[k - 1][ctx] = math.log(gamma)
    if not probs[0]:
        for w in events:
            probs[0][(w,)] = math.log(uniform)
    return probs, bows


def _kneser_ney(counts, events):
    adjusted = kn_adjusted_counts(counts)
    discounts = []
    for k, adj in enumerate(adjusted):
        d = modified_kn_discounts(adj)
        if d is None:
            raise InsufficientData(f"modified Kneser-Ney discounts undefined for order {k + 1}")
        discounts.append(d)
    return _interpolate(adjusted, events, lambda k, c: discounts[k][min(c, 3) - 1])


def train(corpus, order=3, smoothing="kneser-ney", vocab=None, fallback=True):
    """Train a backoff model on ``corpus`` (utterances or token lists).

    Modified Kneser-Ney needs non-zero counts-of-counts 1..4 at every order.
    When they are missing the trainer falls back to Witten-Bell with a
    warning, or raises :class:`InsufficientData` if ``fallback`` is False.
    """
    if not 1 <= order <= 5:
        raise ValueError("order must be in [1, 5]")
    if smoothing not in SMOOTHERS:
        raise ValueError(f"unknown smoothing {smoothing!r}; choose from {SMOOTHERS}")
    if vocab is None:
        vocab = Vocabulary.from_corpus(corpus)
    counts = count_ngrams(_sentences(corpus, vocab), order)
    events = vocab.events
    used = smoothing
    if smoothing == "kneser-ney":
        try:
            probs, bows = _kneser_ney(counts, events)
        except InsufficientData as e:
            if not fallback:
                raise
            warnings.warn(f"{e}; falling back to Witten-Bell", stacklevel=2)
            used = "witten-bell"
    if used == "witten-bell":
        probs, bows = _interpolate(counts, events, None)
    return NGramModel(order, vocab, probs, bows, smoothing=used)
