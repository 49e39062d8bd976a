import math
from dataclasses import dataclass

from ..errors import EmptyEvalSet, OOVQuery
from .vocab import BOS, EOS, words_of


class NGramModel:
    """Backoff n-gram model with natural-log probabilities.

    ``probs[k]`` maps (k+1)-gram tuples to ln P(w | h); ``bows[k]`` maps
    (k+1)-word contexts to their ln backoff weight. Every vocabulary word and
    ``</s>`` has a unigram entry, so backoff always terminates.
    """

    def __init__(self, order, vocab, probs, bows, smoothing=""):
        if not 1 <= order:
            raise ValueError("order must be >= 1")
        self.order = order
        self.vocab = vocab
        self.probs = probs
        self.bows = bows
        self.smoothing = smoothing

    def __repr__(self):
        counts = ", ".join(str(len(p)) for p in self.probs)
        return f"NGramModel(order={self.order}, ngrams=[{counts}], smoothing={self.smoothing!r})"

    def _context(self, context):
        if self.order == 1:
            return ()
        ctx = list(context)[-(self.order - 1):]
        return tuple(self.vocab.resolve_context(w) for w in ctx)

    def _logprob(self, ctx, word):
        total = 0.0
        while True:
            p = self.probs[len(ctx)].get(ctx + (word,))
            if p is not None:
                return total + p
            if not ctx:
                raise OOVQuery(word)
            total += self.bows[len(ctx) - 1].get(ctx, 0.0)
            ctx = ctx[1:]

    def logprob(self, context, word):
        if word == BOS:
            raise OOVQuery(word)
        return self._logprob(self._context(context), self.vocab.resolve(word))

    def distribution(self, context):
        """ln P(w | context) for every predictable event, in vocabulary order."""
        ctx = self._context(context)
        return {w: self._logprob(ctx, w) for w in self.vocab.events}


def logprob(model, context, word):
    """Natural-log probability of ``word`` after ``context`` under any model."""
    return model.logprob(context, word)


def scored_positions(model, text):
    """Yield ``(utterance_index, position, word, logprob)`` for every scored event.

    Each non-empty utterance contributes its words followed by ``</s>``;
    ``<s>`` is context only. Empty (untranscribed) utterances are skipped.
    """
    for ui, item in enumerate(text):
        words = words_of(item)
        if not words:
            continue
        history = [BOS]
        for pos, w in enumerate(words + [EOS]):
            yield ui, pos, w, model.logprob(history, w)
            history.append(w)


@dataclass(frozen=True)
class Perplexity:
    pp: float
    n_scored: int
    total_logprob: float

    def to_dict(self):
        return {"pp": self.pp, "n_scored": self.n_scored, "total_logprob": self.total_logprob}


def perplexity(model, text):
    total = 0.0
    n = 0
    for _, _, _, lp in scored_positions(model, text):
        total += lp
        n += 1
    if n == 0:
        raise EmptyEvalSet("no scorable utterances")
    return Perplexity(math.exp(-total / n), n, total)


def uniform_model(vocab):
    """Order-1 model giving every word and ``</s>`` the same probability."""
    lp = -math.log(len(vocab.events))
    return NGramModel(1, vocab, [{(w,): lp for w in vocab.events}], [], smoothing="uniform")
