import math

import numpy as np

from .. import _accel
from ..errors import EmptyEvalSet, VocabMismatch
from .model import scored_positions


class MixtureLM:
    """Linear interpolation of models sharing one vocabulary.

    Components may themselves be mixtures, so incremental interpolation
    (fit a pair, then interpolate the result with another model) composes.
    """

    def __init__(self, components, weights, history=None):
        components = list(components)
        weights = [float(w) for w in weights]
        if not components or len(components) != len(weights):
            raise ValueError("need one weight per component")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {weights}")
        vocab = components[0].vocab
        for c in components[1:]:
            if c.vocab != vocab:
                raise VocabMismatch("mixture components must share a vocabulary")
        self.components = components
        self.weights = weights
        self.vocab = vocab
        self.order = max(c.order for c in components)
        # per-position mean log-likelihood at each EM iteration, if fitted
        self.history = list(history) if history is not None else None
        self._active = [(math.log(w), c) for w, c in zip(weights, components) if w > 0]

    def __repr__(self):
        ws = ", ".join(f"{w:.4f}" for w in self.weights)
        return f"MixtureLM({len(self.components)} components, weights=[{ws}])"

    def logprob(self, context, word):
        terms = [lw + c.logprob(context, word) for lw, c in self._active]
        top = max(terms)
        if len(terms) == 1:
            return top
        return top + math.log(sum(math.exp(t - top) for t in terms))

    @property
    def dev_perplexity(self):
        if not self.history:
            return None
        return math.exp(-self.history[-1])


def component_probs(components, text):
    """(components, positions) matrix of per-event probabilities on ``text``."""
    rows = [[math.exp(lp) for *_, lp in scored_positions(c, text)] for c in components]
    return np.array(rows, dtype=np.float64)


def fit_weights(components, dev, max_iter=100, tol=1e-6):
    """EM estimate of interpolation weights minimizing ``dev`` perplexity.

    Starts from uniform weights and stops once the per-event log-likelihood
    improves by less than ``tol`` or after ``max_iter`` updates.
    """
    components = list(components)
    if len(components) < 2:
        raise ValueError("need at least two components")
    vocab = components[0].vocab
    for c in components[1:]:
        if c.vocab != vocab:
            raise VocabMismatch("components do not share a vocabulary")
    probs = component_probs(components, dev)
    if probs.shape[1] == 0:
        raise EmptyEvalSet("development set has no scorable utterances")
    init = np.full(len(components), 1.0 / len(components))
    weights, history = _accel.em_fit(probs, init, max_iter, tol)
    weights = [float(w) for w in weights]
    # renormalize in Python floats so the sum check is exact to 1e-12
    total = math.fsum(weights)
    weights = [w / total for w in weights]
    return MixtureLM(components, weights, history=[float(h) for h in history])
