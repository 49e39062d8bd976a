"""ARPA backoff model files (log10 probabilities and backoff weights)."""

import math
import re

from ..errors import ArpaFormatError
from .model import NGramModel
from .vocab import BOS, EOS, UNK, Vocabulary

LN10 = math.log(10.0)
NO_PROB = -99.0

_COUNT_RE = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_RE = re.compile(r"^\\(\d+)-grams:$")


def _fmt(x, precision):
    s = f"{x:.{precision}f}"
    return "0" if float(s) == 0.0 else s


def write_arpa(model, stream, precision=7):
    """Write ``model`` in ARPA format; unigrams follow vocabulary order."""
    probs, bows = model.probs, model.bows
    order = model.order
    bos_bow = bows[0].get((BOS,)) if order > 1 else None
    sections = []
    for k in range(order):
        lines = []
        if k == 0:
            row = [_fmt(NO_PROB, precision), BOS]
            if bos_bow is not None:
                row.append(_fmt(bos_bow / LN10, precision))
            lines.append("\t".join(row))
            keys = [(w,) for w in model.vocab.events if (w,) in probs[0]]
        else:
            keys = sorted(probs[k])
        for g in keys:
            row = [_fmt(probs[k][g] / LN10, precision), " ".join(g)]
            if k < order - 1 and g in bows[k]:
                row.append(_fmt(bows[k][g] / LN10, precision))
            lines.append("\t".join(row))
        sections.append(lines)

    stream.write("\\data\\\n")
    for k, lines in enumerate(sections):
        stream.write(f"ngram {k + 1}={len(lines)}\n")
    for k, lines in enumerate(sections):
        stream.write(f"\n\\{k + 1}-grams:\n")
        for line in lines:
            stream.write(line + "\n")
    stream.write("\n\\end\\\n")


def read_arpa(stream, vocab=None):
    """Parse an ARPA file into an :class:`NGramModel`.

    Without ``vocab`` the vocabulary is the unigram list (languages unknown);
    with one, the file must cover exactly its words.
    """
    lines = [(i, raw.strip()) for i, raw in enumerate(stream, 1)]
    lines = [(i, s) for i, s in lines if s]
    pos = 0

    def fail(reason, at=None):
        line = at if at is not None else (lines[pos][0] if pos < len(lines) else len(lines))
        raise ArpaFormatError(line, reason)

    # skip free text before the header, as toolkits do
    while pos < len(lines) and lines[pos][1] != "\\data\\":
        pos += 1
    if pos == len(lines):
        fail("missing \\data\\ header", at=1)
    pos += 1
    declared = {}
    while pos < len(lines):
        m = _COUNT_RE.match(lines[pos][1])
        if not m:
            break
        declared[int(m.group(1))] = int(m.group(2))
        pos += 1
    if not declared:
        fail("no 'ngram N=count' lines")
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)):
        fail("n-gram orders must be contiguous from 1")

    probs = [dict() for _ in range(order)]
    bows = [dict() for _ in range(order - 1)]
    unigram_words = []
    for k in range(order):
        if pos >= len(lines):
            fail(f"missing \\{k + 1}-grams: section")
        m = _SECTION_RE.match(lines[pos][1])
        if not m or int(m.group(1)) != k + 1:
            fail(f"expected \\{k + 1}-grams: section")
        pos += 1
        n_read = 0
        while pos < len(lines) and not lines[pos][1].startswith("\\"):
            lineno, text = lines[pos]
            fields = text.split()
            if len(fields) not in (k + 2, k + 3):
                fail(f"expected {k + 1} words per {k + 1}-gram line", at=lineno)
            try:
                lp = float(fields[0])
                bow = float(fields[k + 2]) if len(fields) == k + 3 else None
            except ValueError:
                fail("non-numeric probability or backoff weight", at=lineno)
            if lp > 0:
                fail("log probability above zero", at=lineno)
            gram = tuple(fields[1:k + 2])
            if bow is not None and k == order - 1:
                fail("backoff weight on a highest-order n-gram", at=lineno)
            if k == 0:
                unigram_words.append(gram[0])
            if gram[-1] != BOS:
                if gram in probs[k]:
                    fail(f"duplicate n-gram {' '.join(gram)!r}", at=lineno)
                probs[k][gram] = lp * LN10
            if bow is not None:
                bows[k][gram] = bow * LN10
            n_read += 1
            pos += 1
        if n_read != declared[k + 1]:
            fail(f"header declares {declared[k + 1]} {k + 1}-grams but section has {n_read}")
    if pos >= len(lines) or lines[pos][1] != "\\end\\":
        fail("missing \\end\\ marker")

    words = [w for w in unigram_words if w not in (BOS, EOS)]
    if vocab is None:
        vocab = Vocabulary(words, open_vocab=UNK in words)
    else:
        extra = set(words) - set(vocab.words)
        missing = set(vocab.words) - set(words)
        if extra or missing:
            sample = sorted(extra or missing)[0]
            raise ArpaFormatError(0, f"vocabulary mismatch with ARPA unigrams, e.g. {sample!r}")
    if (EOS,) not in probs[0]:
        raise ArpaFormatError(0, "no </s> unigram")
    return NGramModel(order, vocab, probs, bows, smoothing="arpa")
