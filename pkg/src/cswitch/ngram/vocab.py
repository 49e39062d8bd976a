from ..corpus import Token, Utterance, nfc
from ..errors import OOVQuery, ParseError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
UNKNOWN_LANG = "?"


class Vocabulary:
    """Closed word list with a language for every word.

    ``<s>`` and ``</s>`` are implicit and carry no language. With
    ``open_vocab=True`` an ``<unk>`` word absorbs out-of-vocabulary tokens;
    the default is to reject them.
    """

    def __init__(self, words, lang_of=None, open_vocab=False):
        lang_of = dict(lang_of or {})
        ordered = []
        seen = set()
        for w in words:
            w = nfc(w)
            if w in (BOS, EOS):
                continue
            if w not in seen:
                seen.add(w)
                ordered.append(w)
        if open_vocab and UNK not in seen:
            ordered.append(UNK)
            seen.add(UNK)
        self.words = tuple(ordered)
        self.open_vocab = open_vocab or UNK in seen
        self.lang_of = {w: lang_of.get(w, UNKNOWN_LANG) for w in self.words}
        self._set = frozenset(self.words)

    @classmethod
    def from_corpus(cls, *corpora, open_vocab=False):
        words, lang_of = [], {}
        for corpus in corpora:
            for utt in corpus:
                for t in utt.tokens:
                    if t.surface not in lang_of:
                        words.append(t.surface)
                        lang_of[t.surface] = t.lang
        return cls(words, lang_of, open_vocab=open_vocab)

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def __contains__(self, word):
        return word in self._set

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._set == other._set and self.open_vocab == other.open_vocab

    def __hash__(self):
        return hash((self._set, self.open_vocab))

    def __repr__(self):
        return f"Vocabulary({len(self)} words, open={self.open_vocab})"

    @property
    def events(self):
        """Everything a model can predict: the words plus ``</s>``."""
        return self.words + (EOS,)

    def lang(self, word):
        return self.lang_of.get(word, UNKNOWN_LANG)

    def resolve(self, word):
        """Map a query word to its in-vocabulary form or raise :class:`OOVQuery`."""
        if word in self._set or word == EOS:
            return word
        w = nfc(word)
        if w in self._set:
            return w
        if self.open_vocab and w != BOS:
            return UNK
        raise OOVQuery(word)

    def resolve_context(self, word):
        if word == BOS:
            return BOS
        return self.resolve(word)


def read_vocab(stream, open_vocab=False):
    words, lang_of = [], {}
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError(lineno, "expected '<word>\\t<lang>'")
        words.append(parts[0])
        lang_of[nfc(parts[0])] = parts[1]
    return Vocabulary(words, lang_of, open_vocab=open_vocab)


def write_vocab(vocab, stream):
    for w in vocab.words:
        stream.write(f"{w}\t{vocab.lang(w)}\n")


def words_of(item):
    """Surface words of an utterance, a token list, or a list of strings."""
    if isinstance(item, Utterance):
        return item.words
    return [t.surface if isinstance(t, Token) else t for t in item]
