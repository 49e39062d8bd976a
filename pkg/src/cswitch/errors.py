"""Exception hierarchy shared by all cswitch modules.

Everything a user can trigger with bad input derives from :class:`DataError`
so the command line can map it to a single exit status.
"""


class CswitchError(Exception):
    """Base class for all errors raised by this package."""


class DataError(CswitchError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateId(ParseError):
    pass


class UnknownLang(ParseError):
    pass


class UnresolvedId(DataError):
    pass


class CrossCorpus(DataError):
    pass


class OOVInTraining(DataError):
    def __init__(self, word):
        self.word = word
        super().__init__(f"training token {word!r} is not in the vocabulary")


class OOVQuery(DataError):
    def __init__(self, word):
        self.word = word
        super().__init__(f"query word {word!r} is not in the vocabulary")


class InsufficientData(DataError):
    pass


class EmptyEvalSet(DataError):
    pass


class VocabMismatch(DataError):
    pass


class ArpaFormatError(ParseError):
    pass


class EmptyReference(DataError):
    pass


class IdMismatch(DataError):
    pass


class NoResults(DataError):
    pass


class DecoderProtocolError(DataError):
    """An external decoder timed out or answered with a malformed line."""
