"""Language-tagged transcripts, dataset manifests and corpus statistics."""

import json
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import CrossCorpus, DataError, DuplicateId, ParseError, UnknownLang, UnresolvedId

DEFAULT_LANGS = ("en", "zu", "xh", "st", "tn")

LANG_NAMES = {
    "en": "English",
    "zu": "isiZulu",
    "xh": "isiXhosa",
    "st": "Sesotho",
    "tn": "Setswana",
}

FORMATS = ("jsonl", "tagged-text")

_LANG_RE = re.compile(r"^[a-z][a-z0-9_-]*$")
_PROVENANCE_RE = re.compile(r"^(ManT|OOD|AutoT@([1-9][0-9]*))$")


def nfc(text):
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class Token:
    surface: str
    lang: str

    def __post_init__(self):
        if not self.surface or any(c.isspace() for c in self.surface):
            raise ValueError(f"invalid token surface {self.surface!r}")
        if not self.lang:
            raise ValueError("empty language tag")
        object.__setattr__(self, "surface", nfc(self.surface))

    def __str__(self):
        return f"{self.surface}/{self.lang}"


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker: str
    duration_s: float
    tokens: tuple = ()

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id):
            raise ValueError(f"invalid utterance id {self.id!r}")
        if not self.duration_s >= 0:
            raise ValueError(f"negative duration for {self.id}")
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def words(self):
        return [t.surface for t in self.tokens]

    @property
    def langs(self):
        return [t.lang for t in self.tokens]

    @property
    def is_transcribed(self):
        return bool(self.tokens)

    @property
    def is_code_switched(self):
        return len({t.lang for t in self.tokens}) >= 2


@dataclass(frozen=True)
class Corpus:
    """Immutable, id-indexed collection of utterances over a language registry."""

    langs: tuple
    utterances: tuple = ()
    name: str = ""
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "langs", tuple(self.langs))
        object.__setattr__(self, "utterances", tuple(self.utterances))
        index = {}
        registry = set(self.langs)
        for utt in self.utterances:
            if utt.id in index:
                raise DuplicateId(0, f"duplicate utterance id {utt.id!r}")
            for tok in utt.tokens:
                if tok.lang not in registry:
                    raise UnknownLang(0, f"language {tok.lang!r} not in registry {list(self.langs)}")
            index[utt.id] = utt
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __contains__(self, utt_id):
        return utt_id in self._index

    def __getitem__(self, utt_id):
        try:
            return self._index[utt_id]
        except KeyError:
            raise UnresolvedId(f"utterance {utt_id!r} not in corpus {self.name!r}") from None

    @property
    def ids(self):
        return [u.id for u in self.utterances]

    def subset(self, ids):
        return Corpus(self.langs, [self[i] for i in ids], self.name)


# --- parsing ---------------------------------------------------------------


def _check_langs(langs, line):
    langs = tuple(langs)
    for code in langs:
        if not isinstance(code, str) or not _LANG_RE.match(code):
            raise ParseError(line, f"bad language code {code!r}")
    if len(set(langs)) != len(langs):
        raise ParseError(line, "duplicate language code in header")
    return langs


def _duration(value, line):
    try:
        d = float(value)
    except (TypeError, ValueError):
        raise ParseError(line, f"bad duration {value!r}") from None
    if not d >= 0 or d == float("inf"):
        raise ParseError(line, f"bad duration {value!r}")
    return d


def _make_token(surface, lang, registry, line):
    if not isinstance(surface, str) or not surface or any(c.isspace() for c in surface):
        raise ParseError(line, f"bad token surface {surface!r}")
    if lang not in registry:
        raise UnknownLang(line, f"unknown language {lang!r}")
    return Token(surface, lang)


def _parse_jsonl(lines, name):
    langs = None
    utts = []
    seen = set()
    for lineno, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(lineno, f"invalid JSON: {e.msg}") from None
        if not isinstance(obj, dict):
            raise ParseError(lineno, "expected a JSON object")
        if langs is None:
            if "langs" not in obj or not isinstance(obj["langs"], list):
                raise ParseError(lineno, 'first line must be a {"langs": [...]} header')
            langs = _check_langs(obj["langs"], lineno)
            registry = set(langs)
            continue
        try:
            uid, spk, dur, toks = obj["id"], obj["speaker"], obj["duration_s"], obj["tokens"]
        except KeyError as e:
            raise ParseError(lineno, f"missing field {e.args[0]!r}") from None
        if not isinstance(uid, str) or not uid or any(c.isspace() for c in uid):
            raise ParseError(lineno, f"bad utterance id {uid!r}")
        if not isinstance(spk, str):
            raise ParseError(lineno, "speaker must be a string")
        if not isinstance(toks, list):
            raise ParseError(lineno, "tokens must be a list")
        tokens = []
        for t in toks:
            if not isinstance(t, dict) or "w" not in t or "l" not in t:
                raise ParseError(lineno, 'tokens must be {"w": ..., "l": ...} objects')
            tokens.append(_make_token(t["w"], t["l"], registry, lineno))
        if uid in seen:
            raise DuplicateId(lineno, f"duplicate utterance id {uid!r}")
        seen.add(uid)
        utts.append(Utterance(uid, spk, _duration(dur, lineno), tokens))
    if langs is None:
        langs = ()
    return Corpus(langs, utts, name)


def _parse_tagged(lines, name, langs):
    registry_locked = False
    langs = tuple(langs)
    registry = set(langs)
    utts = []
    seen = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            directive = line[1:].strip()
            if directive.startswith("langs:"):
                if registry_locked:
                    raise ParseError(lineno, "language header must precede utterances")
                langs = _check_langs(directive[len("langs:"):].split(), lineno)
                registry = set(langs)
            continue
        registry_locked = True
        fields = line.split()
        if len(fields) < 3:
            raise ParseError(lineno, "expected '<id> <speaker> <duration_s> <word>/<lang> ...'")
        uid, spk, dur = fields[:3]
        tokens = []
        for item in fields[3:]:
            surface, sep, lang = item.rpartition("/")
            if not sep:
                raise ParseError(lineno, f"token {item!r} lacks a /lang tag")
            tokens.append(_make_token(surface, lang, registry, lineno))
        if uid in seen:
            raise DuplicateId(lineno, f"duplicate utterance id {uid!r}")
        seen.add(uid)
        utts.append(Utterance(uid, spk, _duration(dur, lineno), tokens))
    return Corpus(langs, utts, name)


def parse_corpus(stream, format="jsonl", name="", langs=None):
    """Read a corpus from a text stream.

    JSONL input declares its languages in a mandatory header line. Tagged text
    may declare them with a ``#langs: en zu`` comment before the first
    utterance; otherwise ``langs`` (default :data:`DEFAULT_LANGS`) is used.
    """
    if format == "jsonl":
        return _parse_jsonl(stream, name)
    if format == "tagged-text":
        return _parse_tagged(stream, name, DEFAULT_LANGS if langs is None else langs)
    raise ValueError(f"unknown corpus format {format!r}")


def guess_format(path):
    path = str(path)
    return "jsonl" if path.endswith((".jsonl", ".json")) else "tagged-text"


def load_corpus(path, format=None, name=None):
    format = format or guess_format(path)
    with open(path, encoding="utf-8") as f:
        return parse_corpus(f, format, name=str(path) if name is None else name)


def write_corpus(corpus, stream, format="jsonl"):
    if format == "jsonl":
        stream.write(json.dumps({"langs": list(corpus.langs)}) + "\n")
        for u in corpus:
            obj = {
                "id": u.id,
                "speaker": u.speaker,
                "duration_s": u.duration_s,
                "tokens": [{"w": t.surface, "l": t.lang} for t in u.tokens],
            }
            stream.write(json.dumps(obj, ensure_ascii=False) + "\n")
    elif format == "tagged-text":
        stream.write("#langs: " + " ".join(corpus.langs) + "\n")
        for u in corpus:
            if not u.speaker or any(c.isspace() for c in u.speaker):
                raise DataError(f"speaker {u.speaker!r} cannot be written as tagged text")
            fields = [u.id, u.speaker, repr(float(u.duration_s))] + [str(t) for t in u.tokens]
            stream.write(" ".join(fields) + "\n")
    else:
        raise ValueError(f"unknown corpus format {format!r}")


def save_corpus(corpus, path, format=None):
    with open(path, "w", encoding="utf-8") as f:
        write_corpus(corpus, f, format or guess_format(path))


# --- manifests -------------------------------------------------------------


def provenance_rank(label):
    """Sort key for collision precedence: manual, then out-of-domain, then later passes."""
    m = _PROVENANCE_RE.match(label)
    if m is None:
        raise ValueError(f"bad provenance {label!r}")
    if label == "ManT":
        return (0, 0)
    if label == "OOD":
        return (1, 0)
    return (2, -int(m.group(2)))


def autot(pass_index):
    return f"AutoT@{pass_index}"


@dataclass(frozen=True)
class Manifest:
    name: str
    entries: tuple = ()
    source: str = ""

    def __post_init__(self):
        entries = tuple((str(u), str(p)) for u, p in self.entries)
        seen = set()
        for uid, prov in entries:
            provenance_rank(prov)
            if uid in seen:
                raise DuplicateId(0, f"duplicate utterance id {uid!r} in manifest {self.name!r}")
            seen.add(uid)
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self):
        return [u for u, _ in self.entries]

    def provenance(self):
        return dict(self.entries)

    def check(self, corpus):
        missing = [u for u in self.ids if u not in corpus]
        if missing:
            raise UnresolvedId(
                f"manifest {self.name!r}: {len(missing)} ids not in corpus, e.g. {missing[0]!r}"
            )
        return self

    def duration_s(self, corpus):
        return sum(corpus[u].duration_s for u in self.ids)


def union(manifests, name="union"):
    """Pool manifests; on id collisions the higher-precedence provenance wins."""
    manifests = list(manifests)
    sources = {m.source for m in manifests}
    if len(sources) > 1:
        raise CrossCorpus(f"cannot pool manifests from different corpora: {sorted(sources)}")
    best = {}
    for m in manifests:
        for uid, prov in m.entries:
            if uid not in best or provenance_rank(prov) < provenance_rank(best[uid]):
                best[uid] = prov
    source = sources.pop() if sources else ""
    return Manifest(name, sorted(best.items()), source)


def read_manifest(stream, name="", source=None):
    entries = []
    header_source = ""
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            text = line[1:].strip()
            if text.startswith("source:"):
                header_source = text[len("source:"):].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ParseError(lineno, "expected '<utt_id>\\t<provenance>'")
        if not _PROVENANCE_RE.match(parts[1]):
            raise ParseError(lineno, f"bad provenance {parts[1]!r}")
        entries.append((parts[0], parts[1]))
    try:
        return Manifest(name, entries, header_source if source is None else source)
    except DuplicateId as e:
        raise DuplicateId(0, e.reason) from None


def write_manifest(manifest, stream):
    if manifest.source:
        stream.write(f"# source: {manifest.source}\n")
    for uid, prov in manifest.entries:
        stream.write(f"{uid}\t{prov}\n")


def load_manifest(path, name=None, source=None):
    with open(path, encoding="utf-8") as f:
        return read_manifest(f, name=str(path) if name is None else name, source=source)


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as f:
        write_manifest(manifest, f)


# --- statistics ------------------------------------------------------------


@dataclass
class LangStats:
    mono_s: float = 0.0
    cs_s: float = 0.0
    tokens: int = 0
    types: int = 0

    @property
    def mono_min(self):
        return self.mono_s / 60.0

    @property
    def cs_min(self):
        return self.cs_s / 60.0

    @property
    def subtotal_min(self):
        return self.mono_min + self.cs_min


@dataclass
class CorpusStats:
    """Per-language durations and counts.

    A code-switched utterance credits its full duration to the CS column of
    every language it contains, so the CS total can exceed the deduplicated
    corpus duration.
    """

    langs: dict
    corpus_s: float = 0.0
    untranscribed_s: float = 0.0
    n_utterances: int = 0

    @property
    def total(self):
        return LangStats(
            mono_s=sum(s.mono_s for s in self.langs.values()),
            cs_s=sum(s.cs_s for s in self.langs.values()),
            tokens=sum(s.tokens for s in self.langs.values()),
            types=sum(s.types for s in self.langs.values()),
        )

    def to_dict(self):
        def row(s):
            return {
                "mono_min": s.mono_min,
                "cs_min": s.cs_min,
                "subtotal_min": s.subtotal_min,
                "tokens": s.tokens,
                "types": s.types,
            }

        return {
            "attribution": "cs-full-credit-per-language",
            "languages": {lang: row(s) for lang, s in self.langs.items()},
            "total": row(self.total),
            "corpus_min": self.corpus_s / 60.0,
            "untranscribed_min": self.untranscribed_s / 60.0,
            "n_utterances": self.n_utterances,
        }

    def format_table(self):
        cols = ["Language", "Mono (m)", "CS (m)", "Subtotal (m)", "Word tokens", "Word types"]
        rows = []
        for lang, s in list(self.langs.items()) + [("Total", self.total)]:
            rows.append([
                LANG_NAMES.get(lang, lang),
                f"{s.mono_min:.1f}",
                f"{s.cs_min:.1f}",
                f"{s.subtotal_min:.1f}",
                str(s.tokens),
                str(s.types),
            ])
        widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
        lines = ["# CS minutes credit every language present in a code-switched utterance"]
        lines.append("  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(cols)))
        for r in rows:
            lines.append("  ".join(v.ljust(widths[0]) if i == 0 else v.rjust(widths[i]) for i, v in enumerate(r)))
        lines.append(
            f"# corpus duration {self.corpus_s / 60.0:.1f} m over {self.n_utterances} utterances"
            + (f", untranscribed {self.untranscribed_s / 60.0:.1f} m" if self.untranscribed_s else "")
        )
        return "\n".join(lines)


def corpus_stats(corpus, split=None, include_untranscribed=False):
    """Table-style statistics over ``corpus``, optionally restricted to a manifest."""
    if split is not None:
        split.check(corpus)
        utts = [corpus[u] for u in split.ids]
    else:
        utts = list(corpus)
    per_lang = {lang: LangStats() for lang in corpus.langs}
    types = defaultdict(set)
    stats = CorpusStats(per_lang)
    for u in utts:
        if not u.tokens:
            if include_untranscribed:
                stats.untranscribed_s += u.duration_s
                stats.corpus_s += u.duration_s
                stats.n_utterances += 1
            continue
        stats.corpus_s += u.duration_s
        stats.n_utterances += 1
        present = sorted(set(u.langs), key=corpus.langs.index)
        cs = len(present) > 1
        for lang in present:
            if cs:
                per_lang[lang].cs_s += u.duration_s
            else:
                per_lang[lang].mono_s += u.duration_s
        for t in u.tokens:
            per_lang[t.lang].tokens += 1
            types[t.lang].add(t.surface)
    for lang, surfaces in types.items():
        per_lang[lang].types = len(surfaces)
    return stats
