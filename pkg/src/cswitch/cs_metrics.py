"""Perplexity split by code-switch position class.

Every word position is either monolingual (same language as the previous
word, or utterance-initial) or a switch point. ``</s>`` has no language and
is left out of the split but kept in the overall perplexity.
"""

import json
import math
from dataclasses import dataclass, field

from .corpus import LANG_NAMES, Token, Utterance
from .errors import EmptyEvalSet
from .ngram.model import scored_positions

MONO, SWITCH, EXCLUDED = "mono", "switch", "excluded"

LANG_LETTERS = {"en": "E", "zu": "Z", "xh": "X", "st": "S", "tn": "T"}


def lang_label(lang):
    return LANG_LETTERS.get(lang, lang.upper())


@dataclass(frozen=True)
class PositionClass:
    kind: str
    lang: str = None

    def __str__(self):
        return f"{self.kind}({self.lang})" if self.kind == MONO else self.kind


def _langs(item):
    if isinstance(item, Utterance):
        return item.langs
    return [t.lang if isinstance(t, Token) else t for t in item]


def classify_langs(langs):
    out = []
    prev = None
    for i, lang in enumerate(langs):
        if i > 0 and lang != prev:
            out.append(PositionClass(SWITCH, lang))
        else:
            out.append(PositionClass(MONO, lang))
        prev = lang
    return out


def classify_positions(utterances):
    """Per-utterance position classes for language-tagged text.

    Accepts utterances, token lists, or plain lists of language codes.
    """
    return [classify_langs(_langs(u)) for u in utterances]


@dataclass
class CsPerplexityReport:
    pp: float
    n_scored: int
    total_logprob: float
    mpp_per_lang: dict
    n_mono: dict
    mpp: float
    n_switch: int
    cpp: float = None
    logprob_mono: dict = field(default_factory=dict)
    logprob_switch: float = 0.0

    @property
    def n_decomposed(self):
        return sum(self.n_mono.values()) + self.n_switch

    @property
    def pp_decomposed(self):
        total = sum(self.logprob_mono.values()) + self.logprob_switch
        return math.exp(-total / self.n_decomposed)

    def to_dict(self):
        return {
            "pp": self.pp,
            "mpp_per_lang": dict(self.mpp_per_lang),
            "mpp": self.mpp,
            "cpp": self.cpp,
            "counts": {
                "n_scored": self.n_scored,
                "n_decomposed": self.n_decomposed,
                "n_mono": dict(self.n_mono),
                "n_switch": self.n_switch,
            },
            "conventions": {
                "utterance_initial_word": "mono",
                "sentence_end": "pp only",
                "cpp_denominator": "switch tokens",
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _pp(total, n):
    return math.exp(-total / n) if n else None


def cs_perplexity(model, utterances):
    """Overall, per-language monolingual, pooled monolingual and switch perplexity."""
    utterances = list(utterances)
    classes = classify_positions(utterances)
    lp_mono, n_mono = {}, {}
    for u in utterances:
        for lang in _langs(u):
            lp_mono.setdefault(lang, 0.0)
            n_mono.setdefault(lang, 0)
    lp_switch, n_switch = 0.0, 0
    total, n = 0.0, 0
    for ui, pos, _, lp in scored_positions(model, utterances):
        total += lp
        n += 1
        cls = classes[ui]
        if pos >= len(cls):
            continue
        c = cls[pos]
        if c.kind == SWITCH:
            lp_switch += lp
            n_switch += 1
        else:
            lp_mono[c.lang] += lp
            n_mono[c.lang] += 1
    if n == 0:
        raise EmptyEvalSet("no scorable utterances")
    mpp_per_lang = {lang: _pp(lp_mono[lang], n_mono[lang]) for lang in lp_mono}
    n_mono_total = sum(n_mono.values())
    return CsPerplexityReport(
        pp=math.exp(-total / n),
        n_scored=n,
        total_logprob=total,
        mpp_per_lang=mpp_per_lang,
        n_mono=n_mono,
        mpp=_pp(sum(lp_mono.values()), n_mono_total),
        n_switch=n_switch,
        cpp=_pp(lp_switch, n_switch),
        logprob_mono=lp_mono,
        logprob_switch=lp_switch,
    )


def _num(x):
    return "absent" if x is None else f"{x:.1f}"


def format_perplexity_table(rows, langs, dev=None):
    """Aligned table with columns LM, PP (dev), PP, MPP_<lang>..., MPP, CPP.

    ``rows`` is a list of (name, CsPerplexityReport); ``dev`` optionally maps
    names to development-set perplexities.
    """
    cols = ["LM", "PP (dev)", "PP"] + [f"MPP_{lang_label(l)}" for l in langs] + ["MPP", "CPP"]
    table = []
    for name, rep in rows:
        d = (dev or {}).get(name)
        table.append(
            [name, "-" if d is None else f"{d:.1f}", _num(rep.pp)]
            + [_num(rep.mpp_per_lang.get(l)) for l in langs]
            + [_num(rep.mpp), _num(rep.cpp)]
        )
    widths = [max(len(c), *(len(r[i]) for r in table)) for i, c in enumerate(cols)]
    lines = [
        "# MPP: utterance-initial words count as monolingual; CPP: first word after each switch;",
        "# </s> is scored in PP only",
        "  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(cols)),
    ]
    for r in table:
        lines.append("  ".join(v.ljust(widths[i]) if i == 0 else v.rjust(widths[i]) for i, v in enumerate(r)))
    for name, rep in rows:
        mono = ", ".join(f"{LANG_NAMES.get(l, l)} {rep.n_mono.get(l, 0)}" for l in langs)
        lines.append(
            f"# {name}: {rep.n_scored} scored events, {rep.n_decomposed} decomposed "
            f"({mono}; switch {rep.n_switch})"
        )
    return "\n".join(lines)


def cs_perplexity_json(name, report, dev_pp=None):
    d = report.to_dict()
    d["lm"] = name
    d["pp_dev"] = dev_pp
    return d
