"""WER and code-switch accuracy scoring with bootstrap significance."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _accel
from .corpus import Token
from .cs_metrics import lang_label
from .errors import EmptyReference, IdMismatch
from .ngram.vocab import UNKNOWN_LANG, Vocabulary

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"
_OP_NAMES = {_accel.MATCH: MATCH, _accel.SUB: SUB, _accel.DEL: DEL, _accel.INS: INS}

SHORT_NAMES = {"en": "Eng", "zu": "Zul", "xh": "Xho", "st": "Sot", "tn": "Tsw"}

INSERTION_RULE = "insertions take the language of the nearest preceding reference token"


def _surface(tok):
    return tok.surface if isinstance(tok, Token) else tok


@dataclass(frozen=True)
class AlignedPair:
    """Levenshtein alignment; each op is ``(kind, ref_token, hyp_token)``."""

    utt_id: str
    ops: tuple

    @property
    def ref(self):
        return [r for _, r, _ in self.ops if r is not None]

    @property
    def hyp(self):
        return [h for _, _, h in self.ops if h is not None]

    @property
    def counts(self):
        s = d = i = c = 0
        for kind, _, _ in self.ops:
            if kind == SUB:
                s += 1
            elif kind == DEL:
                d += 1
            elif kind == INS:
                i += 1
            else:
                c += 1
        return WerCounts(s, d, i, c + s + d)

    @property
    def cost(self):
        return sum(kind != MATCH for kind, _, _ in self.ops)


def align(ref, hyp, utt_id=""):
    """Minimal unit-cost alignment of two token sequences.

    Tokens compare by surface form. Among equal-cost alignments the traceback
    from the end prefers match, then substitution, deletion, insertion.
    """
    ref, hyp = list(ref), list(hyp)
    ids = {}
    ref_ids = [ids.setdefault(_surface(t), len(ids)) for t in ref]
    hyp_ids = [ids.setdefault(_surface(t), len(ids)) for t in hyp]
    codes = _accel.edit_ops(np.array(ref_ids, dtype=np.int64), np.array(hyp_ids, dtype=np.int64))
    ops = []
    i = j = 0
    for code in codes:
        kind = _OP_NAMES[int(code)]
        if kind == DEL:
            ops.append((kind, ref[i], None))
            i += 1
        elif kind == INS:
            ops.append((kind, None, hyp[j]))
            j += 1
        else:
            ops.append((kind, ref[i], hyp[j]))
            i += 1
            j += 1
    return AlignedPair(utt_id, tuple(ops))


def align_corpora(refs, hyps):
    """Align every transcribed reference utterance with its hypothesis by id."""
    pairs = []
    missing = []
    for u in refs:
        if not u.tokens:
            continue
        if u.id not in hyps:
            missing.append(u.id)
            continue
        pairs.append(align(u.tokens, hyps[u.id].tokens, u.id))
    if missing:
        raise IdMismatch(f"{len(missing)} reference utterances have no hypothesis, e.g. {missing[0]!r}")
    return pairs


@dataclass(frozen=True)
class WerCounts:
    S: int = 0
    D: int = 0
    I: int = 0
    N: int = 0

    @property
    def errors(self):
        return self.S + self.D + self.I

    @property
    def wer(self):
        return 100.0 * self.errors / self.N if self.N else None

    def __add__(self, other):
        return WerCounts(self.S + other.S, self.D + other.D, self.I + other.I, self.N + other.N)

    def to_dict(self):
        return {"wer": self.wer, "S": self.S, "D": self.D, "I": self.I, "N": self.N}


def wer(pairs):
    """Pooled WER over all utterances."""
    total = WerCounts()
    for p in pairs:
        total = total + p.counts
    if total.N == 0:
        raise EmptyReference("no reference tokens")
    return total


def _ref_lang(tok, lang_of):
    if isinstance(tok, Token):
        return tok.lang
    if lang_of is None:
        return UNKNOWN_LANG
    return _lookup(lang_of, tok)


def _lookup(lang_of, word):
    if isinstance(lang_of, Vocabulary):
        return lang_of.lang(word)
    return lang_of.get(word, UNKNOWN_LANG)


def _hyp_lang(tok, lang_of):
    if lang_of is None:
        return tok.lang if isinstance(tok, Token) else UNKNOWN_LANG
    return _lookup(lang_of, _surface(tok))


def wer_per_language(pairs, lang_of=None):
    """Per-language S/D/I/N, attributing insertions by the preceding reference token.

    Languages without reference tokens keep their counts but report no rate.
    """
    stats = {}

    def add(lang, s=0, d=0, i=0, n=0):
        cur = stats.get(lang, WerCounts())
        stats[lang] = cur + WerCounts(s, d, i, n)

    for p in pairs:
        refs = [r for _, r, _ in p.ops if r is not None]
        current = _ref_lang(refs[0], lang_of) if refs else UNKNOWN_LANG
        for kind, r, _ in p.ops:
            if r is not None:
                current = _ref_lang(r, lang_of)
            if kind == MATCH:
                add(current, n=1)
            elif kind == SUB:
                add(current, s=1, n=1)
            elif kind == DEL:
                add(current, d=1, n=1)
            else:
                add(current, i=1)
    return stats


@dataclass(frozen=True)
class Rate:
    num: int = 0
    den: int = 0

    @property
    def percent(self):
        return 100.0 * self.num / self.den if self.den else None

    def __add__(self, other):
        return Rate(self.num + other.num, self.den + other.den)

    def to_dict(self):
        return {"percent": self.percent, "num": self.num, "den": self.den}


@dataclass
class SwitchMetrics:
    langs: tuple
    token_correct: dict
    word_correct_after_switch: Rate
    word_correct_after_switch_by_lang: dict
    language_correct_after_switch: Rate
    bigram_correct: Rate

    @property
    def n_switch(self):
        return self.word_correct_after_switch.den

    def rows(self):
        """(label, Rate) in accuracy-table order."""
        out = []
        for lang in self.langs:
            out.append((f"{SHORT_NAMES.get(lang, lang)} token correct", self.token_correct.get(lang, Rate())))
        out.append(("Word correct after switch", self.word_correct_after_switch))
        # switched-into languages are listed from the last registered one back
        for lang in reversed(self.langs):
            name = "English" if lang == "en" else SHORT_NAMES.get(lang, lang)
            out.append(
                (f"{name} word correct after switch", self.word_correct_after_switch_by_lang.get(lang, Rate()))
            )
        out.append(("Language correct after switch", self.language_correct_after_switch))
        out.append(("Code-switch bigram correct", self.bigram_correct))
        return out

    def to_dict(self):
        return {
            "token_correct": {l: r.to_dict() for l, r in self.token_correct.items()},
            "word_correct_after_switch": self.word_correct_after_switch.to_dict(),
            "word_correct_after_switch_by_lang": {
                l: r.to_dict() for l, r in self.word_correct_after_switch_by_lang.items()
            },
            "language_correct_after_switch": self.language_correct_after_switch.to_dict(),
            "code_switch_bigram_correct": self.bigram_correct.to_dict(),
            "rows": [{"label": label, **rate.to_dict()} for label, rate in self.rows()],
        }


def switch_metrics(pairs, lang_of=None, langs=None):
    """Token accuracy per language and accuracy at reference switch points.

    A switch point is a reference position whose language differs from the
    previous reference token in the same utterance. "Correct" means the
    reference token is matched in the alignment.
    """
    token = {}
    after = Rate()
    after_by_lang = {}
    lang_ok = Rate()
    bigram = Rate()
    seen_langs = []
    for p in pairs:
        # op index for every reference position
        ref_ops = [(kind, r, h) for kind, r, h in p.ops if r is not None]
        prev_lang = None
        for i, (kind, r, h) in enumerate(ref_ops):
            lang = _ref_lang(r, lang_of)
            if lang not in seen_langs:
                seen_langs.append(lang)
            hit = Rate(int(kind == MATCH), 1)
            token[lang] = token.get(lang, Rate()) + hit
            if i > 0 and lang != prev_lang:
                after = after + hit
                after_by_lang[lang] = after_by_lang.get(lang, Rate()) + hit
                ok = h is not None and _hyp_lang(h, lang_of) == lang
                lang_ok = lang_ok + Rate(int(ok), 1)
                both = kind == MATCH and ref_ops[i - 1][0] == MATCH
                bigram = bigram + Rate(int(both), 1)
            prev_lang = lang
    if langs is None:
        langs = seen_langs
    return SwitchMetrics(tuple(langs), token, after, after_by_lang, lang_ok, bigram)


# --- reports ---------------------------------------------------------------


def _pct(x):
    return "-" if x is None else f"{x:.1f}"


def _render(cols, rows, left=1):
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(cols)]

    def line(vals):
        return "  ".join(v.ljust(widths[i]) if i < left else v.rjust(widths[i]) for i, v in enumerate(vals))

    return [line(cols)] + [line(r) for r in rows]


def format_wer_table(systems, langs):
    """Rows of (name, dev WerCounts or None, test WerCounts, per-language dict).

    Columns: #, System, Dev, Test, WER_<lang>...
    """
    cols = ["#", "System", "Dev", "Test"] + [f"WER_{lang_label(l)}" for l in langs]
    rows = []
    for k, (name, dev, test, per_lang) in enumerate(systems, 1):
        rows.append(
            [str(k), name, _pct(dev.wer if dev else None), _pct(test.wer)]
            + [_pct(per_lang[l].wer if l in per_lang else None) for l in langs]
        )
    lines = _render(cols, rows, left=2)
    lines.append(f"# WER (%) pooled over utterances; {INSERTION_RULE}")
    return "\n".join(lines)


def format_accuracy_table(systems):
    """Accuracy (%) rows for each (name, SwitchMetrics) column."""
    cols = ["Accuracy (%)"] + [name for name, _ in systems]
    labels = [label for label, _ in systems[0][1].rows()]
    rows = []
    for k, label in enumerate(labels):
        rows.append([label] + [_pct(m.rows()[k][1].percent) for _, m in systems])
    lines = _render(cols, rows)
    n_sw = ", ".join(f"{name} {m.n_switch}" for name, m in systems)
    lines.append(f"# switch points: {n_sw}; bigram correct = both words of the switch bigram matched")
    return "\n".join(lines)


# --- bootstrap -------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapResult:
    n_resamples: int
    seed: int
    wer_a: float
    wer_b: float
    ci_a: tuple
    ci_b: tuple
    delta_ci: tuple
    p_improvement: float

    def to_dict(self):
        return {
            "n_resamples": self.n_resamples,
            "seed": self.seed,
            "wer_a": self.wer_a,
            "wer_b": self.wer_b,
            "ci_a": list(self.ci_a),
            "ci_b": list(self.ci_b),
            "delta_ci": list(self.delta_ci),
            "p_improvement": self.p_improvement,
        }

    def format(self, name_a="A", name_b="B"):
        return "\n".join([
            f"{'System':<8}{'WER':>8}{'95% CI':>22}",
            f"{name_a:<8}{self.wer_a:>8.2f}{f'[{self.ci_a[0]:.2f}, {self.ci_a[1]:.2f}]':>22}",
            f"{name_b:<8}{self.wer_b:>8.2f}{f'[{self.ci_b[0]:.2f}, {self.ci_b[1]:.2f}]':>22}",
            f"delta WER ({name_a} - {name_b}) 95% CI: [{self.delta_ci[0]:.2f}, {self.delta_ci[1]:.2f}]",
            f"P({name_a} better than {name_b}) = {self.p_improvement:.4f} over {self.n_resamples} resamples"
            f" (seed {self.seed})",
        ])


def _resample_indices(seed, start, stop, n):
    idx = np.empty((stop - start, n), dtype=np.int64)
    for row, r in enumerate(range(start, stop)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        idx[row] = rng.integers(0, n, size=n)
    return idx


def _wer_pct(err, n):
    out = np.zeros(err.shape, dtype=np.float64)
    np.divide(100.0 * err, n, out=out, where=n > 0)
    out[(n == 0) & (err > 0)] = np.inf
    return out


def bootstrap(pairs_a, pairs_b, n_resamples=10_000, seed=0, threads=1, confidence=0.95, chunk=1000):
    """Paired bootstrap over utterances.

    Both systems are resampled with the same utterance draws. Resample ``r``
    draws from its own stream seeded by ``(seed, r)``, so the split across
    threads never changes the result.
    """
    if n_resamples < 1000:
        raise ValueError("n_resamples must be at least 1000")
    a = {p.utt_id: p.counts for p in pairs_a}
    b = {p.utt_id: p.counts for p in pairs_b}
    if len(a) != len(pairs_a) or len(b) != len(pairs_b) or set(a) != set(b):
        raise IdMismatch("systems must cover the same, unique utterance ids")
    ids = sorted(a)
    if not ids:
        raise EmptyReference("no utterances to resample")
    values = np.array(
        [[a[u].errors for u in ids], [a[u].N for u in ids], [b[u].errors for u in ids], [b[u].N for u in ids]],
        dtype=np.int64,
    )
    n = len(ids)

    def run(bounds):
        start, stop = bounds
        return _accel.resample_sums(values, _resample_indices(seed, start, stop, n))

    chunks = [(s, min(s + chunk, n_resamples)) for s in range(0, n_resamples, chunk)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sums = list(pool.map(run, chunks))
    else:
        sums = [run(c) for c in chunks]
    sums = np.concatenate(sums, axis=0)
    wa = _wer_pct(sums[:, 0], sums[:, 1])
    wb = _wer_pct(sums[:, 2], sums[:, 3])
    alpha = (1.0 - confidence) / 2.0
    q = [100.0 * alpha, 100.0 * (1.0 - alpha)]
    ci_a = tuple(float(x) for x in np.percentile(wa, q))
    ci_b = tuple(float(x) for x in np.percentile(wb, q))
    delta_ci = tuple(float(x) for x in np.percentile(wa - wb, q))
    total_a = WerCounts(S=int(values[0].sum()), N=int(values[1].sum()))
    total_b = WerCounts(S=int(values[2].sum()), N=int(values[3].sum()))
    return BootstrapResult(
        n_resamples=n_resamples,
        seed=seed,
        wer_a=total_a.wer if total_a.N else math.nan,
        wer_b=total_b.wer if total_b.N else math.nan,
        ci_a=ci_a,
        ci_b=ci_b,
        delta_ci=delta_ci,
        p_improvement=float(np.mean(wa < wb)),
    )


def score_report(pairs, lang_of=None, langs=None):
    """Everything the ``score`` command prints for one system, as a dict."""
    total = wer(pairs)
    per_lang = wer_per_language(pairs, lang_of)
    sw = switch_metrics(pairs, lang_of, langs)
    return {
        "wer": total.to_dict(),
        "wer_per_language": {l: c.to_dict() for l, c in per_lang.items()},
        "switch": sw.to_dict(),
        "insertion_rule": INSERTION_RULE,
    }
