"""Synthetic decoder and trainer with known ground truth.

The simulator corrupts each utterance's hidden reference with substitution,
deletion and insertion noise whose rates shrink as the simulated model sees
more clean training data. It never exposes the truth to the pipeline: the
pipeline only sees :class:`~cswitch.semisup.DecodeResult` objects, either in
process or through ``cswitch simulate serve`` speaking the line protocol.

Randomness is keyed by ``(seed, utt_id)`` for the corruption draws shared by
all pair decoders and by ``(seed, utt_id, pair)`` for the pair-specific
mismatch and confidence-noise draws, so results do not depend on request
order or thread count.
"""

import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .corpus import Corpus, Manifest, Token, Utterance, load_corpus, save_corpus, save_manifest
from .errors import DataError, ParseError
from .semisup import (
    DEFAULT_PAIRS,
    DecodeResult,
    ExternalDecoder,
    StaticTrainer,
    get_pairs,
)


@dataclass(frozen=True)
class PairRates:
    sub: float
    dele: float
    ins: float

    def __post_init__(self):
        for r in (self.sub, self.dele, self.ins):
            if not 0.0 <= r < 1.0:
                raise ValueError(f"rate {r} outside [0, 1)")
        if self.sub + self.dele + self.ins >= 1.0:
            raise ValueError("sub + del + ins must stay below 1")

    def scaled(self, m):
        return PairRates(self.sub * m, self.dele * m, self.ins * m)

    @property
    def total(self):
        return self.sub + self.dele + self.ins


@dataclass
class ChannelParams:
    rates: dict
    confidence_noise_sd: float = 0.0
    mismatch_penalty: float = 0.3
    seed: int = 0
    gain: float = 0.5
    h0: float = 1.0
    ood_weight: float = 0.5
    m0: float = 1.0

    def __post_init__(self):
        self.rates = {k: v if isinstance(v, PairRates) else PairRates(*v) for k, v in self.rates.items()}
        if self.confidence_noise_sd < 0:
            raise ValueError("confidence_noise_sd must be >= 0")
        if not 0.0 <= self.mismatch_penalty <= 1.0:
            raise ValueError("mismatch_penalty must lie in [0, 1]")
        if not 0.0 <= self.gain < 1.0 or self.h0 <= 0 or not 0.0 < self.m0 <= 1.0:
            raise ValueError("need 0 <= gain < 1, h0 > 0 and 0 < m0 <= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def to_dict(self):
        return {
            "rates": {k: [r.sub, r.dele, r.ins] for k, r in self.rates.items()},
            "confidence_noise_sd": self.confidence_noise_sd,
            "mismatch_penalty": self.mismatch_penalty,
            "seed": self.seed,
            "gain": self.gain,
            "h0": self.h0,
            "ood_weight": self.ood_weight,
            "m0": self.m0,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise DataError(f"bad channel parameters: {e}") from None

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def initial_state(self):
        return TrainState({k: self.m0 for k in self.rates}, 0.0, 0.0)


@dataclass
class TrainState:
    """Error multiplier per pair plus the data that produced it."""

    multipliers: dict
    hours: float = 0.0
    label_noise: float = 0.0
    tag: str = ""

    def to_dict(self):
        return {
            "multipliers": dict(sorted(self.multipliers.items())),
            "hours": self.hours,
            "label_noise": self.label_noise,
            "tag": self.tag,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["multipliers"]), float(d["hours"]), float(d["label_noise"]), d.get("tag", ""))

    def __str__(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# --- random streams --------------------------------------------------------


def _rng(seed, *keys):
    words = [seed & 0xFFFFFFFF, seed >> 32]
    for k in keys:
        h = hashlib.sha256(str(k).encode("utf-8")).digest()
        words.extend(int.from_bytes(h[i : i + 4], "little") for i in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass
class Draws:
    """Uniform draws for one utterance, one row per reference token."""

    op: np.ndarray
    sub_word: np.ndarray
    ins: np.ndarray
    ins_word: np.ndarray

    @classmethod
    def for_utterance(cls, seed, utt_id, n):
        u = _rng(seed, utt_id).random((4, n))
        return cls(u[0], u[1], u[2], u[3])


def fresh_words(vocab, ref):
    """Candidate replacement tokens: vocabulary entries not in the reference."""
    used = {t.surface for t in ref}
    out = [t for t in vocab if t.surface not in used]
    k = 0
    while not out:
        # every vocabulary word occurs in the reference; invent a stand-in
        cand = Token(f"<sim{k}>", vocab[0].lang if vocab else "en")
        if cand.surface not in used:
            out.append(cand)
        k += 1
    return out


def _pick(pool, u):
    return pool[min(int(u * len(pool)), len(pool) - 1)]


@dataclass
class Tally:
    sub: int = 0
    dele: int = 0
    ins: int = 0
    n: int = 0

    @property
    def events(self):
        return self.sub + self.dele + self.ins

    def __add__(self, o):
        return Tally(self.sub + o.sub, self.dele + o.dele, self.ins + o.ins, self.n + o.n)


def corrupt(ref, rates, draws, pool):
    """Apply the channel to ``ref``.

    Per token: delete with probability ``del``, else substitute with
    probability ``sub``, else keep; then insert a word after it with
    probability ``ins``. Returns the hypothesis, a flag per hypothesis token
    telling whether it is an unchanged reference token, and the event tally.
    """
    hyp, kept = [], []
    t = Tally(n=len(ref))
    for k, tok in enumerate(ref):
        u = draws.op[k]
        if u < rates.dele:
            t.dele += 1
        elif u < rates.dele + rates.sub:
            hyp.append(_pick(pool, draws.sub_word[k]))
            kept.append(False)
            t.sub += 1
        else:
            hyp.append(tok)
            kept.append(True)
        if draws.ins[k] < rates.ins:
            hyp.append(_pick(pool, draws.ins_word[k]))
            kept.append(False)
            t.ins += 1
    return hyp, kept, t


def edit_cost(ref, hyp):
    ids = {}
    r = np.array([ids.setdefault(t.surface, len(ids)) for t in ref], dtype=np.int64)
    h = np.array([ids.setdefault(t.surface, len(ids)) for t in hyp], dtype=np.int64)
    return int(np.count_nonzero(_accel.edit_ops(r, h)))


def utterance_wer(ref, hyp):
    if not ref:
        return 0.0 if not hyp else 1.0
    return edit_cost(ref, hyp) / len(ref)


class Simulator:
    """Decoding and training against a hidden truth corpus.

    ``truth_pairs`` maps utterance id to its true language-pair id.
    """

    def __init__(self, truth, truth_pairs, params, pairs=DEFAULT_PAIRS):
        self.truth = truth
        self.truth_pairs = dict(truth_pairs)
        self.params = params
        self.pairs = {p.id: p for p in pairs}
        for pid in self.pairs:
            if pid not in params.rates:
                raise DataError(f"no channel rates for pair {pid}")
        by_lang = {}
        for u in truth:
            for t in u.tokens:
                by_lang.setdefault(t.lang, set()).add(t)
        self.vocab = {
            pid: sorted({t for lang in p.langs for t in by_lang.get(lang, ())}, key=lambda t: (t.lang, t.surface))
            for pid, p in self.pairs.items()
        }

    def _base(self, ref, utt_id, pair, state):
        m = state.multipliers.get(pair, self.params.m0)
        rates = self.params.rates[pair].scaled(m)
        draws = Draws.for_utterance(self.params.seed, utt_id, len(ref))
        return corrupt(ref, rates, draws, fresh_words(self.vocab[pair], ref))

    def hypothesis(self, utt_id, pair, state):
        """Hypothesis tokens and the corruption tally for one decoder."""
        ref = list(self.truth[utt_id].tokens)
        if pair not in self.pairs:
            raise DataError(f"unknown language pair {pair!r}")
        true_pair = self.truth_pairs.get(utt_id)
        if true_pair is None:
            raise DataError(f"no true pair label for {utt_id!r}")
        hyp, kept, tally = self._base(ref, utt_id, pair, state)
        penalty = self.params.mismatch_penalty
        if pair == true_pair or penalty == 0.0:
            return hyp, tally
        # Mismatched decoder: replace kept reference words with words from its
        # own vocabulary, then keep going until it is strictly worse than the
        # matched decoder (a single replacement does not always raise the cost).
        pool = fresh_words(self.vocab[pair], ref)
        rng = _rng(self.params.seed, utt_id, pair, "mismatch")
        u = rng.random(len(hyp))
        w = rng.random(len(hyp) + len(ref) + 2)
        wi = 0
        for k in range(len(hyp)):
            if kept[k] and u[k] < penalty:
                hyp[k] = _pick(pool, w[wi])
                kept[k] = False
                wi += 1
                tally.sub += 1
        true_hyp, _, _ = self._base(ref, utt_id, true_pair, state)
        target = edit_cost(ref, true_hyp)
        order = sorted(range(len(hyp)), key=lambda k: u[k])
        while edit_cost(ref, hyp) <= target:
            k = next((k for k in order if kept[k]), None)
            if k is None:
                hyp.append(_pick(pool, w[wi % len(w)]))
                tally.ins += 1
            else:
                hyp[k] = _pick(pool, w[wi % len(w)])
                kept[k] = False
                tally.sub += 1
            wi += 1
        return hyp, tally

    def decode_one(self, utt_id, pair, state):
        ref = self.truth[utt_id].tokens
        hyp, _ = self.hypothesis(utt_id, pair, state)
        conf = 1.0 - utterance_wer(ref, hyp)
        sd = self.params.confidence_noise_sd
        if sd > 0:
            conf += float(_rng(self.params.seed, utt_id, pair, "noise").normal(0.0, sd))
        conf = min(1.0, max(0.0, conf))
        return DecodeResult.uniform(utt_id, pair, hyp, conf)

    def train(self, trainset, transcripts, corpus, tag=""):
        """State after training on ``trainset`` from the initial state."""
        return simulate_train(trainset, transcripts, corpus, self.truth, self.params, self.params.initial_state(), tag)


def simulate_decode(sim, utt_id, pair, state):
    return sim.decode_one(utt_id, pair, state)


def effective_hours(trainset, transcripts, corpus, truth, ood_weight):
    """Clean-equivalent hours and the duration-weighted automatic label error rate.

    Manual data counts fully, out-of-domain data at ``ood_weight``, and each
    automatic utterance at ``1 - WER`` of its label against the hidden truth.
    """
    seconds = 0.0
    auto_s = 0.0
    auto_err = 0.0
    for uid, prov in trainset.entries:
        dur = corpus[uid].duration_s
        if prov == "ManT":
            seconds += dur
        elif prov == "OOD":
            seconds += ood_weight * dur
        else:
            if uid not in transcripts:
                raise DataError(f"automatic entry {uid!r} has no transcript")
            err = min(1.0, utterance_wer(truth[uid].tokens, transcripts[uid]))
            seconds += dur * (1.0 - err)
            auto_s += dur
            auto_err += dur * err
    return seconds / 3600.0, (auto_err / auto_s if auto_s else 0.0)


def simulate_train(trainset, transcripts, corpus, truth, params, prev, tag=""):
    """m_new = m_prev * (1 - g * h / (h + h0)) with h the clean-equivalent hours."""
    h, noise = effective_hours(trainset, transcripts, corpus, truth, params.ood_weight)
    factor = 1.0 - params.gain * h / (h + params.h0)
    return TrainState(
        {k: m * factor for k, m in prev.multipliers.items()},
        prev.hours + h,
        noise,
        tag,
    )


class SimDecoder:
    def __init__(self, sim, threads=1):
        self.sim = sim
        self.threads = max(1, int(threads))

    def decode(self, requests, state):
        if isinstance(state, str):
            state = TrainState.from_dict(json.loads(state))
        requests = list(requests)
        if self.threads == 1 or len(requests) < 64:
            return [self.sim.decode_one(u, p, state) for u, p in requests]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(lambda r: self.sim.decode_one(r[0], r[1], state), requests))


class SimTrainer:
    def __init__(self, sim):
        self.sim = sim

    def train(self, trainset, transcripts, corpus, tag):
        return self.sim.train(trainset, transcripts, corpus, tag)

    def describe(self, state):
        d = state.to_dict()
        d["expected_wer"] = {
            k: self.sim.params.rates[k].total * m for k, m in sorted(state.multipliers.items())
        }
        return d


# --- loading, backends and the serve loop ----------------------------------


def load_truth_pairs(path):
    pairs = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError(lineno, "expected '<utt_id>\\t<pair>'")
            if parts[0] in pairs:
                raise ParseError(lineno, f"duplicate id {parts[0]!r}")
            pairs[parts[0]] = parts[1]
    return pairs


def load_simulator(truth, truth_pairs, params, pairs=None, base_dir="."):
    base = Path(base_dir)
    params = ChannelParams.from_dict(params) if isinstance(params, dict) else ChannelParams.load(base / params)
    return Simulator(
        load_corpus(base / truth, name=str(truth)),
        load_truth_pairs(base / truth_pairs),
        params,
        get_pairs(pairs),
    )


def build_backend(binding, pairs=None, base_dir=".", threads=1):
    """(decoder, trainer) from a pipeline config's ``decoder`` binding.

    ``{"type": "sim", "truth": ..., "truth_pairs": ..., "params": ...}`` runs
    the simulator in process. ``{"type": "external", "command": [...],
    "trainer": {...}}`` runs a decoder command per pass; its trainer is either
    another ``sim`` binding or ``{"type": "static", "state": "..."}``.
    """
    kind = binding.get("type")
    if kind == "sim":
        sim = load_simulator(binding["truth"], binding["truth_pairs"], binding["params"], pairs, base_dir)
        return SimDecoder(sim, threads), SimTrainer(sim)
    if kind == "external":
        trainer_binding = binding.get("trainer", {"type": "static"})
        if trainer_binding.get("type") == "sim":
            _, trainer = build_backend(trainer_binding, pairs, base_dir)
        elif trainer_binding.get("type") == "static":
            trainer = StaticTrainer(trainer_binding.get("state", ""))
        else:
            raise DataError(f"unknown trainer type {trainer_binding.get('type')!r}")
        return ExternalDecoder(binding["command"], binding.get("timeout_s", 600.0)), trainer
    raise DataError(f"unknown decoder type {kind!r}")


def serve(sim, state, stdin=None, stdout=None):
    """Answer ``<utt_id>\\t<pair>`` request lines until end of input."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    n = 0
    for lineno, line in enumerate(stdin, 1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise ParseError(lineno, "expected '<utt_id>\\t<pair>'")
        stdout.write(sim.decode_one(parts[0], parts[1], state).to_line() + "\n")
        n += 1
    stdout.flush()
    return n


# --- synthetic fixture -----------------------------------------------------


DEFAULT_RATES = {
    "EZ": (0.12, 0.05, 0.04),
    "EX": (0.14, 0.06, 0.05),
    "ES": (0.13, 0.05, 0.05),
    "ET": (0.16, 0.07, 0.05),
}


def _words(lang, n):
    return [Token(f"{lang}{k:03d}", lang) for k in range(n)]


def _utterance(rng, uid, speaker, langs, mono=False, min_len=6, max_len=16):
    n = int(rng.integers(min_len, max_len + 1))
    vocab = {lang: _words(lang, 120) for lang in langs}
    lang = langs[int(rng.integers(len(langs)))]
    tokens = []
    for _ in range(n):
        if not mono and rng.random() < 0.25:
            lang = langs[(langs.index(lang) + 1) % len(langs)]
        # Zipf-like word choice so frequent words recur
        k = min(int(rng.zipf(1.3)) - 1, 119)
        tokens.append(vocab[lang][k])
    if not mono and len({t.lang for t in tokens}) < 2:
        other = next(l for l in langs if l != tokens[0].lang)
        tokens[-1] = vocab[other][int(rng.integers(20))]
    dur = round(0.35 * n + float(rng.uniform(0.2, 1.0)), 3)
    return Utterance(uid, speaker, dur, tuple(tokens))


def make_fixture(out_dir, seed=0, n_untranscribed=200, n_mant=100, n_ood=60, policy="NT", params=None):
    """Write a complete synthetic pipeline setup and return the config path.

    Files: ``corpus.jsonl`` (untranscribed utterances have no tokens),
    ``truth.jsonl`` with their hidden transcripts, ``truth_pairs.tsv``,
    ``mant.manifest``, ``ood.manifest``, ``untranscribed.ids``,
    ``params.json`` and ``pipeline.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    langs = ("en", "zu", "xh", "st", "tn")
    pair_ids = [p.id for p in DEFAULT_PAIRS]
    pair_weights = np.array([0.35, 0.2, 0.3, 0.15])
    pair_langs = {p.id: list(p.langs) for p in DEFAULT_PAIRS}

    visible, hidden, truth_pairs = [], [], {}
    mant, ood, pool = [], [], []
    for k in range(n_mant):
        pid = pair_ids[int(rng.choice(4, p=pair_weights))]
        u = _utterance(rng, f"mant{k:04d}", f"spk{k % 12:02d}", pair_langs[pid])
        visible.append(u)
        mant.append((u.id, "ManT"))
    for k in range(n_ood):
        lang = langs[k % len(langs)]
        u = _utterance(rng, f"ood{k:04d}", f"nchlt{k % 7:02d}", [lang], mono=True)
        visible.append(u)
        ood.append((u.id, "OOD"))
    for k in range(n_untranscribed):
        pid = pair_ids[int(rng.choice(4, p=pair_weights))]
        u = _utterance(rng, f"untr{k:04d}", f"spk{k % 20:02d}", pair_langs[pid])
        hidden.append(u)
        truth_pairs[u.id] = pid
        visible.append(Utterance(u.id, u.speaker, u.duration_s, ()))
        pool.append(u.id)

    save_corpus(Corpus(langs, visible, "fixture"), out / "corpus.jsonl")
    save_corpus(Corpus(langs, hidden, "truth"), out / "truth.jsonl")
    with open(out / "truth_pairs.tsv", "w", encoding="utf-8") as f:
        f.writelines(f"{u}\t{p}\n" for u, p in sorted(truth_pairs.items()))
    save_manifest(Manifest("mant", mant, "corpus.jsonl"), out / "mant.manifest")
    save_manifest(Manifest("ood", ood, "corpus.jsonl"), out / "ood.manifest")
    with open(out / "untranscribed.ids", "w", encoding="utf-8") as f:
        f.writelines(f"{u}\n" for u in pool)
    if params is None:
        total_h = sum(u.duration_s for u in visible) / 3600.0
        params = ChannelParams(
            DEFAULT_RATES, confidence_noise_sd=0.05, mismatch_penalty=0.3, seed=seed,
            gain=0.6, h0=round(total_h / 2, 4), ood_weight=0.5,
        )
    with open(out / "params.json", "w", encoding="utf-8") as f:
        json.dump(params.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    config = {
        "corpus": "corpus.jsonl",
        "mant": "mant.manifest",
        "ood": "ood.manifest",
        "untranscribed": "untranscribed.ids",
        "run_dir": "run",
        "policy": policy,
        "passes": 2,
        "seed": seed,
        "pairs": pair_ids,
        "decoder": {"type": "sim", "truth": "truth.jsonl", "truth_pairs": "truth_pairs.tsv", "params": "params.json"},
    }
    path = out / "pipeline.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")
    return path


@dataclass
class PolicyOutcome:
    policy: str
    retained: list
    label_noise: list
    asr_multiplier: float
    asr_expected_wer: float
    reports: list = field(default_factory=list)


def compare_policies(config_path, policies=("NT", "T_P1", "T_P1P2"), threads=1):
    """Run the pipeline once per policy on one fixture and collect the outcomes.

    No policy is declared the winner; the outcomes are for inspection.
    """
    from .semisup import PipelineConfig, run_pipeline

    base = PipelineConfig.load(config_path)
    outcomes = []
    for policy in policies:
        d = base.to_dict()
        d["policy"] = policy
        d["run_dir"] = f"{base.run_dir}.{policy.lower()}"
        cfg = PipelineConfig.from_dict(d, base.base_dir)
        dec, tr = build_backend(cfg.decoder, cfg.pairs, cfg.base_dir, threads)
        reports = run_pipeline(cfg, dec, tr)
        last = reports[-1].asr_model
        ms = list(last.get("multipliers", {}).values())
        wers = list(last.get("expected_wer", {}).values())
        outcomes.append(
            PolicyOutcome(
                policy,
                [r.retained for r in reports],
                [r.asr_model.get("label_noise") for r in reports],
                float(np.mean(ms)) if ms else math.nan,
                float(np.mean(wers)) if wers else math.nan,
                reports,
            )
        )
    return outcomes


def format_comparison(outcomes):
    lines = [f"{'policy':<8} {'retained per pass':<20} {'label WER per pass':<22} {'ASR m':>7} {'exp. WER':>9}"]
    for o in outcomes:
        ret = "/".join(str(r) for r in o.retained)
        noise = "/".join(f"{x:.3f}" for x in o.label_noise)
        lines.append(f"{o.policy:<8} {ret:<20} {noise:<22} {o.asr_multiplier:>7.4f} {o.asr_expected_wer:>9.4f}")
    lines.append("# lower ASR m is better; no winner is asserted")
    return "\n".join(lines)
