"""Two-pass semi-supervised data selection.

Each pass trains a transcription model on manual (+ out-of-domain + previous
automatic) data, decodes the untranscribed pool with every language-pair
decoder, labels each utterance with its most confident pair, optionally drops
utterances below their pair's mean confidence, and composes the training
manifest for the evaluation model (manual + automatic, never out-of-domain).
"""

import hashlib
import io
import json
import logging
import platform
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from . import __version__
from .corpus import (
    Corpus,
    Manifest,
    Token,
    Utterance,
    autot,
    load_corpus,
    load_manifest,
    parse_corpus,
    union,
    write_corpus,
    write_manifest,
)
from .errors import DataError, DecoderProtocolError, NoResults, ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LanguagePair:
    id: str
    langs: tuple


DEFAULT_PAIRS = (
    LanguagePair("EZ", ("en", "zu")),
    LanguagePair("EX", ("en", "xh")),
    LanguagePair("ES", ("en", "st")),
    LanguagePair("ET", ("en", "tn")),
)


def get_pairs(ids=None):
    if ids is None:
        return DEFAULT_PAIRS
    known = {p.id: p for p in DEFAULT_PAIRS}
    out = []
    for i in ids:
        if i not in known:
            raise DataError(f"unknown language pair {i!r}")
        out.append(known[i])
    if len({p.id for p in out}) != len(out):
        raise DataError("duplicate language pair")
    return tuple(out)


@dataclass(frozen=True)
class DecodeResult:
    utt_id: str
    pair: str
    hyp_tokens: tuple
    token_confidences: tuple
    utt_confidence: float

    def __post_init__(self):
        object.__setattr__(self, "hyp_tokens", tuple(self.hyp_tokens))
        object.__setattr__(self, "token_confidences", tuple(float(c) for c in self.token_confidences))
        if len(self.hyp_tokens) != len(self.token_confidences):
            raise ValueError("one confidence per hypothesis token")
        if not 0.0 <= self.utt_confidence <= 1.0:
            raise ValueError(f"confidence {self.utt_confidence} outside [0, 1]")
        if not self.hyp_tokens:
            if self.utt_confidence != 0.0:
                raise ValueError("empty hypothesis must have confidence 0")
        elif abs(float(np.mean(self.token_confidences)) - self.utt_confidence) > 1e-9:
            raise ValueError("utterance confidence must be the mean token confidence")

    @classmethod
    def from_tokens(cls, utt_id, pair, tokens, token_confidences):
        tokens = tuple(tokens)
        conf = float(np.mean(token_confidences)) if tokens else 0.0
        return cls(utt_id, pair, tokens, tuple(token_confidences), conf)

    @classmethod
    def uniform(cls, utt_id, pair, tokens, confidence):
        """Result whose tokens all share the utterance confidence."""
        tokens = tuple(tokens)
        if not tokens:
            confidence = 0.0
        return cls(utt_id, pair, tokens, (confidence,) * len(tokens), confidence)

    def to_line(self):
        hyp = " ".join(str(t) for t in self.hyp_tokens)
        return f"{self.utt_id}\t{self.pair}\t{self.utt_confidence!r}\t{hyp}"

    @classmethod
    def from_line(cls, line, lineno=0):
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ParseError(lineno, "expected '<utt_id>\\t<pair>\\t<conf>\\t<tokens>'")
        uid, pair, conf, hyp = parts
        try:
            c = float(conf)
        except ValueError:
            raise ParseError(lineno, f"bad confidence {conf!r}") from None
        if not 0.0 <= c <= 1.0:
            raise ParseError(lineno, f"confidence {c} outside [0, 1]")
        tokens = []
        for item in hyp.split():
            surface, sep, lang = item.rpartition("/")
            if not sep or not surface or not lang:
                raise ParseError(lineno, f"token {item!r} lacks a /lang tag")
            tokens.append(Token(surface, lang))
        return cls.uniform(uid, pair, tokens, c)


class ThresholdPolicy:
    """NT never filters, T_P1 filters the first pass, T_P1P2 filters every pass."""

    MODES = ("NT", "T_P1", "T_P1P2")
    _CLI = {"nt": "NT", "tp1": "T_P1", "tp1p2": "T_P1P2"}

    def __init__(self, mode):
        mode = self._CLI.get(mode, mode)
        if mode not in self.MODES:
            raise ValueError(f"unknown threshold mode {mode!r}")
        self.mode = mode

    def __repr__(self):
        return f"ThresholdPolicy({self.mode!r})"

    def __eq__(self, other):
        return isinstance(other, ThresholdPolicy) and other.mode == self.mode

    def active(self, pass_index):
        if self.mode == "NT":
            return False
        if self.mode == "T_P1":
            return pass_index == 1
        return True


def assign_pair(results, pairs=DEFAULT_PAIRS):
    """Most confident result; exact ties go to the earlier registered pair."""
    results = list(results)
    if not results:
        raise NoResults("no decode results for utterance")
    order = {p.id: k for k, p in enumerate(pairs)}
    best = min(results, key=lambda r: (-r.utt_confidence, order.get(r.pair, len(order)), r.pair))
    return best.pair, best


def assign_all(results, pairs=DEFAULT_PAIRS):
    """Group decode results by utterance and label each with its winning pair."""
    by_utt = {}
    for r in results:
        by_utt.setdefault(r.utt_id, []).append(r)
    assigned = {p.id: [] for p in pairs}
    for uid in sorted(by_utt):
        pair, best = assign_pair(by_utt[uid], pairs)
        assigned.setdefault(pair, []).append(best)
    return assigned


def compute_thresholds(assigned):
    """Mean utterance confidence per pair; pairs with nothing assigned get none.

    The floating-point mean is clamped to the observed range: the exact mean
    never leaves it, but rounding can (three confidences of 0.1 average to
    0.10000000000000002), which would wrongly drop every utterance.
    """
    out = {}
    for pair, results in assigned.items():
        if results:
            c = [r.utt_confidence for r in results]
            out[pair] = min(max(float(np.mean(c)), min(c)), max(c))
    return out


@dataclass
class Selection:
    manifest: Manifest
    retained: dict
    thresholds: dict
    active: bool


def select(assigned, thresholds, active, pass_index, source=""):
    """Keep utterances at or above their pair's threshold (everything if inactive)."""
    retained = {}
    for pair, results in assigned.items():
        if not active:
            retained[pair] = list(results)
        elif pair in thresholds:
            t = thresholds[pair]
            retained[pair] = [r for r in results if r.utt_confidence >= t]
        else:
            retained[pair] = []
    entries = sorted((r.utt_id, autot(pass_index)) for rs in retained.values() for r in rs)
    manifest = Manifest(f"autot.pass{pass_index}", entries, source)
    return Selection(manifest, retained, dict(thresholds), active)


# --- reports ---------------------------------------------------------------


@dataclass
class PairStats:
    assigned: int = 0
    retained: int = 0
    threshold: float = None
    assigned_duration_s: float = 0.0
    retained_duration_s: float = 0.0


@dataclass
class PassReport:
    pass_index: int
    policy: str
    active: bool
    pairs: dict
    n_untranscribed: int
    manifests: dict = field(default_factory=dict)
    autot_model: dict = field(default_factory=dict)
    asr_model: dict = field(default_factory=dict)

    @property
    def assigned(self):
        return sum(s.assigned for s in self.pairs.values())

    @property
    def retained(self):
        return sum(s.retained for s in self.pairs.values())

    @property
    def retained_duration_s(self):
        return sum(s.retained_duration_s for s in self.pairs.values())

    def to_dict(self):
        return {
            "pass": self.pass_index,
            "policy": self.policy,
            "active": self.active,
            "n_untranscribed": self.n_untranscribed,
            "pairs": {
                k: {
                    "assigned": s.assigned,
                    "retained": s.retained,
                    "threshold": s.threshold,
                    "assigned_duration_s": s.assigned_duration_s,
                    "retained_duration_s": s.retained_duration_s,
                }
                for k, s in self.pairs.items()
            },
            "retained": self.retained,
            "retained_duration_s": self.retained_duration_s,
            "manifests": dict(self.manifests),
            "autot_model": self.autot_model,
            "asr_model": self.asr_model,
        }

    @classmethod
    def from_dict(cls, d):
        pairs = {
            k: PairStats(
                v["assigned"], v["retained"], v["threshold"], v["assigned_duration_s"], v["retained_duration_s"]
            )
            for k, v in d["pairs"].items()
        }
        return cls(
            d["pass"], d["policy"], d["active"], pairs, d["n_untranscribed"],
            d.get("manifests", {}), d.get("autot_model", {}), d.get("asr_model", {}),
        )


def format_selection_table(reports):
    """Utterances per language pair and pass, with the retained total and hours."""
    pair_ids = list(reports[0].pairs) if reports else []
    cols = ["Pass", "Policy"] + pair_ids + ["TOTAL"]
    rows = []
    for r in reports:
        total = f"{r.retained} ({r.retained_duration_s / 3600.0:.1f} h)"
        rows.append([str(r.pass_index), r.policy] + [str(r.pairs[p].retained) for p in pair_ids] + [total])
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(widths[i]) for i, c in enumerate(cols))]
    lines += ["  ".join(v.rjust(widths[i]) for i, v in enumerate(row)) for row in rows]
    for r in reports:
        ts = ", ".join(
            f"{p} {'-' if s.threshold is None else f'{s.threshold:.3f}'}" for p, s in r.pairs.items()
        )
        state = "on" if r.active else "off"
        lines.append(f"# pass {r.pass_index}: filtering {state}; thresholds (mean confidence): {ts}")
    return "\n".join(lines)


def pass_report(pass_index, policy, selection, assigned, corpus, n_untranscribed):
    stats = {}
    for pair, results in assigned.items():
        kept = selection.retained.get(pair, [])
        stats[pair] = PairStats(
            assigned=len(results),
            retained=len(kept),
            threshold=selection.thresholds.get(pair),
            assigned_duration_s=sum(corpus[r.utt_id].duration_s for r in results),
            retained_duration_s=sum(corpus[r.utt_id].duration_s for r in kept),
        )
    return PassReport(pass_index, policy.mode, selection.active, stats, n_untranscribed)


# --- decoder / trainer interfaces -----------------------------------------


class Decoder(Protocol):
    def decode(self, requests, state):
        """Return one DecodeResult per ``(utt_id, pair_id)`` request."""


class Trainer(Protocol):
    def train(self, trainset, transcripts, corpus, tag):
        """Train on ``trainset``; ``transcripts`` maps automatic ids to token tuples."""

    def describe(self, state):
        """JSON-serializable summary of a state."""


def transcripts_corpus(corpus, results, name=""):
    """Hypotheses as a corpus (speaker and duration from the source corpus)."""
    utts = []
    langs = list(corpus.langs)
    for r in sorted(results, key=lambda r: r.utt_id):
        src = corpus[r.utt_id]
        for t in r.hyp_tokens:
            if t.lang not in langs:
                langs.append(t.lang)
        utts.append(Utterance(r.utt_id, src.speaker, src.duration_s, r.hyp_tokens))
    return Corpus(langs, utts, name)


def parse_decoder_output(text, requests):
    """Parse protocol response lines and check they answer exactly ``requests``."""
    wanted = set(requests)
    got = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = DecodeResult.from_line(line, lineno)
        except (ParseError, ValueError) as e:
            raise DecoderProtocolError(f"malformed decoder response: {e}") from None
        key = (r.utt_id, r.pair)
        if key not in wanted:
            raise DecoderProtocolError(f"unrequested decoder response for {key}")
        if key in got:
            raise DecoderProtocolError(f"duplicate decoder response for {key}")
        got[key] = r
    missing = wanted - set(got)
    if missing:
        raise DecoderProtocolError(f"decoder gave no response for {len(missing)} requests, e.g. {min(missing)}")
    return [got[k] for k in requests]


class ExternalDecoder:
    """Runs a command speaking the line protocol, once per pass.

    Requests ``<utt_id>\\t<pair>`` go to its stdin; it must answer with one
    ``<utt_id>\\t<pair>\\t<conf>\\t<word/lang ...>`` line each. ``{state}`` in
    the command is replaced by the trainer's state string.
    """

    def __init__(self, command, timeout_s=600.0):
        self.command = list(command)
        self.timeout_s = timeout_s

    def decode(self, requests, state):
        cmd = [c.replace("{state}", "" if state is None else str(state)) for c in self.command]
        payload = "".join(f"{u}\t{p}\n" for u, p in requests)
        try:
            proc = subprocess.run(
                cmd, input=payload, capture_output=True, text=True, timeout=self.timeout_s, check=False
            )
        except subprocess.TimeoutExpired:
            raise DecoderProtocolError(f"decoder timed out after {self.timeout_s} s") from None
        except OSError as e:
            raise DecoderProtocolError(f"cannot run decoder: {e}") from None
        if proc.returncode != 0:
            raise DecoderProtocolError(f"decoder exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        return parse_decoder_output(proc.stdout, list(requests))


class StaticTrainer:
    """Trainer for fixed external systems: the state is a constant string."""

    def __init__(self, state=""):
        self.state = state

    def train(self, trainset, transcripts, corpus, tag):
        return self.state

    def describe(self, state):
        return {"state": state}


# --- pipeline --------------------------------------------------------------


@dataclass
class PipelineConfig:
    corpus: str
    mant: str
    untranscribed: str
    run_dir: str
    ood: str = None
    policy: str = "NT"
    passes: int = 2
    seed: int = 0
    pairs: tuple = tuple(p.id for p in DEFAULT_PAIRS)
    decoder: dict = field(default_factory=lambda: {"type": "sim"})
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir="."):
        known = {"corpus", "mant", "untranscribed", "run_dir", "ood", "policy", "passes", "seed", "pairs", "decoder"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown pipeline config keys: {sorted(unknown)}")
        missing = {"corpus", "mant", "untranscribed", "run_dir", "seed"} - set(d)
        if missing:
            raise DataError(f"pipeline config lacks {sorted(missing)}")
        cfg = cls(**{k: v for k, v in d.items()}, base_dir=str(base_dir))
        cfg.pairs = tuple(cfg.pairs)
        ThresholdPolicy(cfg.policy)
        if not isinstance(cfg.passes, int) or cfg.passes < 1:
            raise DataError("passes must be a positive integer")
        if not isinstance(cfg.seed, int):
            raise DataError("seed must be an integer")
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path, encoding="utf-8") as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ParseError(e.lineno, f"invalid JSON: {e.msg}") from None
        return cls.from_dict(d, base_dir=path.parent)

    def to_dict(self):
        return {
            "corpus": self.corpus,
            "mant": self.mant,
            "ood": self.ood,
            "untranscribed": self.untranscribed,
            "run_dir": self.run_dir,
            "policy": ThresholdPolicy(self.policy).mode,
            "passes": self.passes,
            "seed": self.seed,
            "pairs": list(self.pairs),
            "decoder": self.decoder,
        }

    def path(self, p):
        return Path(self.base_dir) / p

    @property
    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def load_id_list(path):
    """Ids from a manifest-like file: first tab field of every non-comment line."""
    ids = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip() and not line.startswith("#"):
                ids.append(line.rstrip("\n").split("\t")[0].strip())
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate ids in {path}")
    return ids


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest_text(manifest):
    buf = io.StringIO()
    write_manifest(manifest, buf)
    return buf.getvalue()


def _corpus_text(corpus):
    buf = io.StringIO()
    write_corpus(corpus, buf, "jsonl")
    return buf.getvalue()


def run_record(cfg, completed, outputs, started, finished=None):
    return {
        "command": "pipeline run",
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "versions": {
            "cswitch": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timestamps": {"started": started, "finished": finished},
        "completed_passes": completed,
        "outputs": sorted(outputs),
    }


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def run_pipeline(cfg, decoder, trainer, resume=True):
    """Run every pass; returns one :class:`PassReport` per pass.

    Outputs land in ``cfg.run_dir``. A pass whose report is already on disk
    under the same config hash is loaded instead of recomputed.
    """
    run_dir = cfg.path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    policy = ThresholdPolicy(cfg.policy)
    pairs = get_pairs(cfg.pairs)
    pair_ids = [p.id for p in pairs]

    corpus = load_corpus(cfg.path(cfg.corpus), name=cfg.corpus)
    mant = load_manifest(cfg.path(cfg.mant), name="mant", source=cfg.corpus).check(corpus)
    ood = (
        load_manifest(cfg.path(cfg.ood), name="ood", source=cfg.corpus).check(corpus)
        if cfg.ood
        else Manifest("ood", (), cfg.corpus)
    )
    for m, label in ((mant, "ManT"), (ood, "OOD")):
        bad = [u for u, p in m.entries if p != label]
        if bad:
            raise DataError(f"{m.name} manifest must carry {label} provenance, e.g. {bad[0]!r}")
    pool = sorted(load_id_list(cfg.path(cfg.untranscribed)))
    for u in pool:
        corpus[u]

    record_path = run_dir / "run.json"
    done = 0
    started = _now()
    if resume and record_path.exists():
        with open(record_path, encoding="utf-8") as f:
            old = json.load(f)
        if old.get("config_hash") == cfg.hash:
            done = int(old.get("completed_passes", 0))
            started = old.get("timestamps", {}).get("started", started)
    outputs = []
    reports = []
    prev_autot = Manifest("autot.pass0", (), cfg.corpus)
    prev_transcripts = {}

    for p in range(1, cfg.passes + 1):
        names = {
            "autot_model_trainset": f"autot_model.pass{p}.manifest",
            "decodes": f"decode.pass{p}.tsv",
            "autot": f"autot.pass{p}.manifest",
            "transcripts": f"autot.pass{p}.transcripts.jsonl",
            "asr_trainset": f"asr.pass{p}.manifest",
            "report": f"report.pass{p}.json",
        }
        outputs.extend(names.values())
        if p <= done and all((run_dir / n).exists() for n in names.values()):
            log.info("pass %d already complete, loading", p)
            with open(run_dir / names["report"], encoding="utf-8") as f:
                reports.append(PassReport.from_dict(json.load(f)))
            prev_autot = load_manifest(run_dir / names["autot"], name=f"autot.pass{p}", source=cfg.corpus)
            with open(run_dir / names["transcripts"], encoding="utf-8") as f:
                tc = parse_corpus(f, "jsonl")
            prev_transcripts = {u.id: u.tokens for u in tc}
            continue

        autot_train = union([mant, ood, prev_autot], name=f"autot_model.pass{p}")
        state = trainer.train(autot_train, prev_transcripts, corpus, f"autot.pass{p}")
        requests = [(u, pair) for u in pool for pair in pair_ids]
        results = decoder.decode(requests, state) if requests else []
        assigned = assign_all(results, pairs)
        thresholds = compute_thresholds(assigned)
        selection = select(assigned, thresholds, policy.active(p), p, source=cfg.corpus)
        kept = [r for rs in selection.retained.values() for r in rs]
        transcripts = {r.utt_id: r.hyp_tokens for r in kept}
        asr_train = union([mant, selection.manifest], name=f"asr.pass{p}")
        asr_state = trainer.train(asr_train, transcripts, corpus, f"asr.pass{p}")

        report = pass_report(p, policy, selection, assigned, corpus, len(pool))
        report.manifests = {k: v for k, v in names.items() if k != "report"}
        report.autot_model = trainer.describe(state)
        report.asr_model = trainer.describe(asr_state)

        _write_text(run_dir / names["autot_model_trainset"], _manifest_text(autot_train))
        _write_text(
            run_dir / names["decodes"],
            "".join(r.to_line() + "\n" for r in sorted(results, key=lambda r: (r.utt_id, pair_ids.index(r.pair)))),
        )
        _write_text(run_dir / names["autot"], _manifest_text(selection.manifest))
        _write_text(run_dir / names["transcripts"], _corpus_text(transcripts_corpus(corpus, kept, names["autot"])))
        _write_text(run_dir / names["asr_trainset"], _manifest_text(asr_train))
        _write_json(run_dir / names["report"], report.to_dict())
        # the report is written last: its presence marks the pass complete
        _write_json(record_path, run_record(cfg, p, outputs, started))
        reports.append(report)
        prev_autot, prev_transcripts = selection.manifest, transcripts

    _write_json(record_path, run_record(cfg, cfg.passes, outputs, started, _now()))
    return reports


def decode_file_results(path):
    """Read protocol response lines (e.g. a ``decode.pass<p>.tsv``)."""
    results = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                results.append(DecodeResult.from_line(line, lineno))
    return results
