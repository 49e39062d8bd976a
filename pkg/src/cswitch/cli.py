"""Command-line entry point: ``cswitch <command> ...``.

Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.
``--json`` switches any report to machine-readable output on stdout.
"""

import argparse
import importlib.resources
import json
import logging
import os
import sys
import traceback
import warnings
from pathlib import Path

from . import __version__
from .corpus import corpus_stats, load_corpus, load_manifest, save_corpus, save_manifest
from .cs_metrics import cs_perplexity, cs_perplexity_json, format_perplexity_table
from .decoder_sim import (
    TrainState,
    build_backend,
    compare_policies,
    format_comparison,
    load_simulator,
    make_fixture,
    serve,
)
from .errors import DataError
from .ngram import (
    MixtureLM,
    Vocabulary,
    fit_weights,
    load_arpa,
    load_vocab,
    perplexity,
    save_arpa,
    train,
    write_vocab,
)
from .scoring import (
    align_corpora,
    bootstrap,
    format_accuracy_table,
    format_wer_table,
    score_report,
    switch_metrics,
    wer,
    wer_per_language,
)
from .semisup import (
    PipelineConfig,
    ThresholdPolicy,
    assign_all,
    compute_thresholds,
    decode_file_results,
    format_selection_table,
    get_pairs,
    pass_report,
    run_pipeline,
    select,
    transcripts_corpus,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("cswitch")


def load_schema(name):
    """JSON schema shipped for the ``--json`` output of command ``name``."""
    text = importlib.resources.files("cswitch").joinpath("schemas", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse parser that exits with the usage status instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, obj, text):
    if args.json:
        print(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False))
    else:
        print(text)


def _named(spec):
    """``NAME=PATH`` or ``PATH`` (name = file stem)."""
    name, sep, path = spec.partition("=")
    if not sep:
        return Path(spec).stem, spec
    return name, path


def _threads(args):
    return args.threads if args.threads else (os.cpu_count() or 1)


# --- stats -------------------------------------------------------------------


def cmd_stats(args):
    corpus = load_corpus(args.corpus)
    split = load_manifest(args.split) if args.split else None
    stats = corpus_stats(corpus, split, include_untranscribed=args.include_untranscribed)
    _emit(args, stats.to_dict(), stats.format_table())


# --- language models ---------------------------------------------------------


def load_lm(path, vocab=None):
    """ARPA file, or a JSON mixture written by ``cswitch interpolate``."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as f:
            spec = json.load(f)
        try:
            comps = [load_lm(path.parent / c, vocab) for c in spec["components"]]
            return MixtureLM(comps, spec["weights"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: bad mixture file ({e})") from None
    return load_arpa(path, vocab)


def cmd_train_lm(args):
    text = load_corpus(args.text)
    if args.vocab:
        vocab = load_vocab(args.vocab, open_vocab=args.unk)
    else:
        extra = [load_corpus(p) for p in args.vocab_from]
        vocab = Vocabulary.from_corpus(text, *extra, open_vocab=args.unk)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = train(text, args.order, args.smoothing, vocab, fallback=not args.no_fallback)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    save_arpa(model, args.out)
    if args.vocab_out:
        with open(args.vocab_out, "w", encoding="utf-8") as f:
            write_vocab(vocab, f)
    info = {
        "model": args.out,
        "order": model.order,
        "smoothing": model.smoothing,
        "vocab_size": len(vocab),
        "ngrams": [len(p) for p in model.probs],
    }
    _emit(args, info, f"wrote {args.out}: order {model.order}, {model.smoothing}, "
          f"{len(vocab)} words, n-grams {info['ngrams']}")


def cmd_interpolate(args):
    vocab = load_vocab(args.vocab) if args.vocab else None
    comps = [load_lm(p, vocab) for p in args.model]
    dev = load_corpus(args.dev)
    mix = fit_weights(comps, dev, max_iter=args.max_iter, tol=args.tol)
    out = {
        "components": [os.path.relpath(Path(p).resolve(), Path(args.out).resolve().parent) if args.out else p
                       for p in args.model],
        "weights": mix.weights,
        "dev_perplexity": mix.dev_perplexity,
        "history": mix.history,
        "iterations": len(mix.history) - 1,
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(out, f, indent=2)
            f.write("\n")
    lines = [f"{p}\t{w:.6f}" for p, w in zip(args.model, mix.weights)]
    lines.append(f"# dev perplexity {mix.dev_perplexity:.3f} after {out['iterations']} EM updates")
    _emit(args, out, "\n".join(lines))


def cmd_perplexity(args):
    vocab = load_vocab(args.vocab) if args.vocab else None
    text = load_corpus(args.text)
    dev = load_corpus(args.dev) if args.dev else None
    rows, dev_pp, records = [], {}, []
    for spec in args.model:
        name, path = _named(spec)
        lm = load_lm(path, vocab)
        d = perplexity(lm, dev).pp if dev is not None else None
        if args.cs:
            rep = cs_perplexity(lm, text)
            rows.append((name, rep))
            dev_pp[name] = d
            records.append(cs_perplexity_json(name, rep, d))
        else:
            p = perplexity(lm, text)
            rows.append((name, p))
            dev_pp[name] = d
            records.append({"lm": name, "pp": p.pp, "pp_dev": d, "n_scored": p.n_scored})
    if args.cs:
        used = {t.lang for u in text for t in u.tokens}
        langs = args.langs.split(",") if args.langs else [l for l in text.langs if l in used]
        text_out = format_perplexity_table(rows, langs, dev_pp if dev else None)
    else:
        w = max(len("LM"), *(len(n) for n, _ in rows))
        lines = [f"{'LM':<{w}}  {'PP (dev)':>9}  {'PP':>9}"]
        for name, p in rows:
            d = dev_pp[name]
            lines.append(f"{name:<{w}}  {'-' if d is None else f'{d:.1f}':>9}  {p.pp:>9.1f}")
        text_out = "\n".join(lines)
    _emit(args, {"models": records}, text_out)


# --- scoring -----------------------------------------------------------------


def _hyp_map(path):
    return {u.id: u for u in load_corpus(path)}


def cmd_score(args):
    refs = load_corpus(args.ref)
    lang_of = load_vocab(args.vocab) if args.vocab else None
    dev_refs = load_corpus(args.dev_ref) if args.dev_ref else None
    dev_hyps = dict(_named(s) for s in args.dev_hyp)
    if dev_hyps and dev_refs is None:
        raise UsageError("--dev-hyp needs --dev-ref")
    langs = args.langs.split(",") if args.langs else [
        l for l in refs.langs if any(t.lang == l for u in refs for t in u.tokens)
    ]
    systems, accuracy, records = [], [], []
    for spec in args.hyp:
        name, path = _named(spec)
        pairs = align_corpora(refs, _hyp_map(path))
        test = wer(pairs)
        per_lang = wer_per_language(pairs, lang_of)
        dev = None
        if name in dev_hyps:
            dev = wer(align_corpora(dev_refs, _hyp_map(dev_hyps[name])))
        systems.append((name, dev, test, per_lang))
        rec = {"system": name, **score_report(pairs, lang_of, langs)}
        rec["dev_wer"] = dev.to_dict() if dev else None
        if not args.switch_metrics:
            del rec["switch"]
        records.append(rec)
        if args.switch_metrics:
            accuracy.append((name, switch_metrics(pairs, lang_of, langs)))
    text = format_wer_table(systems, langs)
    if args.switch_metrics:
        text += "\n\n" + format_accuracy_table(accuracy)
    _emit(args, {"systems": records}, text)


def cmd_bootstrap(args):
    if args.seed is None:
        raise UsageError("bootstrap resampling needs an explicit --seed")
    if args.resamples < 1000:
        raise UsageError("--resamples must be at least 1000")
    refs = load_corpus(args.ref)
    pa = align_corpora(refs, _hyp_map(args.hyp_a))
    pb = align_corpora(refs, _hyp_map(args.hyp_b))
    res = bootstrap(pa, pb, args.resamples, args.seed, _threads(args), args.confidence)
    d = res.to_dict()
    d["confidence"] = args.confidence
    _emit(args, d, res.format(Path(args.hyp_a).stem, Path(args.hyp_b).stem))


# --- semi-supervised selection -----------------------------------------------


def cmd_select(args):
    if args.pass_index < 1:
        raise UsageError("--pass must be >= 1")
    corpus = load_corpus(args.corpus)
    pairs = get_pairs(args.pairs.split(",") if args.pairs else None)
    results = decode_file_results(args.decodes)
    for r in results:
        corpus[r.utt_id]
    policy = ThresholdPolicy(args.threshold_mode)
    assigned = assign_all(results, pairs)
    thresholds = compute_thresholds(assigned)
    sel = select(assigned, thresholds, policy.active(args.pass_index), args.pass_index, source=args.corpus)
    n = len({r.utt_id for r in results})
    report = pass_report(args.pass_index, policy, sel, assigned, corpus, n)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        man = out / f"autot.pass{args.pass_index}.manifest"
        tr = out / f"autot.pass{args.pass_index}.transcripts.jsonl"
        save_manifest(sel.manifest, man)
        kept = [r for rs in sel.retained.values() for r in rs]
        save_corpus(transcripts_corpus(corpus, kept, man.name), tr)
        report.manifests = {"autot": str(man), "transcripts": str(tr)}
    _emit(args, report.to_dict(), format_selection_table([report]))


def cmd_pipeline(args):
    cfg = PipelineConfig.load(args.config)
    decoder, trainer = build_backend(cfg.decoder, cfg.pairs, cfg.base_dir, _threads(args))
    reports = run_pipeline(cfg, decoder, trainer, resume=not args.no_resume)
    obj = {
        "run_dir": str(cfg.path(cfg.run_dir)),
        "config_hash": cfg.hash,
        "passes": [r.to_dict() for r in reports],
    }
    _emit(args, obj, format_selection_table(reports))


# --- simulator ---------------------------------------------------------------


def cmd_sim_fixture(args):
    if args.seed is None:
        raise UsageError("fixture generation needs an explicit --seed")
    path = make_fixture(
        args.out, seed=args.seed, n_untranscribed=args.n_untranscribed, n_mant=args.n_mant,
        n_ood=args.n_ood, policy=args.policy,
    )
    _emit(args, {"config": str(path)}, f"wrote fixture; pipeline config {path}")


def cmd_sim_serve(args):
    sim = load_simulator(args.truth, args.truth_pairs, args.params, args.pairs.split(",") if args.pairs else None)
    state = TrainState.from_dict(json.loads(args.state)) if args.state else sim.params.initial_state()
    serve(sim, state)


def cmd_sim_compare(args):
    outcomes = compare_policies(args.config, threads=_threads(args))
    obj = {
        "policies": [
            {
                "policy": o.policy,
                "retained": o.retained,
                "label_noise": o.label_noise,
                "asr_multiplier": o.asr_multiplier,
                "asr_expected_wer": o.asr_expected_wer,
            }
            for o in outcomes
        ]
    }
    _emit(args, obj, format_comparison(outcomes))


# --- parser ------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    threads = argparse.ArgumentParser(add_help=False)
    threads.add_argument("--threads", type=int, default=None,
                         help="worker threads (default: all cores); results do not depend on it")

    p = Parser(prog="cswitch", description="Code-switched speech corpus, LM and scoring toolkit.")
    p.add_argument("--version", action="version", version=f"cswitch {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True

    s = sub.add_parser("stats", parents=[common], help="per-language duration and token statistics")
    s.add_argument("--corpus", required=True, help="corpus file (.jsonl or tagged text)")
    s.add_argument("--split", help="restrict to the ids of this manifest")
    s.add_argument("--include-untranscribed", action="store_true", help="count untranscribed duration too")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train-lm", parents=[common], help="train a backoff n-gram model, write ARPA")
    s.add_argument("--text", required=True, help="training corpus")
    s.add_argument("--out", required=True, help="output ARPA file")
    s.add_argument("--order", type=int, default=3, choices=range(1, 6), metavar="N", help="n-gram order 1..5 (default 3)")
    s.add_argument("--smoothing", default="kneser-ney", choices=["kneser-ney", "witten-bell"])
    s.add_argument("--vocab", help="word<TAB>lang vocabulary file (default: words of --text)")
    s.add_argument("--vocab-from", action="append", default=[], metavar="CORPUS",
                   help="add the words of another corpus to the vocabulary (repeatable)")
    s.add_argument("--vocab-out", help="write the vocabulary used")
    s.add_argument("--unk", action="store_true", help="open vocabulary with <unk>")
    s.add_argument("--no-fallback", action="store_true",
                   help="fail instead of falling back to Witten-Bell when discounts are undefined")
    s.set_defaults(func=cmd_train_lm)

    s = sub.add_parser("interpolate", parents=[common], help="fit mixture weights on a dev set by EM")
    s.add_argument("--model", action="append", required=True, help="component model (repeat, >= 2)")
    s.add_argument("--dev", required=True, help="development corpus")
    s.add_argument("--vocab", help="vocabulary file shared by the components")
    s.add_argument("--out", help="write the mixture as JSON (usable as a model elsewhere)")
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-6, help="stop when the per-event log-likelihood gain is below this")
    s.set_defaults(func=cmd_interpolate)

    s = sub.add_parser("perplexity", parents=[common], help="perplexity, optionally split at code switches")
    s.add_argument("--model", action="append", required=True, metavar="[NAME=]PATH",
                   help="ARPA file or mixture JSON (repeat for several rows)")
    s.add_argument("--text", required=True, help="evaluation corpus")
    s.add_argument("--dev", help="development corpus for the PP (dev) column")
    s.add_argument("--cs", action="store_true", help="add MPP per language, MPP and CPP columns")
    s.add_argument("--langs", help="comma-separated language columns (default: languages in --text)")
    s.add_argument("--vocab", help="vocabulary file for the models")
    s.set_defaults(func=cmd_perplexity)

    s = sub.add_parser("score", parents=[common], help="WER per system and language, switch-point accuracy")
    s.add_argument("--ref", required=True, help="reference corpus (test)")
    s.add_argument("--hyp", action="append", required=True, metavar="[NAME=]PATH",
                   help="hypothesis corpus (repeat per system)")
    s.add_argument("--dev-ref", help="development references")
    s.add_argument("--dev-hyp", action="append", default=[], metavar="NAME=PATH",
                   help="development hypotheses for the system NAME")
    s.add_argument("--switch-metrics", action="store_true", help="add the switch-point accuracy table")
    s.add_argument("--vocab", help="word<TAB>lang file used to tag words (default: token tags)")
    s.add_argument("--langs", help="comma-separated language columns")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("bootstrap", parents=[common, threads], help="paired bootstrap test between two systems")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp-a", required=True)
    s.add_argument("--hyp-b", required=True)
    s.add_argument("--seed", type=int, help="random seed (required)")
    s.add_argument("--resamples", type=int, default=10000)
    s.add_argument("--confidence", type=float, default=0.95)
    s.set_defaults(func=cmd_bootstrap)

    s = sub.add_parser("select", parents=[common], help="assign pairs and threshold one pass of decodes")
    s.add_argument("--decodes", required=True, help="decoder response lines (utt, pair, conf, tokens)")
    s.add_argument("--corpus", required=True, help="corpus holding the decoded utterances")
    s.add_argument("--threshold-mode", required=True, choices=["nt", "tp1", "tp1p2"])
    s.add_argument("--pass", dest="pass_index", type=int, required=True, metavar="N")
    s.add_argument("--pairs", help="comma-separated pair registry order (default EZ,EX,ES,ET)")
    s.add_argument("--out-dir", help="write autot.pass<N>.manifest and transcripts here")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("pipeline", help="semi-supervised training pipeline")
    psub = s.add_subparsers(dest="action", metavar="action", parser_class=Parser)
    psub.required = True
    r = psub.add_parser("run", parents=[common, threads], help="run all passes from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--no-resume", action="store_true", help="recompute passes already on disk")
    r.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("simulate", help="synthetic decoder for desk-scale pipeline runs")
    ssub = s.add_subparsers(dest="action", metavar="action", parser_class=Parser)
    ssub.required = True
    f = ssub.add_parser("fixture", parents=[common], help="write a synthetic corpus and pipeline config")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, help="random seed (required)")
    f.add_argument("--n-untranscribed", type=int, default=200)
    f.add_argument("--n-mant", type=int, default=100)
    f.add_argument("--n-ood", type=int, default=60)
    f.add_argument("--policy", default="NT", choices=["NT", "T_P1", "T_P1P2"])
    f.set_defaults(func=cmd_sim_fixture)
    f = ssub.add_parser("serve", help="answer decoder protocol requests on stdin")
    f.add_argument("--truth", required=True)
    f.add_argument("--truth-pairs", required=True)
    f.add_argument("--params", required=True)
    f.add_argument("--state", help="trainer state as JSON (default: untrained)")
    f.add_argument("--pairs")
    f.set_defaults(func=cmd_sim_serve, json=False, verbose=False)
    f = ssub.add_parser("compare", parents=[common, threads], help="run every threshold policy on one fixture")
    f.add_argument("--config", required=True)
    f.set_defaults(func=cmd_sim_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        print(f"cswitch: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, json.JSONDecodeError) as e:
        print(f"cswitch: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
