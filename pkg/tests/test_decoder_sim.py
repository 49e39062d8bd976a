import io
import json
import sys

import numpy as np
import pytest

from cswitch.corpus import Corpus, Manifest, Token, Utterance
from cswitch.decoder_sim import (
    ChannelParams,
    PairRates,
    SimDecoder,
    SimTrainer,
    Simulator,
    Tally,
    TrainState,
    compare_policies,
    effective_hours,
    format_comparison,
    load_simulator,
    make_fixture,
    serve,
    simulate_train,
)
from cswitch.errors import DataError
from cswitch.scoring import align, wer
from cswitch.semisup import DEFAULT_PAIRS, ExternalDecoder, assign_pair, get_pairs

LANGS = ("en", "zu", "xh", "st", "tn")


def truth_corpus(n_utts, seed=0, pairs=("EZ",)):
    """Random truth utterances; each gets a true pair from ``pairs``."""
    r = np.random.default_rng(seed)
    langs = {p.id: p.langs for p in DEFAULT_PAIRS}
    utts, tp = [], {}
    for k in range(n_utts):
        pid = pairs[k % len(pairs)]
        n = int(r.integers(6, 17))
        toks = tuple(
            Token(f"{l}{int(r.integers(150)):03d}", l) for l in (langs[pid][int(r.integers(2))] for _ in range(n))
        )
        uid = f"t{k:05d}"
        utts.append(Utterance(uid, "spk", 0.4 * n, toks))
        tp[uid] = pid
    return Corpus(LANGS, utts, "truth"), tp


def sim_for(rates, n_utts=200, seed=0, noise=0.0, penalty=0.3, pair_ids=("EZ",), truth_pairs=("EZ",)):
    truth, tp = truth_corpus(n_utts, seed, truth_pairs)
    params = ChannelParams({p: rates for p in pair_ids}, confidence_noise_sd=noise, mismatch_penalty=penalty, seed=seed)
    return Simulator(truth, tp, params, get_pairs(list(pair_ids)))


# --- channel ------------------------------------------------------------------


def test_zero_rates_reproduce_reference():
    sim = sim_for((0.0, 0.0, 0.0))
    st = sim.params.initial_state()
    for u in sim.truth:
        r = sim.decode_one(u.id, "EZ", st)
        assert r.hyp_tokens == u.tokens and r.utt_confidence == 1.0


def test_near_total_substitution():
    sim = sim_for((0.999, 0.0, 0.0))
    st = sim.params.initial_state()
    matches = total = 0
    for u in sim.truth:
        hyp, _ = sim.hypothesis(u.id, "EZ", st)
        assert len(hyp) == len(u.tokens)
        matches += sum(a == b for a, b in zip(hyp, u.tokens))
        total += len(hyp)
    assert matches / total < 0.01


def test_substitutes_come_from_pair_vocabulary():
    sim = sim_for((0.5, 0.0, 0.3), pair_ids=("EZ", "ES"), truth_pairs=("EZ", "ES"))
    st = sim.params.initial_state()
    for u in list(sim.truth)[:50]:
        for pair in ("EZ", "ES"):
            hyp, _ = sim.hypothesis(u.id, pair, st)
            allowed = set(get_pairs([pair])[0].langs)
            # kept reference words keep their language; introduced words are the pair's
            introduced = [t for t in hyp if t not in u.tokens]
            assert introduced and all(t.lang in allowed for t in introduced)


def test_calibration_tally_and_alignment():
    sim = sim_for((0.1, 0.05, 0.05), n_utts=1000)
    st = sim.params.initial_state()
    tally, pairs = Tally(), []
    for u in sim.truth:
        hyp, t = sim.hypothesis(u.id, "EZ", st)
        tally = tally + t
        pairs.append(align(u.tokens, hyp, u.id))
    assert tally.n >= 10_000
    assert abs(100.0 * tally.events / tally.n - 20.0) <= 2.0
    assert abs(wer(pairs).wer - 20.0) <= 2.0


def test_confidence_is_one_minus_alignment_wer():
    sim = sim_for((0.1, 0.05, 0.05), n_utts=150)
    st = sim.params.initial_state()
    for u in sim.truth:
        r = sim.decode_one(u.id, "EZ", st)
        p = align(u.tokens, r.hyp_tokens)
        assert r.utt_confidence == pytest.approx(max(0.0, 1.0 - p.cost / len(u.tokens)), abs=1e-12)


def test_mismatched_decoder_is_strictly_worse_and_assign_recovers():
    pair_ids = tuple(p.id for p in DEFAULT_PAIRS)
    sim = sim_for((0.1, 0.05, 0.05), n_utts=300, pair_ids=pair_ids, truth_pairs=pair_ids)
    st = sim.params.initial_state()
    for u in sim.truth:
        results = [sim.decode_one(u.id, p, st) for p in pair_ids]
        true = sim.truth_pairs[u.id]
        best = max(r.utt_confidence for r in results if r.pair != true)
        assert next(r for r in results if r.pair == true).utt_confidence > best
        assert assign_pair(results)[0] == true


def test_determinism_and_order_independence():
    pair_ids = ("EZ", "EX")
    a = sim_for((0.1, 0.05, 0.05), 60, 4, 0.05, pair_ids=pair_ids, truth_pairs=pair_ids)
    b = sim_for((0.1, 0.05, 0.05), 60, 4, 0.05, pair_ids=pair_ids, truth_pairs=pair_ids)
    st = a.params.initial_state()
    reqs = [(u.id, p) for u in a.truth for p in pair_ids]
    fwd = SimDecoder(a).decode(reqs, st)
    rev = SimDecoder(b, threads=8).decode(list(reversed(reqs)), st)
    assert [r.to_line() for r in fwd] == [r.to_line() for r in reversed(rev)]
    c = sim_for((0.1, 0.05, 0.05), 60, 5, 0.05, pair_ids=pair_ids, truth_pairs=pair_ids)
    assert [r.to_line() for r in SimDecoder(c).decode(reqs, st)] != [r.to_line() for r in fwd]


def test_lower_multiplier_means_fewer_errors():
    sim = sim_for((0.1, 0.05, 0.05), n_utts=400)
    hi = TrainState({"EZ": 1.0})
    lo = TrainState({"EZ": 0.4})
    t_hi = sum((sim.hypothesis(u.id, "EZ", hi)[1] for u in sim.truth), Tally())
    t_lo = sum((sim.hypothesis(u.id, "EZ", lo)[1] for u in sim.truth), Tally())
    assert t_lo.events < t_hi.events


def test_parameter_validation():
    with pytest.raises(ValueError):
        PairRates(0.6, 0.3, 0.2)
    with pytest.raises(ValueError):
        PairRates(-0.1, 0, 0)
    with pytest.raises(DataError):
        ChannelParams.from_dict({"rates": {"EZ": [0.1, 0.1, 0.1]}, "gain": 1.5})
    with pytest.raises(DataError):
        ChannelParams.from_dict({"rates": {}, "colour": 1})
    p = ChannelParams({"EZ": (0.1, 0.05, 0.05)}, seed=3)
    assert ChannelParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    with pytest.raises(DataError):
        Simulator(Corpus(LANGS, []), {}, p, get_pairs(["EZ", "EX"]))


# --- training rule ---------------------------------------------------------------


def _train_setup():
    truth, tp = truth_corpus(20)
    visible = Corpus(LANGS, [Utterance(u.id, u.speaker, 360.0, u.tokens) for u in truth])
    params = ChannelParams({"EZ": (0.1, 0.05, 0.05)}, gain=0.5, h0=1.0, ood_weight=0.5)
    return truth, visible, params


def test_zero_hours_leave_state_unchanged():
    truth, visible, params = _train_setup()
    prev = TrainState({"EZ": 0.8})
    new = simulate_train(Manifest("e", ()), {}, visible, truth, params, prev)
    assert new.multipliers == prev.multipliers


def test_clean_hours_strictly_decrease_multiplier():
    truth, visible, params = _train_setup()
    prev = params.initial_state()
    ids = visible.ids
    ms = []
    for k in (1, 5, 10, 20):
        man = Manifest("m", [(u, "ManT") for u in ids[:k]])
        ms.append(simulate_train(man, {}, visible, truth, params, prev).multipliers["EZ"])
    assert all(b < a for a, b in zip([1.0] + ms, ms))
    # m = 1 - g h / (h + h0) with h = 20 * 0.1 h
    assert ms[-1] == pytest.approx(1 - 0.5 * 2.0 / 3.0)


def test_automatic_labels_weighted_by_quality():
    truth, visible, params = _train_setup()
    ids = visible.ids[:10]
    auto = Manifest("a", [(u, "AutoT@1") for u in ids])
    perfect = {u: truth[u].tokens for u in ids}
    noisy = {u: truth[u].tokens[: len(truth[u].tokens) // 2] for u in ids}
    h_perfect, e_perfect = effective_hours(auto, perfect, visible, truth, params.ood_weight)
    h_noisy, e_noisy = effective_hours(auto, noisy, visible, truth, params.ood_weight)
    assert h_perfect == pytest.approx(1.0) and e_perfect == 0.0
    assert h_noisy < h_perfect and e_noisy > 0
    ood = Manifest("o", [(u, "OOD") for u in ids])
    assert effective_hours(ood, {}, visible, truth, 0.5)[0] == pytest.approx(0.5)
    with pytest.raises(DataError):
        effective_hours(auto, {}, visible, truth, 0.5)


def test_trainer_describe_and_state_json():
    sim = sim_for((0.1, 0.05, 0.05), n_utts=5)
    st = TrainState({"EZ": 0.5}, 1.25, 0.1, "x")
    d = SimTrainer(sim).describe(st)
    assert d["expected_wer"]["EZ"] == pytest.approx(0.1)
    assert TrainState.from_dict(json.loads(str(st))) == st


# --- serve and fixture --------------------------------------------------------------


def test_serve_answers_requests(tmp_path):
    make_fixture(tmp_path, seed=1, n_untranscribed=10, n_mant=5, n_ood=5)
    sim = load_simulator("truth.jsonl", "truth_pairs.tsv", "params.json", base_dir=tmp_path)
    st = sim.params.initial_state()
    ids = sorted(sim.truth_pairs)[:3]
    out = io.StringIO()
    n = serve(sim, st, io.StringIO("".join(f"{u}\tEX\n" for u in ids)), out)
    assert n == 3
    assert out.getvalue().splitlines() == [sim.decode_one(u, "EX", st).to_line() for u in ids]


def test_external_serve_matches_in_process(tmp_path):
    make_fixture(tmp_path, seed=2, n_untranscribed=15, n_mant=5, n_ood=5)
    sim = load_simulator("truth.jsonl", "truth_pairs.tsv", "params.json", base_dir=tmp_path)
    st = TrainState({p: 0.7 for p in sim.params.rates}, 1.0, 0.0)
    cmd = [
        sys.executable, "-m", "cswitch.cli", "simulate", "serve",
        "--truth", str(tmp_path / "truth.jsonl"), "--truth-pairs", str(tmp_path / "truth_pairs.tsv"),
        "--params", str(tmp_path / "params.json"), "--state", "{state}",
    ]
    reqs = [(u, p.id) for u in sorted(sim.truth_pairs) for p in DEFAULT_PAIRS]
    ext = ExternalDecoder(cmd, timeout_s=60).decode(reqs, str(st))
    assert [r.to_line() for r in ext] == [r.to_line() for r in SimDecoder(sim).decode(reqs, st)]


def test_fixture_is_seed_deterministic(tmp_path):
    make_fixture(tmp_path / "a", seed=9, n_untranscribed=20, n_mant=10, n_ood=5)
    make_fixture(tmp_path / "b", seed=9, n_untranscribed=20, n_mant=10, n_ood=5)
    make_fixture(tmp_path / "c", seed=10, n_untranscribed=20, n_mant=10, n_ood=5)
    for name in ("corpus.jsonl", "truth.jsonl", "mant.manifest", "params.json", "pipeline.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "truth.jsonl").read_bytes() != (tmp_path / "c" / "truth.jsonl").read_bytes()


def test_compare_policies_reports_all(tmp_path):
    cfg = make_fixture(tmp_path, seed=3, n_untranscribed=40, n_mant=30, n_ood=10)
    outcomes = compare_policies(cfg)
    assert [o.policy for o in outcomes] == ["NT", "T_P1", "T_P1P2"]
    assert outcomes[0].retained == [40, 40]
    for o in outcomes:
        assert 0 < o.asr_multiplier < 1
    text = format_comparison(outcomes)
    assert "no winner" in text and "T_P1P2" in text
