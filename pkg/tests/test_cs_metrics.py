import math

import numpy as np
import pytest

from cswitch.cs_metrics import (
    MONO,
    SWITCH,
    PositionClass,
    classify_langs,
    classify_positions,
    cs_perplexity,
    cs_perplexity_json,
    format_perplexity_table,
)
from cswitch.errors import EmptyEvalSet, OOVQuery
from cswitch.ngram import EOS, NGramModel, Vocabulary, train, uniform_model

from helpers import corpus, random_tagged_corpus


def kinds(langs):
    return [str(c) for c in classify_langs(langs)]


def test_classify_examples():
    assert kinds(["en", "en", "zu", "zu"]) == ["mono(en)", "mono(en)", "switch", "mono(zu)"]
    assert kinds(["en", "zu", "en"]) == ["mono(en)", "switch", "switch"]
    assert all(c.kind == MONO for c in classify_langs(["zu"] * 5))
    assert classify_langs([]) == []


def test_classify_accepts_utterances_and_tokens():
    c = corpus("a/en b/zu", "c/en")
    by_utt = classify_positions(c)
    by_tok = classify_positions([u.tokens for u in c])
    by_code = classify_positions([u.langs for u in c])
    assert by_utt == by_tok == by_code
    assert by_utt[0][1] == PositionClass(SWITCH, "zu")


def test_classify_reorder_invariant():
    c = random_tagged_corpus(np.random.default_rng(1), 30, 10)
    utts = list(c)
    perm = np.random.default_rng(2).permutation(len(utts))
    fwd = classify_positions(utts)
    rev = classify_positions([utts[k] for k in perm])
    assert [fwd[k] for k in perm] == rev


def _vocab():
    return Vocabulary(["a", "b"], {"a": "en", "b": "zu"})


def test_uniform_model_all_classes_equal_v():
    v = Vocabulary(["a", "b", "c"], {"a": "en", "b": "zu", "c": "zu"})
    rep = cs_perplexity(uniform_model(v), corpus("a/en b/zu"))
    assert rep.mpp_per_lang["en"] == pytest.approx(4.0, rel=1e-12)
    assert rep.cpp == pytest.approx(4.0, rel=1e-12)
    assert rep.mpp == pytest.approx(4.0, rel=1e-12)
    assert rep.pp == pytest.approx(4.0, rel=1e-12)


def test_monolingual_text_has_no_cpp():
    m = train(corpus("a/en a/en b/en"), 1, "witten-bell")
    rep = cs_perplexity(m, corpus("a/en b/en a/en"))
    assert rep.cpp is None and rep.n_switch == 0
    lps = [m.logprob([], w) for w in ("a", "b", "a")]
    assert rep.mpp_per_lang["en"] == pytest.approx(math.exp(-sum(lps) / 3), rel=1e-12)
    assert rep.to_dict()["cpp"] is None


def test_hand_unigram_switch_perplexity():
    probs = {("a",): math.log(0.5), ("b",): math.log(0.25), (EOS,): math.log(0.25)}
    m = NGramModel(1, _vocab(), [probs], [], "hand")
    rep = cs_perplexity(m, corpus("a/en b/zu"))
    assert rep.cpp == pytest.approx(4.0, abs=1e-12)
    assert rep.mpp_per_lang["en"] == pytest.approx(2.0, abs=1e-12)
    # a, b and </s> all count towards PP
    assert rep.n_scored == 3
    assert rep.pp == pytest.approx(32 ** (1 / 3), rel=1e-12)


def test_decomposition_identity_and_counts():
    r = np.random.default_rng(4)
    c = random_tagged_corpus(r, 40, 20)
    m = train(c, 2, "witten-bell")
    rep = cs_perplexity(m, c)
    lhs = rep.n_decomposed * math.log(rep.pp_decomposed)
    rhs = sum(rep.n_mono[l] * math.log(rep.mpp_per_lang[l]) for l in rep.n_mono if rep.n_mono[l])
    rhs += rep.n_switch * math.log(rep.cpp)
    assert lhs == pytest.approx(rhs, abs=1e-9)
    n_words = sum(len(u.tokens) for u in c)
    assert rep.n_decomposed == n_words and rep.n_scored == n_words + len(c)


def test_errors():
    m = uniform_model(_vocab())
    with pytest.raises(EmptyEvalSet):
        cs_perplexity(m, [])
    with pytest.raises(OOVQuery):
        cs_perplexity(m, corpus("zz/en"))


def test_table_layout():
    v = _vocab()
    rep = cs_perplexity(uniform_model(v), corpus("a/en b/zu b/zu", "a/en"))
    table = format_perplexity_table([("uniform", rep)], ["en", "zu"], {"uniform": 3.0})
    header = [l for l in table.splitlines() if not l.startswith("#")][0].split()
    assert header == ["LM", "PP", "(dev)", "PP", "MPP_E", "MPP_Z", "MPP", "CPP"]
    row = [l for l in table.splitlines() if l.startswith("uniform")][0].split()
    assert row == ["uniform", "3.0", "3.0", "3.0", "3.0", "3.0", "3.0"]
    mono = cs_perplexity(uniform_model(v), corpus("a/en"))
    assert "absent" in format_perplexity_table([("u", mono)], ["en", "zu"])
    d = cs_perplexity_json("u", mono, None)
    assert d["lm"] == "u" and d["cpp"] is None
