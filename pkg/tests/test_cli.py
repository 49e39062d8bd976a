import json

import jsonschema
import numpy as np
import pytest

from cswitch import cli
from cswitch.corpus import Corpus, Utterance, save_corpus
from cswitch.decoder_sim import make_fixture

from helpers import SWITCH_HYPS, SWITCH_REFS, random_tagged_corpus, toks


def run(capsys, *argv):
    """(exit code, stdout, stderr) of one in-process invocation."""
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as e:
        code = e.code
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, schema, *argv):
    code, out, err = run(capsys, *argv, "--json")
    assert code == 0, err
    obj = json.loads(out)
    jsonschema.validate(obj, cli.load_schema(schema))
    return obj


def save(tmp_path, name, texts, langs=("en", "zu")):
    c = Corpus(langs, [Utterance(f"u{k}", "spk", 2.0, toks(t)) for k, t in enumerate(texts)])
    path = tmp_path / name
    save_corpus(c, path)
    return path


@pytest.fixture
def switch_files(tmp_path):
    return save(tmp_path, "ref.jsonl", SWITCH_REFS), save(tmp_path, "hyp.jsonl", SWITCH_HYPS)


@pytest.fixture
def lm_files(tmp_path):
    r = np.random.default_rng(0)
    train = random_tagged_corpus(r, 60, 20)
    dev = random_tagged_corpus(r, 15, 20)
    paths = {}
    for name, c in (("train", train), ("dev", dev)):
        paths[name] = tmp_path / f"{name}.jsonl"
        save_corpus(c, paths[name])
    return paths


# --- exit codes -------------------------------------------------------------------


def test_usage_errors_exit_1(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1 and "usage" in err
    assert run(capsys)[0] == 1
    assert run(capsys, "stats")[0] == 1
    assert run(capsys, "train-lm", "--text", "x", "--out", "y", "--order", "7")[0] == 1


def test_data_errors_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "stats", "--corpus", tmp_path / "missing.jsonl")
    assert code == 2 and err
    bad = tmp_path / "bad.txt"
    bad.write_text("u1 s 1 word/qq\n")
    assert run(capsys, "stats", "--corpus", bad)[0] == 2


def test_internal_errors_exit_3(capsys, monkeypatch, tmp_path):
    def boom(args):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli, "cmd_stats", boom)
    bad = tmp_path / "c.txt"
    bad.write_text("u1 s 1 a/en\n")
    assert run(capsys, "stats", "--corpus", bad)[0] == 3


# --- commands ---------------------------------------------------------------------


def test_stats(capsys, switch_files):
    ref, _ = switch_files
    code, out, _ = run(capsys, "stats", "--corpus", ref)
    assert code == 0 and "Mono (m)" in out and "isiZulu" in out
    obj = run_json(capsys, "stats", "stats", "--corpus", ref)
    assert obj["total"]["tokens"] == 15


def test_train_perplexity_interpolate(capsys, tmp_path, lm_files):
    a, b = tmp_path / "a.arpa", tmp_path / "b.arpa"
    vocab = tmp_path / "vocab.tsv"
    info = run_json(capsys, "train-lm", "train-lm", "--text", lm_files["train"], "--out", a, "--order", 2,
                    "--smoothing", "witten-bell", "--vocab-from", lm_files["dev"], "--vocab-out", vocab)
    assert info["order"] == 2 and a.exists()
    run_json(capsys, "train-lm", "train-lm", "--text", lm_files["dev"], "--out", b, "--order", 1,
             "--smoothing", "witten-bell", "--vocab", vocab)

    code, out, _ = run(capsys, "perplexity", "--model", f"big={a}", "--model", f"small={b}",
                       "--text", lm_files["dev"], "--vocab", vocab, "--cs")
    assert code == 0
    header = [l for l in out.splitlines() if not l.startswith("#")][0].split()
    assert header == ["LM", "PP", "(dev)", "PP", "MPP_E", "MPP_Z", "MPP", "CPP"]
    obj = run_json(capsys, "perplexity", "perplexity", "--model", a, "--text", lm_files["dev"],
                   "--vocab", vocab, "--cs")
    assert obj["models"][0]["cpp"] > 0

    mix = tmp_path / "mix.json"
    obj = run_json(capsys, "interpolate", "interpolate", "--model", a, "--model", b,
                   "--dev", lm_files["dev"], "--vocab", vocab, "--out", mix)
    assert abs(sum(obj["weights"]) - 1) < 1e-12
    assert all(y >= x for x, y in zip(obj["history"], obj["history"][1:]))
    obj = run_json(capsys, "perplexity", "perplexity", "--model", mix, "--text", lm_files["dev"], "--vocab", vocab)
    assert obj["models"][0]["pp"] == pytest.approx(
        json.loads(mix.read_text())["dev_perplexity"], rel=1e-9
    )


def test_train_lm_no_fallback_is_data_error(capsys, tmp_path):
    text = save(tmp_path, "t.jsonl", ["a/en b/en"])
    code, _, err = run(capsys, "train-lm", "--text", text, "--out", tmp_path / "m.arpa", "--order", 2,
                       "--no-fallback")
    assert code == 2 and "InsufficientData" in err


def test_score_switch_metrics(capsys, switch_files):
    ref, hyp = switch_files
    code, out, _ = run(capsys, "score", "--ref", ref, "--hyp", f"A={hyp}", "--switch-metrics")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["#", "System", "Dev", "Test", "WER_E", "WER_Z"]
    acc = lines[lines.index(next(l for l in lines if l.startswith("Accuracy"))) + 1:][:7]
    assert [l.rsplit(None, 1)[0].strip() for l in acc] == [
        "Eng token correct", "Zul token correct", "Word correct after switch",
        "Zul word correct after switch", "English word correct after switch",
        "Language correct after switch", "Code-switch bigram correct",
    ]
    obj = run_json(capsys, "score", "score", "--ref", ref, "--hyp", hyp, "--switch-metrics")
    rows = obj["systems"][0]["switch"]["rows"]
    assert [(r["num"], r["den"]) for r in rows] == [(4, 8), (7, 7), (3, 6), (3, 3), (0, 3), (4, 6), (2, 6)]


def test_bootstrap_seed_rules_and_reproducibility(capsys, tmp_path, switch_files):
    ref, hyp = switch_files
    assert run(capsys, "bootstrap", "--ref", ref, "--hyp-a", ref, "--hyp-b", hyp)[0] == 1
    assert run(capsys, "bootstrap", "--ref", ref, "--hyp-a", ref, "--hyp-b", hyp, "--seed", 1,
               "--resamples", 500)[0] == 1
    args = ("bootstrap", "--ref", ref, "--hyp-a", ref, "--hyp-b", hyp, "--seed", 7, "--resamples", 3000)
    one = run(capsys, *args, "--threads", 1, "--json")
    again = run(capsys, *args, "--threads", 1, "--json")
    eight = run(capsys, *args, "--threads", 8, "--json")
    assert one[0] == 0 and one[1] == again[1] == eight[1]
    obj = json.loads(one[1])
    jsonschema.validate(obj, cli.load_schema("bootstrap"))
    # U1 is a tie, so an all-U1 resample (probability 5**-5) is no strict improvement
    assert 0.99 < obj["p_improvement"] <= 1.0


def test_select(capsys, tmp_path):
    c = Corpus(("en",), [Utterance(f"u{k}", "s", 1.0) for k in range(4)])
    save_corpus(c, tmp_path / "c.jsonl")
    lines = [f"u{k}\tEZ\t{conf!r}\tw/en" for k, conf in enumerate([0.2, 0.4, 0.6, 0.8])]
    (tmp_path / "d.tsv").write_text("\n".join(lines) + "\n")
    obj = run_json(capsys, "select", "select", "--decodes", tmp_path / "d.tsv", "--corpus", tmp_path / "c.jsonl",
                   "--threshold-mode", "tp1", "--pass", 1, "--out-dir", tmp_path / "out")
    assert obj["pairs"]["EZ"]["retained"] == 2
    assert (tmp_path / "out" / "autot.pass1.manifest").read_text().splitlines()[1:] == ["u2\tAutoT@1", "u3\tAutoT@1"]
    obj = run_json(capsys, "select", "select", "--decodes", tmp_path / "d.tsv", "--corpus", tmp_path / "c.jsonl",
                   "--threshold-mode", "nt", "--pass", 1)
    assert obj["retained"] == 4


def test_simulate_and_pipeline(capsys, tmp_path):
    assert run(capsys, "simulate", "fixture", "--out", tmp_path / "f")[0] == 1
    run_json(capsys, "fixture", "simulate", "fixture", "--out", tmp_path / "f", "--seed", 4,
             "--n-untranscribed", 30, "--n-mant", 20, "--n-ood", 5, "--policy", "T_P1P2")
    cfg = tmp_path / "f" / "pipeline.json"
    obj = run_json(capsys, "pipeline", "pipeline", "run", "--config", cfg, "--threads", 2)
    assert [p["pass"] for p in obj["passes"]] == [1, 2]
    record = json.loads((tmp_path / "f" / "run" / "run.json").read_text())
    jsonschema.validate(record, cli.load_schema("run-record"))
    obj = run_json(capsys, "compare", "simulate", "compare", "--config", cfg)
    assert [p["policy"] for p in obj["policies"]] == ["NT", "T_P1", "T_P1P2"]


def test_fixture_seed_reproducible(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "simulate", "fixture", "--out", tmp_path / d, "--seed", 11)[0] == 0
    for name in ("corpus.jsonl", "truth.jsonl", "params.json", "untranscribed.ids"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline_threads_do_not_change_output(capsys, tmp_path):
    make_fixture(tmp_path, seed=8, n_untranscribed=40, n_mant=20, n_ood=5, policy="T_P1")
    cfg = tmp_path / "pipeline.json"
    assert run(capsys, "pipeline", "run", "--config", cfg, "--threads", 1)[0] == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "run").iterdir() if p.name != "run.json"}
    assert run(capsys, "pipeline", "run", "--config", cfg, "--threads", 8, "--no-resume")[0] == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "run").iterdir() if p.name != "run.json"}
    assert first == second


def test_all_schemas_are_valid():
    for name in ("stats", "train-lm", "interpolate", "perplexity", "score", "bootstrap", "select",
                 "pipeline", "fixture", "compare", "run-record"):
        jsonschema.Draft202012Validator.check_schema(cli.load_schema(name))
