import math
import os
from pathlib import Path

import pytest

import storyplan as sp

DATA = Path(os.environ.get("STORYPLAN_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))


def test_tokenize_round_trip():
    tokens = sp.tokenize('He said, "Go!"')
    assert tokens == ["He", "said", ",", '"', "Go", "!", '"']
    assert sp.tokenize("ab c", "character") == ["a", "b", "▁", "c"]
    assert sp.detokenize(["a", "b", "▁", "c"], "character") == "ab c"


def test_anonymize_and_restore():
    text = "Bilbo Baggins walked home . He ate ."
    record = {
        "frames": [],
        "mentions": [{"span": [0, 2], "label": "PERSON"}],
        "clusters": [[[0, 2], [5, 6]]],
    }
    for scheme in ("ner", "coref"):
        tokens, table = sp.anonymize(text, record, scheme)
        assert tokens[0] == "ent0"
        assert sp.deanonymize(tokens, table, sp.gold_fills(tokens, table)) == text.split()
    tokens, table = sp.anonymize(text, record, "coref")
    assert tokens == ["ent0", "walked", "home", ".", "ent0", "ate", "."]
    assert sp.deanonymize(tokens, table, [["Ann", "she"]]) == ["Ann", "walked", "home", ".", "she", "ate", "."]


def test_bad_annotations_raise():
    with pytest.raises(sp.ValidationError):
        sp.import_annotations("a b", {"frames": [], "mentions": [{"span": [0, 5], "label": "PERSON"}], "clusters": []})


def test_srl_plan():
    record = {
        "frames": [{"predicate": [1, 2], "args": [{"role": "ARG1", "span": [2, 4]}, {"role": "ARG0", "span": [0, 1]}]}],
        "mentions": [],
        "clusters": [],
    }
    assert sp.srl_plan("Ada read the letter .", record) == ["<frame>", "read", "Ada", "the", "letter", "<sent>"]


def test_verb_mask_rows():
    mask = sp.build_verb_mask(5, [1, 3])
    assert len(mask) == 5 and all(len(row) == 6 for row in mask)
    assert [p for p in range(5) if mask[4][p]] == [1, 3]
    assert [p for p in range(5) if mask[2][p]] == [1]
    assert all(row[5] for row in mask)


def test_pointer_copy_prob():
    assert sp.pointer_copy_prob([1.0, 1.0], [1.0, 1.0]) == pytest.approx(1.0 / (1.0 + math.exp(-2.0)))


def test_sampler():
    logits = [0.0, 3.0, 1.0, 2.0]
    dist = sp.top_k_distribution(logits, 1.0, 2)
    z = math.exp(3.0) + math.exp(2.0)
    assert dist == pytest.approx([0.0, math.exp(3.0) / z, 0.0, math.exp(2.0) / z])
    assert sp.sample_top_k(logits, 1.0, 1) == 1
    assert sp.sample_top_k(logits, 1.0, 1, banned=[1]) == 3
    draws = [sp.sample_top_k(logits, 1.0, 2, seed=s) for s in range(50)]
    assert set(draws) <= {1, 3}


def test_metrics():
    assert sp.lcs_length(list("abcbdab"), list("bdcaba")) == 4
    assert sp.lemmatize_verb("walked") == "walk"
    v = sp.verb_diversity([["walk", "eat"], ["walk"]])
    assert v["mean_unique"] == pytest.approx(1.5)
    assert v["verb_tokens"] == 3


def test_cli_evaluate_golden(tmp_path):
    code, _, err = sp.run_cli([
        "--seed", "1", "--out", str(tmp_path), "evaluate", "--report", str(tmp_path / "report.txt"),
        "--stories", str(DATA / "golden/stories.txt"), "--annotations", str(DATA / "golden/annotations.jsonl"),
    ])
    assert code == 0, err
    assert (tmp_path / "report.txt").read_text() == (DATA / "golden/report.txt").read_text()


def test_cli_missing_seed(tmp_path):
    code, _, err = sp.run_cli(["--out", str(tmp_path), "preprocess"])
    assert code == 2
    assert "error" in err
