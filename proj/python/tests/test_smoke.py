import math
import os
from pathlib import Path

import pytest

import odd

ROOT = Path(__file__).resolve().parents[2]


def plan_trie():
    vocab = odd.Vocab()
    trie = odd.PrefixTrie(n_max=5)
    trie.insert(vocab.encode("activate your plan 4G"), 1758658460)
    trie.insert(vocab.encode("please activate your plan 5G"), 1759263260)
    return vocab, trie


def test_trie_counts_and_next_tokens():
    vocab, trie = plan_trie()
    assert trie.node_count == 19
    nxt = {vocab.token(t): f for t, f, _, _ in trie.next_tokens(vocab.encode("your plan", grow=False))}
    assert nxt == {"4G": 1, "5G": 1}


def test_snapshot_round_trip():
    vocab, trie = plan_trie()
    back = odd.PrefixTrie.restore(trie.snapshot())
    assert back.dump(vocab) == trie.dump(vocab)
    with pytest.raises(odd.OddError, match="CorruptSnapshot"):
        odd.PrefixTrie.restore(b"garbage")


def test_prior_keeps_top_score():
    vocab, trie = plan_trie()
    dist, cands = odd.trie_prior(trie, vocab.encode("activate your plan", grow=False), 1759263260)
    assert math.isclose(sum(p for _, p in dist), 1.0, abs_tol=1e-12)
    top = max(cands, key=lambda c: c["score"])
    assert vocab.token(top["token"]) == "5G"
    assert dict(dist)[top["token"]] == top["score"] == 1.0


def test_calibration_and_fusion():
    t, status, _ = odd.calibrate([2.0, 0.0], 0.6)
    assert status == "solved"
    assert math.isclose(t, 2 / math.log(1.5), abs_tol=1e-6)
    token, run, fused, diag = odd.FusionEngine().step([0.0, 1.0, 0.5], [(0, 0.9), (2, 0.1)])
    assert math.isclose(sum(fused), 1.0, abs_tol=1e-12)
    assert 0.0 <= diag["gamma"] <= 1.0 and 0.0 <= diag["omega"] <= 1.0
    assert token == max(range(3), key=fused.__getitem__)
    token, run, _, diag = odd.FusionEngine("greedy").step([0.0, 1.0, 0.5], [(0, 0.9)])
    assert (token, run, diag["bypass"]) == (1, 0, True)


def test_metrics():
    m = odd.evaluate_pair("the cat sat", "the cat")
    assert math.isclose(m["rouge_l"], 0.8)
    assert odd.evaluate_pair("a b", "a b")["exact_match"] == 1.0


def test_cli_compare(tmp_path):
    code, _, err = odd.run_cli(
        ["compare", "--scenario", str(ROOT / "scenarios" / "abrupt.json"), "--out", str(tmp_path / "t.tsv")]
    )
    assert code == 0, err
    rows = [l.split("\t") for l in (tmp_path / "t.tsv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0][0] == "strategy"
    assert {r[0] for r in rows[1:]} == {"greedy", "temp-scaled", "odd"}


def test_cli_usage_error():
    code, _, _ = odd.run_cli(["run", "--strategy", "nope"])
    assert code != 0


@pytest.mark.skipif(not os.environ.get("ODD_BIN"), reason="odd executable not provided")
def test_executable_present():
    assert Path(os.environ["ODD_BIN"]).exists()
