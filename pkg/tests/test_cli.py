"""Command-line interface: exit codes, determinism, config precedence."""

import csv
import json
import os

import numpy as np
import pytest

from spiketopics.cli import main
from spiketopics.corpus import load_toy_corpus
from spiketopics.network import load_checkpoint


def run(argv):
    return main(argv)


class TestTrain:
    def test_deterministic_checkpoint_bytes(self, tmp_path):
        args = ["train", "--toy", "--algo", "cgs", "--k", "3",
                "--lambda", "0.1", "--phi", "0.05", "--iters", "8",
                "--seed", "7"]
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        assert run(args + ["--out-checkpoint", str(p1)]) == 0
        assert run(args + ["--out-checkpoint", str(p2)]) == 0
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_T_for_semi_exits_2(self, capsys):
        code = run(["train", "--toy", "--algo", "semi-spikelda", "--k", "3",
                    "--seed", "1", "--iters", "3", "--batch", "4"])
        assert code == 2
        assert "--T" in capsys.readouterr().err

    def test_missing_seed_exits_2(self, capsys):
        code = run(["train", "--toy", "--algo", "cgs", "--k", "2",
                    "--iters", "2"])
        assert code == 2
        assert "--seed" in capsys.readouterr().err

    def test_bad_data_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "docword.txt"
        bad.write_text("not\na\nheader\n")
        code = run(["train", "--docword", str(bad), "--algo", "cgs",
                    "--k", "2", "--iters", "1", "--seed", "0"])
        assert code == 3

    def test_each_algorithm_trains_on_toy(self, tmp_path):
        common = ["--toy", "--k", "3", "--seed", "3",
                  "--out-checkpoint", str(tmp_path / "ck.bin")]
        assert run(["train", "--algo", "spikecgs", "--lambda", "0.2",
                    "--phi", "0.1", "--iters", "3"] + common) == 0
        assert run(["train", "--algo", "ed-spikelda", "--lambda", "1.5",
                    "--iters", "3", "--schedule", "const:eta0=0.01,max_step=1"]
                   + common) == 0
        assert run(["train", "--algo", "ed-spikeplsi", "--iters", "2",
                    "--schedule", "const:eta0=0.01,max_step=1"] + common) == 0
        assert run(["train", "--algo", "du-spikelda", "--lambda", "1.5",
                    "--iters", "5", "--batch", "32",
                    "--schedule", "rmsprop:eta=0.5"] + common) == 0
        assert run(["train", "--algo", "semi-spikelda", "--lambda", "0.5",
                    "--iters", "4", "--batch", "5", "--T", "2",
                    "--schedule", "rmsprop:eta=0.5"] + common) == 0

    def test_metrics_csv_and_json_match(self, tmp_path):
        base = ["train", "--toy", "--algo", "ed-spikelda", "--lambda", "1.5",
                "--iters", "4", "--seed", "5", "--report-every", "2",
                "--schedule", "const:eta0=0.01,max_step=1"]
        csv_path = tmp_path / "m.csv"
        json_path = tmp_path / "m.jsonl"
        assert run(base + ["--metrics", str(csv_path), "--format", "csv"]) == 0
        assert run(base + ["--metrics", str(json_path), "--format", "json"]) == 0
        with open(csv_path) as fh:
            rows = list(csv.DictReader(fh))
        with open(json_path) as fh:
            jrows = [json.loads(line) for line in fh]
        assert len(rows) == len(jrows) > 0
        for r, j in zip(rows, jrows):
            assert j["schema"] == 1
            for key in ("iteration", "eta", "max_zeta_alpha"):
                assert r[key] == str(j[key])

    def test_metrics_append_safe(self, tmp_path):
        path = tmp_path / "m.csv"
        base = ["train", "--toy", "--algo", "ed-spikelda", "--lambda", "1.5",
                "--iters", "2", "--report-every", "1",
                "--schedule", "const:eta0=0.01,max_step=1",
                "--metrics", str(path)]
        assert run(base + ["--seed", "1"]) == 0
        assert run(base + ["--seed", "2"]) == 0
        with open(path) as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0].startswith("algo,")      # single header
        assert sum(l.startswith("algo,") for l in lines) == 1
        assert len(lines) == 1 + 2 * 2


class TestEval:
    def make_checkpoint(self, tmp_path, uniform=False):
        path = tmp_path / "ck.bin"
        if uniform:
            from spiketopics.network import (Hyperparams, NetworkWeights,
                                             save_checkpoint)
            corpus = load_toy_corpus()
            w = NetworkWeights(np.zeros((3, corpus.vocab_size)),
                               np.zeros((3, corpus.num_docs)))
            hp = Hyperparams.symmetric(3, corpus.vocab_size, 1.0, 0.0)
            save_checkpoint(path, w, hp, "ed-spikelda",
                            extra={"algorithm": "ed-spikelda"})
        else:
            assert run(["train", "--toy", "--algo", "cgs", "--k", "3",
                        "--lambda", "0.1", "--phi", "0.05", "--iters", "10",
                        "--seed", "7", "--out-checkpoint", str(path)]) == 0
        return path

    def test_uniform_checkpoint_scores_vocab_size(self, tmp_path, capsys):
        path = self.make_checkpoint(tmp_path, uniform=True)
        code = run(["eval", str(path), "--toy", "--test-fraction", "0.2",
                    "--split-seed", "3", "--seed", "0"])
        assert code == 0
        out = capsys.readouterr().out
        v = load_toy_corpus().vocab_size
        assert f"perplexity: {float(v):.4f}" in out

    def test_same_seed_same_report(self, tmp_path, capsys):
        path = self.make_checkpoint(tmp_path)
        capsys.readouterr()  # drain the training output
        args = ["eval", str(path), "--toy", "--test-fraction", "0.2",
                "--split-seed", "3", "--seed", "11"]
        assert run(args) == 0
        first = capsys.readouterr().out
        assert run(args) == 0
        assert capsys.readouterr().out == first

    def test_vocab_mismatch_rejected(self, tmp_path, capsys):
        path = self.make_checkpoint(tmp_path)
        dw = tmp_path / "docword.txt"
        dw.write_text("2\n3\n2\n1 1 4\n2 3 3\n")
        code = run(["eval", str(path), "--docword", str(dw),
                    "--test-fraction", "0.5", "--seed", "0"])
        assert code == 3
        assert "vocabulary" in capsys.readouterr().err

    def test_fold_in_sweeps_default(self, capsys):
        code = run(["train", "--toy", "--algo", "cgs", "--k", "2",
                    "--iters", "1", "--seed", "1", "--dump-config"])
        assert code == 0
        cfg = json.loads(capsys.readouterr().out)
        assert cfg["fold_in_sweeps"] == 200


class TestConfigFile:
    def test_flags_beat_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("algorithm=cgs\nk=5\nlam=0.3  # comment\niters=2\n")
        code = run(["train", "--toy", "--config", str(cfg), "--k", "7",
                    "--seed", "1", "--dump-config"])
        assert code == 0
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["k"] == 7          # flag wins
        assert resolved["lam"] == 0.3      # file value
        assert resolved["algorithm"] == "cgs"

    def test_malformed_config_line(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just some words\n")
        code = run(["train", "--toy", "--config", str(cfg), "--seed", "1"])
        assert code == 2


class TestPruneCommand:
    def test_prune_and_fan_in(self, tmp_path, capsys):
        dw, vb = tmp_path / "dw.txt", tmp_path / "vb.txt"
        assert run(["synth", "--docs", "30", "--vocab-size", "240",
                    "--k", "2", "--doc-len", "40", "--seed", "3",
                    "--out-docword", str(dw), "--out-vocab", str(vb)]) == 0
        ck = tmp_path / "ck.bin"
        assert run(["train", "--docword", str(dw), "--vocab", str(vb),
                    "--algo", "ed-spikelda", "--k", "2", "--lambda", "1.5",
                    "--iters", "2", "--seed", "5",
                    "--schedule", "const:eta0=0.01,max_step=1",
                    "--out-checkpoint", str(ck)]) == 0
        out = tmp_path / "pruned.npz"
        code = run(["prune", str(ck), "--docword", str(dw), "--vocab", str(vb),
                    "--out", str(out), "--top-words", "200",
                    "--resident-docs", "30", "--seed", "0",
                    "--store", str(tmp_path / "beta.store")])
        assert code == 0
        assert "fan-in per topic neuron: 231" in capsys.readouterr().out
        data = np.load(out)
        assert data["top_ids"].shape == (2, 200)

    def test_custom_budget_arithmetic(self, tmp_path, capsys):
        dw = tmp_path / "dw.txt"
        assert run(["synth", "--docs", "25", "--vocab-size", "150", "--k", "2",
                    "--doc-len", "30", "--seed", "4",
                    "--out-docword", str(dw)]) == 0
        ck = tmp_path / "ck.bin"
        assert run(["train", "--docword", str(dw), "--algo", "ed-spikelda",
                    "--k", "2", "--lambda", "1.5", "--iters", "1",
                    "--seed", "5", "--schedule", "const:eta0=0.01,max_step=1",
                    "--out-checkpoint", str(ck)]) == 0
        code = run(["prune", str(ck), "--docword", str(dw),
                    "--out", str(tmp_path / "p.npz"), "--top-words", "100",
                    "--resident-docs", "20", "--seed", "0",
                    "--store", str(tmp_path / "b.store")])
        assert code == 0
        assert "fan-in per topic neuron: 121" in capsys.readouterr().out


class TestVerifyCommand:
    def test_single_check_passes(self, tmp_path):
        out = tmp_path / "report.json"
        code = run(["verify", "--mode", "map", "--check", "stationary",
                    "--seed", "0", "--json-out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report[0]["name"] == "stationary"
        assert report[0]["passed"] is True

    def test_check_filter_limits_output(self, capsys):
        code = run(["verify", "--mode", "plsi", "--check", "gamma-dirichlet",
                    "--seed", "0"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert len(report) == 1


class TestSynth:
    def test_round_trip_parseable(self, tmp_path):
        dw, vb = tmp_path / "dw.txt", tmp_path / "vb.txt"
        assert run(["synth", "--docs", "12", "--vocab-size", "30", "--k", "3",
                    "--doc-len", "20", "--seed", "9",
                    "--out-docword", str(dw), "--out-vocab", str(vb)]) == 0
        from spiketopics.corpus import parse_uci
        corpus = parse_uci(str(dw), str(vb))
        assert corpus.num_docs == 12
        assert corpus.total_tokens == 240
