import json

import pytest

from qtgen.cli import main
from qtgen.config import FIRST_TOKEN_MODES

OVERFIT = ["epochs=150", "lr=0.01", "batch_size=4", "eval_interval=8", "average_k=1",
           "oracle_first_word=true"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def overfit(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--n", 32, "--seed", 0, "--stratified", "--output", root / "raw.jsonl") == 0
    assert run("preprocess", "--train", root / "raw.jsonl", "--out", root / "data") == 0
    sets = [x for kv in OVERFIT for x in ("--set", kv)]
    assert run("train", "--data", root / "data", *sets, "--run-dir", root / "run", "--quiet") == 0
    return root


class TestPipeline:
    def test_run_directory_layout(self, overfit):
        run_dir = overfit / "run"
        assert (run_dir / "config.txt").read_text().count("epochs = 150") == 1
        assert (run_dir / "model.ckpt").exists()
        assert len(list((run_dir / "checkpoints").glob("step_*.ckpt"))) == 150
        assert "averaged steps [1200]" in (run_dir / "train.log").read_text()

    def test_gold_first_word_memorised_set_scores_100(self, overfit, capsys):
        hyp = overfit / "gold.hyp"
        assert run("generate", "--model", overfit / "run" / "model.ckpt", "--data", overfit / "data",
                   "--input", overfit / "data" / "train.jsonl", "--output", hyp,
                   "--mode", "gold_first_word") == 0
        assert run("evaluate", "--hyps", hyp, "--refs", overfit / "data" / "train.jsonl",
                   "--output", overfit / "gold.json") == 0
        report = json.loads((overfit / "gold.json").read_text())
        assert report["bleu"][3] == 100.0
        assert report["mode"] == "gold_first_word"
        assert "BLEU-4" in capsys.readouterr().out

    def test_four_modes_give_four_reports(self, overfit):
        for mode in FIRST_TOKEN_MODES:
            hyp = overfit / f"test.{mode}.txt"
            assert run("generate", "--model", overfit / "run" / "model.ckpt", "--data", overfit / "data",
                       "--input", overfit / "data" / "train.jsonl", "--output", hyp, "--mode", mode,
                       "--beam-size", 3) == 0
            assert run("evaluate", "--hyps", hyp, "--refs", overfit / "data" / "train.jsonl",
                       "--output", overfit / f"report.{mode}.json") == 0
        reports = sorted(overfit.glob("report.*.json"))
        assert len(reports) == 4
        for path in reports:
            assert json.loads(path.read_text())["mode"] == path.name.split(".")[1]
            assert path.with_suffix(".txt").exists()

    def test_generation_is_deterministic(self, overfit):
        outs = []
        for tag in "ab":
            out = overfit / f"det.{tag}.txt"
            run("generate", "--model", overfit / "run" / "model.ckpt", "--data", overfit / "data",
                "--input", overfit / "data" / "train.jsonl", "--output", out, "--beam-size", 4)
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_average_of_repeated_path_equals_input(self, overfit):
        src = sorted((overfit / "run" / "checkpoints").glob("*.ckpt"))[3]
        out = overfit / "avg.ckpt"
        assert run("average-checkpoints", "--inputs", src, src, src, "--output", out) == 0
        from qtgen.checkpoint import load_checkpoint
        a, b = load_checkpoint(src), load_checkpoint(out)
        for name, arr in a.params.items():
            assert b.params[name].tobytes() == arr.tobytes()


class TestExitCodes:
    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_file(self, tmp_path, capsys):
        assert run("evaluate", "--hyps", tmp_path / "nope.txt", "--refs", tmp_path / "r.jsonl") == 4
        err = capsys.readouterr().err
        assert err.startswith("qtgen: error: file not found") and err.count("\n") == 1

    def test_bad_config(self, tmp_path, capsys):
        run("synth", "--n", 4, "--output", tmp_path / "r.jsonl")
        run("preprocess", "--train", tmp_path / "r.jsonl", "--out", tmp_path / "d")
        assert run("train", "--data", tmp_path / "d", "--set", "bogus=1", "--run-dir", tmp_path / "x") == 3
        assert "unknown config key" in capsys.readouterr().err

    def test_bad_data(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text("{not json\n")
        assert run("preprocess", "--train", tmp_path / "bad.jsonl", "--out", tmp_path / "d") == 5

    def test_length_mismatch_is_bad_data(self, tmp_path):
        run("synth", "--n", 3, "--output", tmp_path / "r.jsonl")
        (tmp_path / "h.txt").write_text("what ?\n")
        assert run("evaluate", "--hyps", tmp_path / "h.txt", "--refs", tmp_path / "r.jsonl") == 5

    def test_nan_loss(self, tmp_path):
        run("synth", "--n", 4, "--output", tmp_path / "r.jsonl")
        run("preprocess", "--train", tmp_path / "r.jsonl", "--out", tmp_path / "d")
        status = run("train", "--data", tmp_path / "d", "--set", "lr=1e300", "--set", "hidden_dim=4",
                     "--set", "word_dim=4", "--run-dir", tmp_path / "x", "--quiet")
        assert status == 6

    def test_shape_mismatch(self, tmp_path):
        (tmp_path / "junk.ckpt").write_bytes(b"garbage")
        assert run("average-checkpoints", "--inputs", tmp_path / "junk.ckpt", "--output", tmp_path / "o") == 7

    def test_gradcheck(self, capsys):
        assert run("gradcheck") == 0
        out = capsys.readouterr().out
        assert out.startswith("max relative error") and out.rstrip().endswith("ok")
