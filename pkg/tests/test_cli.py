"""CLI tests: exit codes, artifacts, config precedence, and byte determinism.

All invocations run main() in-process against temp directories.
"""

import json

import pytest

from sasoftmax.cli import main


def read(path):
    return path.read_bytes()


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    """A tiny trained checkpoint shared by the eval/dump tests."""
    out = tmp_path_factory.mktemp("trained")
    rc = main(["train", "--out", str(out), "--kind", "v4", "--layers", "1",
               "--d-model", "8", "--seq-len", "8", "--batch", "2",
               "--steps", "3", "--seed", "1"])
    assert rc == 0
    return out


class TestGradcheckCommand:
    def test_passes_and_writes_report(self, tmp_path, capsys):
        out = tmp_path / "gc"
        rc = main(["gradcheck", "--samples", "20", "--tmax", "4",
                   "--seed", "7", "--out", str(out)])
        assert rc == 0
        rows = json.loads((out / "gradcheck.json").read_text())
        assert len(rows) == 20 * 4 * 5
        assert (out / "config.json").is_file()
        assert "0 failed" in capsys.readouterr().out

    def test_zero_samples_is_config_error(self, tmp_path, capsys):
        rc = main(["gradcheck", "--samples", "0", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "--samples" in capsys.readouterr().err

    def test_rerun_byte_identical(self, tmp_path):
        args = ["gradcheck", "--samples", "10", "--tmax", "3", "--seed", "7"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert read(a / "gradcheck.json") == read(b / "gradcheck.json")


class TestSweepCommand:
    def test_default_row_count(self, tmp_path):
        out = tmp_path / "sw"
        assert main(["sweep", "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert len(lines) == 1 + 8 * 5  # header + |gaps| x |kinds|

    def test_peak_values_present(self, tmp_path):
        out = tmp_path / "sw"
        assert main(["sweep", "--gaps", "10", "--kinds", "baseline,v1",
                     "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert len(lines) == 3
        base_diag = float(lines[1].split(",")[3])
        v1_diag = float(lines[2].split(",")[3])
        assert abs(base_diag - 1.3617e-4) <= 1e-8
        assert abs(v1_diag - 1.00123) <= 1e-5

    def test_unwritable_out_dir_is_runtime_error(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("not a directory")
        rc = main(["sweep", "--out", str(blocker / "sub")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_bad_kind_is_config_error(self, tmp_path):
        assert main(["sweep", "--kinds", "v7", "--out", str(tmp_path / "x")]) == 2


class TestTrainCommand:
    def test_writes_metrics_and_checkpoint(self, trained_dir):
        lines = (trained_dir / "metrics.csv").read_text().strip().split("\n")
        assert lines[0] == "step,loss,grad_norm,step_time_s"
        assert len(lines) == 1 + 3
        assert (trained_dir / "checkpoint.bin").is_file()
        echoed = json.loads((trained_dir / "config.json").read_text())
        assert echoed["command"] == "train" and echoed["kind"] == "v4"

    def test_rerun_byte_identical(self, tmp_path):
        args = ["train", "--kind", "v2", "--layers", "1", "--d-model", "8",
                "--seq-len", "8", "--batch", "2", "--steps", "2", "--seed", "3"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        for name in ("metrics.csv", "checkpoint.bin", "config.json"):
            assert read(a / name) == read(b / name), name

    def test_missing_corpus_is_config_error(self, tmp_path, capsys):
        rc = main(["train", "--corpus", str(tmp_path / "nope.txt"),
                   "--out", str(tmp_path / "x")])
        assert rc == 2


class TestEvalCommand:
    def test_prints_and_writes_ppl(self, trained_dir, tmp_path, capsys):
        text = tmp_path / "t.txt"
        text.write_text("the river and the stone and the light.\n" * 3)
        out = tmp_path / "ev"
        rc = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                   "--text", str(text), "--out", str(out)])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out.strip().split("\n")[-1])
        stored = json.loads((out / "eval.json").read_text())
        assert printed == stored
        assert printed["ppl"] > 0

    def test_missing_checkpoint_exits_2(self, tmp_path):
        text = tmp_path / "t.txt"
        text.write_text("x" * 100)
        rc = main(["eval", "--checkpoint", str(tmp_path / "missing.bin"),
                   "--text", str(text), "--out", str(tmp_path / "o")])
        assert rc == 2


class TestDumpCommand:
    def test_singleton_first_row(self, trained_dir, tmp_path):
        out = tmp_path / "dump"
        rc = main(["dump", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                   "--prompt", "th", "--out", str(out)])
        assert rc == 0
        body = (out / "attention_layer0.csv").read_text()
        first_row = body.split("\n")[0]
        # v4 on a positive singleton logit gives a weight within eps of 1;
        # a baseline checkpoint gives exactly 1.
        assert first_row.split(",")[1] == "0"

    def test_baseline_first_row_exact(self, tmp_path):
        out_train = tmp_path / "tr"
        assert main(["train", "--kind", "baseline", "--layers", "1", "--d-model", "8",
                     "--seq-len", "8", "--batch", "2", "--steps", "1", "--seed", "5",
                     "--out", str(out_train)]) == 0
        out = tmp_path / "dump"
        assert main(["dump", "--checkpoint", str(out_train / "checkpoint.bin"),
                     "--prompt", "th", "--out", str(out)]) == 0
        assert (out / "attention_layer0.csv").read_text().split("\n")[0] == "1,0"

    def test_rerun_byte_identical(self, trained_dir, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["dump", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                         "--prompt", "the", "--out", str(out)]) == 0
            outs.append(read(out / "attention_layer0.csv"))
        assert outs[0] == outs[1]


class TestConfigHandling:
    def test_file_values_used_and_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gaps": "3", "t": 5, "kinds": "baseline"}))
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(cfg), "--kinds", "v1",
                     "--out", str(out)]) == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["t"] == 5            # from file
        assert echoed["kinds"] == "v1"     # flag overrides file
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert lines[1].split(",")[1] == "v1"

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gapz": "3"}))
        rc = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "gapz" in capsys.readouterr().err

    def test_wrong_type_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"t": "four"}))
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2

    def test_missing_required_out_rejected(self, capsys):
        assert main(["sweep"]) == 2
        assert "--out" in capsys.readouterr().err

    def test_unknown_flag_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--bogus", "1", "--out", str(tmp_path / "x")])
        assert exc.value.code == 2
