import io
import json

import numpy as np

from promptens.cli import run


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _synth_args(out_dir, **overrides):
    args = {
        "--out": str(out_dir), "--n": "64", "--c": "4", "--m": "3",
        "--dims": "16,16", "--sep": "4.0", "--seed": "7",
    }
    args.update({k: str(v) for k, v in overrides.items()})
    flat = ["synth"]
    for k, v in args.items():
        flat += [k, v]
    return flat


class TestSynth:
    def test_writes_bundle_and_reports_json(self, tmp_path):
        code, out, err = _run(_synth_args(tmp_path / "b"))
        assert code == 0
        payload = json.loads(out)
        assert payload["command"] == "synth"
        assert (tmp_path / "b" / "manifest.json").exists()
        assert payload["splits"]["train"] > 0

    def test_stdout_is_single_json_line(self, tmp_path):
        _, out, _ = _run(_synth_args(tmp_path / "b"))
        assert len(out.strip().split("\n")) == 1
        json.loads(out)


class TestUsageErrors:
    def test_unknown_flag(self, tmp_path):
        code, out, err = _run(["synth", "--out", str(tmp_path), "--bogus", "1"])
        assert code == 1
        assert "usage" in err.lower()
        assert out == ""

    def test_unknown_subcommand(self):
        code, _, err = _run(["frobnicate"])
        assert code == 1

    def test_missing_required_flag(self):
        code, _, err = _run(["train", "--alpha", "0.1"])
        assert code == 1

    def test_bad_task_choice(self, tmp_path):
        code, _, _ = _run(["eval", "--bundle", "x", "--ckpt", "y", "--task", "weird"])
        assert code == 1

    def test_target_with_b2n_rejected(self, tmp_path):
        _run(_synth_args(tmp_path / "b"))
        code, _, err = _run([
            "eval", "--bundle", str(tmp_path / "b"), "--ckpt", "c",
            "--task", "b2n", "--target", str(tmp_path / "b"),
        ])
        assert code == 1


class TestPipeline:
    def test_synth_train_eval_roundtrip(self, tmp_path):
        bundle = tmp_path / "b"
        ckpt = tmp_path / "ck"
        assert _run(_synth_args(bundle))[0] == 0
        code, out, _ = _run([
            "train", "--bundle", str(bundle), "--alpha", "0.2", "--beta", "1.0",
            "--seed", "0", "--out", str(ckpt),
        ])
        assert code == 0
        train_payload = json.loads(out)
        assert train_payload["steps"] > 0
        assert (ckpt / "checkpoint.json").exists()
        log_lines = (ckpt / "train_log.jsonl").read_text().strip().split("\n")
        assert len(log_lines) == train_payload["steps"]
        first = json.loads(log_lines[0])
        assert {"step", "epoch", "lr", "ce", "kl", "mutual", "total"} <= set(first)
        assert first["lr"] == 1e-5

        code, out, _ = _run([
            "eval", "--bundle", str(bundle), "--ckpt", str(ckpt), "--task", "b2n",
        ])
        assert code == 0
        report = json.loads(out)["report"]
        assert {"base", "new", "hm"} <= set(report)
        assert 0.0 <= report["base"]["accuracy"] <= 1.0

    def test_transfer_and_dg_tasks(self, tmp_path):
        bundle, ckpt = tmp_path / "b", tmp_path / "ck"
        _run(_synth_args(bundle))
        _run(["train", "--bundle", str(bundle), "--seed", "0", "--out", str(ckpt)])
        for task, label in (("transfer", "cross_dataset"), ("dg", "domain_gen")):
            code, out, _ = _run([
                "eval", "--bundle", str(bundle), "--ckpt", str(ckpt),
                "--task", task, "--target", str(bundle),
            ])
            assert code == 0
            assert json.loads(out)["report"]["task"] == label

    def test_corrupted_bundle_is_exit_2(self, tmp_path):
        bundle, ckpt = tmp_path / "b", tmp_path / "ck"
        _run(_synth_args(bundle))
        victim = bundle / "logits.bb0.f32"
        victim.write_bytes(victim.read_bytes()[:-4])
        code, out, err = _run(["train", "--bundle", str(bundle), "--seed", "0", "--out", str(ckpt)])
        assert code == 2
        assert out == ""
        assert "logits.bb0" in err

    def test_structure_mismatch_is_exit_2(self, tmp_path):
        b1, b2, ckpt = tmp_path / "b1", tmp_path / "b2", tmp_path / "ck"
        _run(_synth_args(b1))
        _run(_synth_args(b2, **{"--m": "2"}))
        _run(["train", "--bundle", str(b1), "--seed", "0", "--out", str(ckpt)])
        code, _, err = _run([
            "eval", "--bundle", str(b1), "--ckpt", str(ckpt),
            "--task", "transfer", "--target", str(b2),
        ])
        assert code == 2

    def test_divergent_training_is_exit_3(self, tmp_path):
        bundle, ckpt = tmp_path / "b", tmp_path / "ck"
        _run(_synth_args(bundle))
        with np.errstate(all="ignore"):
            code, _, err = _run([
                "train", "--bundle", str(bundle), "--seed", "0", "--out", str(ckpt),
                "--lr", "1e30", "--warmup-lr", "1e29",
            ])
        assert code == 3
        assert "diverged" in err


class TestVerifyCausal:
    def test_reports_max_deviation(self):
        code, out, _ = _run(["verify-causal", "--trials", "50", "--seed", "1"])
        assert code == 0
        payload = json.loads(out)
        assert payload["max_deviation"] <= 1e-10
        assert payload["identity_ok"] is True
        assert payload["confounding_witness_gap"] > 0.05


class TestInspect:
    def test_summary_and_consistency(self, tmp_path):
        bundle = tmp_path / "b"
        _run(_synth_args(bundle))
        code, out, _ = _run(["inspect", "--bundle", str(bundle)])
        assert code == 0
        payload = json.loads(out)
        assert payload["num_classes"] == 4
        assert payload["consistency"]["ok"] is True
        assert payload["consistency"]["max_deviation"] <= 1e-4

    def test_flags_inconsistent_logits(self, tmp_path):
        bundle = tmp_path / "b"
        _run(_synth_args(bundle))
        victim = bundle / "logits.bb0.f32"
        arr = np.frombuffer(victim.read_bytes(), dtype="<f4").copy()
        arr[0] += 1.0
        victim.write_bytes(arr.tobytes())
        code, out, _ = _run(["inspect", "--bundle", str(bundle)])
        assert code == 0
        payload = json.loads(out)
        assert payload["consistency"]["ok"] is False


class TestDeterminismAndLogging:
    def test_identical_flags_identical_json(self, tmp_path):
        argvs = [
            _synth_args(tmp_path / "b"),
            ["train", "--bundle", str(tmp_path / "b"), "--seed", "3", "--out", str(tmp_path / "ck")],
            ["eval", "--bundle", str(tmp_path / "b"), "--ckpt", str(tmp_path / "ck"), "--task", "b2n"],
        ]
        first = [_run(a)[1] for a in argvs]
        second = [_run(a)[1] for a in argvs]
        assert first == second

    def test_log_level_controls_stderr(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AMPLE_LOG", "debug")
        _, _, err_debug = _run(_synth_args(tmp_path / "b1"))
        monkeypatch.setenv("AMPLE_LOG", "info")
        _, _, err_info = _run(_synth_args(tmp_path / "b2"))
        assert len(err_debug) >= len(err_info) > 0

    def test_machine_output_stays_clean_under_debug(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AMPLE_LOG", "debug")
        _, out, _ = _run(_synth_args(tmp_path / "b"))
        json.loads(out)
