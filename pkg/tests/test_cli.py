import json

import pytest

from xduct.cli import build_parser, main, model_config_from_args, train_config_from_args
from xduct.data import Example, TaskKind, write_tsv
from xduct.training import load_checkpoint

TINY = ["--d-e", "8", "--d-h", "8", "--d-dec", "8", "--dropout", "0"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def memorized(tmp_path_factory):
    """A model trained to reproduce a three-example copy set."""
    d = tmp_path_factory.mktemp("mem")
    exs = [Example(tuple(s), tuple(s)) for s in ("ab", "ba", "abb")]
    write_tsv(exs, d / "train.tsv", TaskKind.SYNTHETIC)
    code = main(["train", "--task", "synthetic", "--arch", "hard", *TINY, "--lr", "0.05",
                 "--max-epochs", "40", "--batch-size", "3", "--data", str(d / "train.tsv"),
                 "--dev", str(d / "train.tsv"), "--out", str(d / "run")])
    assert code == 0
    return d


class TestTrain:
    def test_outputs(self, memorized):
        run_dir = memorized / "run"
        assert (run_dir / "best.ckpt").exists()
        header = (run_dir / "log.tsv").read_text().splitlines()[0]
        assert header == "epoch\ttrain_loss\tdev_loss\tdev_metric\tlr"
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["seed"] == 0 and manifest["model"]["arch"] == "hard"
        assert manifest["train"]["lr"] == 0.05 and manifest["inputs"]["data"].endswith("train.tsv")

    def test_g2p_split_and_files(self, tmp_path, capsys):
        lines = [f"w{chr(97 + k % 5)}{chr(97 + k // 5)}\tW {chr(65 + k % 5)}" for k in range(25)]
        (tmp_path / "d.tsv").write_text("\n".join(lines) + "\n")
        code, out, err = run(["train", "--task", "g2p", "--arch", "hard", "--preset", "small", *TINY,
                              "--max-epochs", "1", "--data", tmp_path / "d.tsv", "--out", tmp_path / "run"], capsys)
        assert code == 0, err
        assert (tmp_path / "run" / "best.ckpt").exists() and (tmp_path / "run" / "log.tsv").exists()
        assert (tmp_path / "run" / "split.test.tsv").exists()

    def test_deterministic_checkpoint(self, tmp_path, capsys):
        exs = [Example(tuple(s), tuple(s[::-1])) for s in ("abc", "ca", "bca", "ab")]
        write_tsv(exs, tmp_path / "t.tsv", "synthetic")
        blobs = []
        for k in range(2):
            code, _, err = run(["train", "--task", "synthetic", "--arch", "hard-if", *TINY, "--dropout", "0.3",
                                "--max-epochs", "2", "--seed", "4", "--deterministic", "--data", tmp_path / "t.tsv",
                                "--dev", tmp_path / "t.tsv", "--out", tmp_path / f"r{k}"], capsys)
            assert code == 0, err
            blobs.append((tmp_path / f"r{k}" / "best.ckpt").read_bytes())
        assert blobs[0] == blobs[1]

    def test_missing_data_is_usage_error(self, capsys, tmp_path):
        code, _, err = run(["train", "--task", "g2p", "--out", tmp_path], capsys)
        assert code == 2
        assert err.count("\n") == 1 and err.startswith("error: UsageError:")

    def test_missing_dev_for_translit(self, memorized, tmp_path, capsys):
        code, _, err = run(["train", "--task", "translit", "--data", memorized / "train.tsv", "--out", tmp_path], capsys)
        assert code == 2 and "--dev" in err

    def test_data_error_names_line(self, tmp_path, capsys):
        (tmp_path / "bad.tsv").write_text("ab\tba\nbroken\n")
        code, _, err = run(["train", "--task", "translit", "--data", tmp_path / "bad.tsv",
                            "--dev", tmp_path / "bad.tsv", "--out", tmp_path / "o"], capsys)
        assert code == 1 and "bad.tsv:2" in err and err.startswith("error: DataFormatError:")
        assert err.count("\n") == 1


class TestFlags:
    def _args(self, *extra):
        return build_parser().parse_args(["train", "--task", "g2p", "--data", "d", "--out", "o", *extra])

    def test_reinforce_samples(self):
        cfg = model_config_from_args(self._args("--arch", "hard", "--reinforce", "--samples", "2"))
        assert cfg.uses_reinforce and cfg.samples == 2

    def test_presets_and_overrides(self):
        cfg = model_config_from_args(self._args("--preset", "large", "--d-h", "16"))
        assert (cfg.d_e, cfg.d_h, cfg.enc_layers, cfg.dropout, cfg.samples) == (200, 16, 2, 0.4, 4)

    def test_clip_only_for_large(self):
        assert train_config_from_args(self._args("--preset", "large")).clip_norm == 5.0
        assert train_config_from_args(self._args("--preset", "small")).clip_norm is None
        assert train_config_from_args(self._args("--preset", "large", "--no-clip")).clip_norm is None

    def test_task_batch_sizes(self):
        p = build_parser()
        sizes = [train_config_from_args(p.parse_args(["train", "--task", t, "--data", "d", "--out", "o"])).batch_size
                 for t in ("g2p", "translit", "inflection")]
        assert sizes == [20, 50, 20]

    def test_threshold_default(self):
        args = build_parser().parse_args(["analyze", "--checkpoint", "c", "--data", "d"])
        assert args.threshold == 0.1

    def test_bad_arch(self, capsys):
        code, _, err = run(["train", "--task", "g2p", "--arch", "monotonic", "--data", "d", "--out", "o"], capsys)
        assert code == 2 and err.startswith("error: UsageError:")


class TestEvalAnalyze:
    def test_perfect_memorization(self, memorized, tmp_path, capsys):
        code, out, err = run(["eval", "--checkpoint", memorized / "run" / "best.ckpt",
                              "--data", memorized / "train.tsv", "--out", tmp_path], capsys)
        assert code == 0, err
        assert (tmp_path / "summary.tsv").read_text() == "ACC\tMLD\n100.0\t0.000\n"
        assert len((tmp_path / "predictions.tsv").read_text().splitlines()) == 1 + 3

    def test_task_columns(self, memorized, tmp_path, capsys):
        code, _, err = run(["eval", "--checkpoint", memorized / "run" / "best.ckpt", "--task", "translit",
                            "--data", memorized / "train.tsv", "--out", tmp_path], capsys)
        assert code == 1 and "ConfigError" in err

    def test_arch_mismatch(self, memorized, tmp_path, capsys):
        code, _, err = run(["eval", "--checkpoint", memorized / "run" / "best.ckpt", "--arch", "soft",
                            "--data", memorized / "train.tsv", "--out", tmp_path], capsys)
        assert code == 1 and err.startswith("error: ConfigError:")

    def test_analyze(self, memorized, tmp_path, capsys):
        code, _, err = run(["analyze", "--checkpoint", memorized / "run" / "best.ckpt",
                            "--data", memorized / "train.tsv", "--out", tmp_path, "--heatmaps", "5"], capsys)
        assert code == 0, err
        rows = (tmp_path / "confusion.tsv").read_text().splitlines()[1:]
        assert sum(int(v) for row in rows for v in row.split("\t")[1:]) == 3
        # only three examples exist, so only three maps
        assert len(list(tmp_path.glob("heatmap_*.tsv"))) == 3

    def test_heatmap_count(self, tmp_path, capsys):
        exs = [Example(tuple(s), tuple(s)) for s in ("ab", "ba", "abb", "bba", "aab", "bab")]
        write_tsv(exs, tmp_path / "t.tsv", "synthetic")
        assert main(["train", "--task", "synthetic", *TINY, "--max-epochs", "1", "--data", str(tmp_path / "t.tsv"),
                     "--dev", str(tmp_path / "t.tsv"), "--out", str(tmp_path / "r")]) == 0
        code, _, _ = run(["analyze", "--checkpoint", tmp_path / "r" / "best.ckpt", "--data", tmp_path / "t.tsv",
                          "--out", tmp_path / "a", "--heatmaps", "5"], capsys)
        assert code == 0 and len(list((tmp_path / "a").glob("heatmap_*.tsv"))) == 5

    def test_decode_stdout(self, memorized, capsys):
        code, out, _ = run(["decode", "--checkpoint", memorized / "run" / "best.ckpt",
                            "--data", memorized / "train.tsv", "--threads", "2"], capsys)
        assert code == 0 and out.splitlines() == ["ab\tab", "ba\tba", "abb\tabb"]

    def test_missing_checkpoint(self, tmp_path, capsys):
        code, _, err = run(["eval", "--checkpoint", tmp_path / "none.ckpt", "--data", tmp_path / "x"], capsys)
        assert code == 1 and err.count("\n") == 1


class TestGenerate:
    def test_writes_splits(self, tmp_path, capsys):
        code, _, _ = run(["generate", "--rule", "reduplicate", "--n", "100", "--min-len", "4", "--max-len", "6",
                          "--alphabet", "5", "--out", tmp_path], capsys)
        assert code == 0
        lines = (tmp_path / "train.tsv").read_text().splitlines()
        assert len(lines) == 100
        src, tgt = lines[0].split("\t")
        assert tgt == src[:3] + src
