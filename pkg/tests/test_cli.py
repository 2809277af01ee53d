"""CLI pipeline test: extract -> split -> train -> index -> predict -> eval."""

from __future__ import annotations

import json

import pytest

from hintspace.cli import main, load_config
from tests.conftest import WORDS, typed_source


@pytest.fixture()
def workspace(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for word in WORDS[:10]:
        (src / f"{word}.py").write_text(typed_source(word))
    return tmp_path


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPipeline:
    def test_full_pipeline(self, workspace, capsys):
        src = str(workspace / "src")
        corpus = str(workspace / "corpus.jsonl")
        code, out, err = run(["extract", src, "-o", corpus], capsys)
        assert code == 0, err
        assert "extracted 10 graphs" in out

        code, out, err = run(["split", corpus, "--seed", "3"], capsys)
        assert code == 0
        base = corpus[:-6]
        assert "7 graphs" in out and "2 graphs" in out

        config = workspace / "train.cfg"
        config.write_text(
            "# desk-scale training configuration\n"
            "dim = 16\n"
            "steps = 2\n"
            "epochs = 4\n"
            "batch_symbols = 24\n"
            "min_class_count = 1\n"
            "min_subtoken_count = 1\n"
            f"train_corpus = {base}.train.jsonl\n"
            f"valid_corpus = {base}.valid.jsonl\n"
        )
        ckpt = str(workspace / "model.ckpt")
        code, out, err = run(["train", "--config", str(config), "--loss", "combined",
                              "-o", ckpt], capsys)
        assert code == 0, err
        epochs = [json.loads(line) for line in out.splitlines() if line.startswith("{")]
        assert len(epochs) == 4
        assert {"epoch", "space", "class", "total", "wall_time"} <= set(epochs[0])

        tmap = str(workspace / "map.bin")
        code, out, err = run(
            ["index", "--model", ckpt,
             "--corpus", f"{base}.train.jsonl+{base}.valid.jsonl",
             "-o", tmap], capsys)
        assert code == 0, err
        assert "markers" in out

        target = workspace / "query.py"
        target.write_text("def count_fresh(values):\n    return len(values)\n")
        code, out, err = run(["predict", "--model", ckpt, "--map", tmap,
                              str(target), "--k", "3"], capsys)
        assert code == 0, err
        lines = [json.loads(line) for line in out.splitlines()]
        assert lines, "expected at least one suggestion line"
        for line in lines:
            assert line["candidates"]
            total = sum(c["probability"] for c in line["candidates"])
            assert total <= 1.0 + 1e-6

        report = str(workspace / "report")
        code, out, err = run(["eval", "--model", ckpt, "--map", tmap,
                              "--test", f"{base}.test.jsonl", "-o", report], capsys)
        assert code == 0, err
        data = json.loads(open(report + ".json").read())
        assert "overall" in data and data["overall"]["count"] > 0
        csv_lines = open(report + ".pr.csv").read().splitlines()
        assert csv_lines[0] == "threshold,recall,precision"
        assert len(csv_lines) > 1

    def test_usage_error_exit_code_1(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["train"])  # missing --config
        assert err.value.code == 1

    def test_data_error_exit_code_2(self, workspace, capsys):
        code, _, err = run(["split", str(workspace / "missing.jsonl")], capsys)
        assert code == 2
        assert "data error" in err

    def test_unknown_edge_label_rejected_at_usage_level(self, workspace, capsys):
        with pytest.raises(SystemExit) as err:
            main(["extract", str(workspace / "src"), "-o", "x.jsonl",
                  "--no-edge", "BOGUS"])
        assert err.value.code == 1

    def test_extract_with_ablation_flag(self, workspace, capsys):
        src = str(workspace / "src")
        corpus = str(workspace / "ablated.jsonl")
        code, out, _ = run(["extract", src, "-o", corpus,
                            "--no-edge", "NEXT_MAY_USE", "--no-edge", "NEXT_LEXICAL_USE"],
                           capsys)
        assert code == 0
        record = json.loads(open(corpus).readline())
        assert "NEXT_MAY_USE" not in record["edges"]
        assert "NEXT_LEXICAL_USE" not in record["edges"]
        assert "NEXT_TOKEN" in record["edges"]


class TestConfigFile:
    def test_parse_types_and_comments(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "alpha = 3\n"
            "beta = 0.5  # inline comment\n"
            "gamma = true\n"
            "delta = hello\n"
            "\n"
            "# whole-line comment\n"
        )
        config = load_config(str(path))
        assert config == {"alpha": 3, "beta": 0.5, "gamma": True, "delta": "hello"}

    def test_malformed_line_is_data_error(self, tmp_path):
        from hintspace.cli import DataError

        path = tmp_path / "c.cfg"
        path.write_text("not a key value line\n")
        with pytest.raises(DataError):
            load_config(str(path))
