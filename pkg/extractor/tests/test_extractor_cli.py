"""Exit codes and outputs of the uar-extract command."""

import json

import pytest

from uar.features import read_dataset

from uar_extractor.cli import main


def model_flags(model_dir):
    return ["--model", str(model_dir), "--model-tag", "tiny-lm"]


def run_main(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_items(path, texts):
    path.write_text(
        "\n".join(json.dumps({"id": f"t-{i}", "text": t}) for i, t in enumerate(texts)) + "\n",
        encoding="utf-8",
    )


class TestRun:
    def test_jsonl_output(self, tmp_path, tiny_model_dir, capsys):
        items = tmp_path / "items.jsonl"
        write_items(items, ["alpha", "beta", "gamma"])
        out = tmp_path / "features.jsonl"

        code, stdout, stderr = run_main(
            capsys,
            ["run", "--items", str(items), "--out", str(out)] + model_flags(tiny_model_dir),
        )
        assert code == 0
        assert stderr == ""
        assert "extracted 3 records at dim 32" in stdout
        ds = read_dataset(out)
        assert ds.dim == 32
        assert [rec.id for rec in ds.records] == ["t-0", "t-1", "t-2"]

    def test_binary_output(self, tmp_path, tiny_model_dir, capsys):
        items = tmp_path / "items.jsonl"
        write_items(items, ["alpha", "beta"])
        out = tmp_path / "features.uarf"

        code, _, _ = run_main(
            capsys,
            ["run", "--items", str(items), "--out", str(out), "--format", "binary"]
            + model_flags(tiny_model_dir),
        )
        assert code == 0
        assert out.read_bytes()[:4] == b"UARF"
        assert read_dataset(out).dim == 32


class TestFailures:
    def test_missing_items_file(self, tmp_path, tiny_model_dir, capsys):
        code, _, stderr = run_main(
            capsys,
            ["run", "--items", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "o")]
            + model_flags(tiny_model_dir),
        )
        assert code == 2
        assert json.loads(stderr)["code"] == "io_failure"

    def test_malformed_record(self, tmp_path, tiny_model_dir, capsys):
        items = tmp_path / "items.jsonl"
        items.write_text('{"id": "a"}\n', encoding="utf-8")
        code, _, stderr = run_main(
            capsys,
            ["run", "--items", str(items), "--out", str(tmp_path / "o")]
            + model_flags(tiny_model_dir),
        )
        assert code == 3
        assert json.loads(stderr)["code"] == "malformed_record"

    def test_empty_text_fails_tokenization(self, tmp_path, tiny_model_dir, capsys):
        items = tmp_path / "items.jsonl"
        items.write_text('{"id": "a", "text": ""}\n', encoding="utf-8")
        code, _, stderr = run_main(
            capsys,
            ["run", "--items", str(items), "--out", str(tmp_path / "o")]
            + model_flags(tiny_model_dir),
        )
        assert code == 3
        doc = json.loads(stderr)
        assert doc["code"] == "tokenization_failure"
        assert "a" in doc["message"]

    def test_unloadable_model(self, tmp_path, capsys):
        items = tmp_path / "items.jsonl"
        write_items(items, ["alpha"])
        code, _, stderr = run_main(
            capsys,
            ["run", "--items", str(items), "--out", str(tmp_path / "o"),
             "--model", str(tmp_path / "no-model")],
        )
        assert code == 6
        assert json.loads(stderr)["code"] == "model_load_failure"

    def test_layer_out_of_range(self, tmp_path, tiny_model_dir, capsys):
        items = tmp_path / "items.jsonl"
        write_items(items, ["alpha"])
        code, _, stderr = run_main(
            capsys,
            ["run", "--items", str(items), "--out", str(tmp_path / "o"), "--layer", "9"]
            + model_flags(tiny_model_dir),
        )
        assert code == 6
        assert json.loads(stderr)["code"] == "config_error"

    def test_rejects_bad_flag_values(self, tmp_path, tiny_model_dir):
        with pytest.raises(SystemExit):
            main(["run", "--items", "x", "--out", "y", "--format", "xml"]
                 + model_flags(tiny_model_dir))
