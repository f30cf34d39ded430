import json
import struct

import numpy as np
import pytest

from uar_extractor.errors import IoFailure, MalformedRecord
from uar_extractor.records import (
    FeatureRow,
    TextRecord,
    read_text_records,
    write_features,
    write_features_binary,
    write_features_jsonl,
)


def write_lines(path, objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n", encoding="utf-8")


class TestReadTextRecords:
    def test_forged_shape(self, tmp_path):
        path = tmp_path / "forged.jsonl"
        write_lines(path, [
            {"id": "f-0", "text": "When is the deadline?", "scenario": "time", "label": "retrieve",
             "provenance": {"source_ids": ["q-1"]}},
            {"id": "f-1", "text": "Summarize this.", "scenario": "knowledge", "label": "no_retrieve"},
        ])
        records = read_text_records(path)
        assert records == [
            TextRecord(id="f-0", text="When is the deadline?", scenario="time", label="retrieve"),
            TextRecord(id="f-1", text="Summarize this.", scenario="knowledge", label="no_retrieve"),
        ]

    def test_qa_shape_is_untagged(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        write_lines(path, [
            {"id": "q-0", "question": "Who wrote it?", "answers": ["someone"], "source": "trivia_qa"},
        ])
        assert read_text_records(path) == [
            TextRecord(id="q-0", text="Who wrote it?", scenario=None, label=None)
        ]

    def test_mixed_shapes_and_blank_lines(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        path.write_text(
            json.dumps({"id": "a", "text": "t", "scenario": "self", "label": "retrieve"})
            + "\n\n"
            + json.dumps({"id": "b", "question": "q?"})
            + "\n",
            encoding="utf-8",
        )
        assert [r.id for r in read_text_records(path)] == ["a", "b"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_text_records(tmp_path / "absent.jsonl")

    def test_error_names_path_and_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "t"}\nnot json\n', encoding="utf-8")
        with pytest.raises(MalformedRecord, match=r"bad\.jsonl:2"):
            read_text_records(path)

    @pytest.mark.parametrize("obj", [
        {"text": "t"},
        {"id": "", "text": "t"},
        {"id": "a"},
        {"id": "a", "text": 7},
        {"id": "a", "text": "t", "scenario": "weather"},
        {"id": "a", "text": "t", "label": "maybe"},
    ])
    def test_malformed_records(self, tmp_path, obj):
        path = tmp_path / "bad.jsonl"
        write_lines(path, [obj])
        with pytest.raises(MalformedRecord):
            read_text_records(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        write_lines(path, [{"id": "a", "text": "t"}, {"id": "a", "question": "q?"}])
        with pytest.raises(MalformedRecord, match="duplicate id 'a'"):
            read_text_records(path)


def sample_rows(dim=4):
    rng = np.random.Generator(np.random.PCG64(3))
    return [
        FeatureRow(id="r-0", scenario="self", label="retrieve", text="alpha",
                   vector=rng.standard_normal(dim).astype(np.float32)),
        FeatureRow(id="r-1", scenario=None, label=None, text="beta",
                   vector=rng.standard_normal(dim).astype(np.float32)),
    ]


class TestWriters:
    def test_jsonl_layout(self, tmp_path):
        path = tmp_path / "out.jsonl"
        rows = sample_rows()
        write_features_jsonl(path, 4, "demo provenance", rows)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert json.loads(lines[0]) == {"dim": 4, "provenance": "demo provenance"}
        first = json.loads(lines[1])
        assert list(first) == ["id", "scenario", "label", "text", "vector"]
        assert first["scenario"] == "self" and first["label"] == "retrieve"
        second = json.loads(lines[2])
        assert second["scenario"] is None and second["label"] is None
        # float32 -> json -> float32 is lossless
        back = np.asarray(first["vector"], dtype=np.float32)
        assert back.tobytes() == rows[0].vector.tobytes()

    def test_binary_layout(self, tmp_path):
        path = tmp_path / "out.uarf"
        rows = sample_rows()
        write_features_binary(path, 4, rows)
        data = path.read_bytes()
        magic, version, dim, count = struct.unpack_from("<4sIIQ", data, 0)
        assert (magic, version, dim, count) == (b"UARF", 1, 4, 2)
        offset = struct.calcsize("<4sIIQ")
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        assert data[offset:offset + id_len] == b"r-0"
        offset += id_len
        assert data[offset] == 3 and data[offset + 1] == 1  # self, retrieve
        offset += 2
        assert data[offset:offset + 16] == rows[0].vector.astype("<f4").tobytes()

    def test_untagged_codes(self, tmp_path):
        path = tmp_path / "out.uarf"
        write_features_binary(path, 4, sample_rows())
        data = path.read_bytes()
        offset = struct.calcsize("<4sIIQ") + 4 + 3 + 2 + 16  # past record r-0
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4 + id_len
        assert data[offset] == 255 and data[offset + 1] == 255

    def test_format_dispatch(self, tmp_path):
        rows = sample_rows()
        write_features(tmp_path / "a.jsonl", 4, "p", rows, "jsonl")
        write_features(tmp_path / "a.uarf", 4, "p", rows, "binary")
        assert (tmp_path / "a.jsonl").read_bytes().startswith(b'{"dim":4')
        assert (tmp_path / "a.uarf").read_bytes().startswith(b"UARF")

    def test_writes_are_byte_deterministic(self, tmp_path):
        rows = sample_rows()
        write_features_jsonl(tmp_path / "x.jsonl", 4, "p", rows)
        write_features_jsonl(tmp_path / "y.jsonl", 4, "p", rows)
        assert (tmp_path / "x.jsonl").read_bytes() == (tmp_path / "y.jsonl").read_bytes()
