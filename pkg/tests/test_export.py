import json

import numpy as np
import pytest

from ldpfl.base.errors import FormatError, InvalidInputError, ParseError, ShapeError
from ldpfl.export.base import Writer
from ldpfl.export.checkpoint import MAGIC, decode_params, encode_params, read_checkpoint, write_checkpoint
from ldpfl.export.metrics import MetricsWriter, read_metrics, render_summary, write_convergence_csv
from ldpfl.export.prepared import PreparedData, read_prepared, write_prepared
from ldpfl.federation import ClientMetrics, RoundRecord
from ldpfl.neuralnet import LayerLayout, init_params


def record(round_index: int, accuracy: float, loss: float) -> dict:
    return {
        "round": round_index,
        "selected": [0, 1],
        "clients": [],
        "global_accuracy": accuracy,
        "global_loss": loss,
    }


class TestWriter:
    def test_creates_directory(self, tmp_path):
        writer = Writer(tmp_path / "a" / "b")
        assert writer.target_dir.is_dir()


class TestCheckpoint:
    def test_header(self):
        params = init_params(LayerLayout.classifier([3, 2]), 0)
        payload = encode_params(params)
        assert payload.startswith(MAGIC)
        # magic, count, 2 sizes, 1 activation code, 6 weights and 2 biases
        assert len(payload) == 6 + 4 + 8 + 1 + 8 * 8

    def test_bit_exact(self, tmp_path):
        params = init_params(LayerLayout.classifier([5, 4, 3]), 1)
        path = write_checkpoint(params, tmp_path / "model.ldpfl")
        assert read_checkpoint(path).equals(params)

    def test_bad_magic(self):
        with pytest.raises(FormatError) as info:
            decode_params(b"NOTIT!" + b"\0" * 10)
        assert info.value.offset == 0

    def test_truncated(self):
        payload = encode_params(init_params(LayerLayout.classifier([3, 2]), 0))
        with pytest.raises(FormatError):
            decode_params(payload[:-3])

    def test_trailing_bytes(self):
        payload = encode_params(init_params(LayerLayout.classifier([3, 2]), 0))
        with pytest.raises(FormatError):
            decode_params(payload + b"\0")


class TestPrepared:
    def test_bit_exact(self, tmp_path, rng):
        bits = rng.integers(0, 2, size=(7, 3 * 10 + 10))
        data = PreparedData(bits, rng.integers(0, 4, size=7), r=3, l=10, pad=1, classes=4)
        loaded = read_prepared(write_prepared(data, tmp_path / "c.ldpfld"))
        np.testing.assert_array_equal(loaded.bits, data.bits)
        np.testing.assert_array_equal(loaded.labels, data.labels)
        assert (loaded.r, loaded.l, loaded.pad, loaded.classes) == (3, 10, 1, 4)

    def test_layout(self, tmp_path):
        data = PreparedData(np.ones((2, 9), dtype=np.uint8), np.array([0, 1]), r=3, l=3, pad=0, classes=2)
        payload = write_prepared(data, tmp_path / "c.ldpfld").read_bytes()
        assert payload[:6] == b"LDPFLD"
        # 9 bits pack into 2 bytes, then one label byte
        assert len(payload) == 6 + 24 + 2 * 3
        assert payload[30:33] == bytes([0xFF, 0x80, 0])

    def test_empty(self, tmp_path):
        data = PreparedData(np.zeros((0, 10), dtype=np.uint8), np.zeros(0), r=1, l=10, pad=0, classes=2)
        assert len(read_prepared(write_prepared(data, tmp_path / "e.ldpfld"))) == 0

    def test_width_checked(self):
        with pytest.raises(ShapeError):
            PreparedData(np.zeros((2, 9)), np.zeros(2), r=1, l=10, pad=0, classes=2)

    def test_truncated(self, tmp_path, rng):
        data = PreparedData(rng.integers(0, 2, size=(4, 10)), np.zeros(4), r=1, l=10, pad=0, classes=2)
        path = write_prepared(data, tmp_path / "c.ldpfld")
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(FormatError) as info:
            read_prepared(path)
        assert info.value.offset == 30

    def test_to_dataset(self):
        data = PreparedData(np.array([[1, 0, 1]]), np.array([1]), r=1, l=3, pad=0, classes=2)
        ds = data.to_dataset()
        np.testing.assert_array_equal(ds.features, [[1.0, 0.0, 1.0]])
        assert ds.classes == 2

    def test_holdout_round_trip(self, tmp_path, rng):
        data = PreparedData(rng.integers(0, 2, size=(10, 10)), np.arange(10) % 2, r=1, l=10, pad=0, classes=2, holdout=3)
        loaded = read_prepared(write_prepared(data, tmp_path / "h.ldpfld"))
        assert loaded.holdout == 3
        train_set, test_set = loaded.split()
        np.testing.assert_array_equal(train_set.features, data.bits[:7])
        np.testing.assert_array_equal(test_set.labels, data.labels[7:])

    def test_holdout_bounded(self):
        with pytest.raises(ShapeError):
            PreparedData(np.zeros((2, 10)), np.zeros(2), r=1, l=10, pad=0, classes=2, holdout=3)


class TestMetrics:
    def test_one_object_per_line(self, tmp_path):
        writer = MetricsWriter(tmp_path)
        writer.write(RoundRecord(0, (0, 1), (ClientMetrics(0, 0.5, 0.75),), 0.4, 0.8))
        writer.write(record(1, 0.85, 0.3))
        lines = writer.path.read_text().splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first["selected"] == [0, 1]
        assert first["clients"][0]["train_accuracy"] == 0.75

    def test_truncates_on_open(self, tmp_path):
        MetricsWriter(tmp_path).write(record(0, 0.1, 1.0))
        writer = MetricsWriter(tmp_path)
        assert writer.path.read_text() == ""

    def test_read_back(self, tmp_path):
        writer = MetricsWriter(tmp_path)
        for i in range(3):
            writer.write(record(i, 0.1 * i, 1.0 - 0.1 * i))
        assert [r["round"] for r in read_metrics(writer.path)] == [0, 1, 2]

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "metrics.jsonl"
        path.write_text(json.dumps(record(0, 0.1, 1.0)) + "\n{not json\n")
        with pytest.raises(ParseError) as info:
            read_metrics(path)
        assert info.value.line == 2
        assert info.value.path == str(path)

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "metrics.jsonl"
        path.write_text('{"round": 0}\n')
        with pytest.raises(ParseError):
            read_metrics(path)

    def test_convergence_csv(self, tmp_path):
        records = [record(i, 0.1 * i, 1.0) for i in range(4)]
        lines = write_convergence_csv(records, tmp_path / "run.csv").read_text().splitlines()
        assert lines[0] == "round,global_accuracy,global_loss"
        assert len(lines) == 1 + 4

    def test_summary_has_a_column_per_run(self):
        summary = render_summary(
            {"alpha-4": [record(0, 0.5, 1.0)], "alpha-10": [record(0, 0.6, 0.9), record(1, 0.7, 0.8)]}
        )
        header = summary.splitlines()[0]
        assert "alpha-4" in header and "alpha-10" in header
        assert "| final accuracy | 0.5000 | 0.7000 |" in summary

    def test_summary_needs_runs(self):
        with pytest.raises(InvalidInputError):
            render_summary({})
