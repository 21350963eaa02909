import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from p300bench.containers import (
    ContainerFormatError,
    EpochSet,
    import_csv,
    ms_to_sample,
    read_epb,
    round_half_up,
    write_epb,
)


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2  # not banker's rounding
    assert round_half_up(2.49) == 2
    assert round_half_up(-0.5) == 0


def test_ms_to_sample():
    assert ms_to_sample(200.0, 1000.0) == 200
    assert ms_to_sample(200.0, 250.0) == 50
    assert ms_to_sample(3.0, 512.0) == 2  # 1.536 -> 2


class TestEpochSet:
    def test_properties(self, small_epochs):
        assert small_epochs.n_epochs == 6
        assert small_epochs.n_channels == 3
        assert small_epochs.n_samples == 40
        assert small_epochs.poststim_ms == pytest.approx(300.0)

    def test_select_preserves_order(self, small_epochs):
        sub = small_epochs.select([4, 1])
        assert np.array_equal(sub.data[0], small_epochs.data[4])
        assert np.array_equal(sub.labels, small_epochs.labels[[4, 1]])
        assert np.array_equal(sub.subject_ids, small_epochs.subject_ids[[4, 1]])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            EpochSet(
                data=np.zeros((2, 3, 4)),
                labels=np.array([0, 1, 1]),
                sampling_rate_hz=100.0,
                prestim_ms=0.0,
                channel_names=["a", "b", "c"],
            )

    def test_non_finite_rejected(self):
        data = np.zeros((1, 1, 4))
        data[0, 0, 2] = np.nan
        with pytest.raises(ValueError, match="invalid amplitude"):
            EpochSet(
                data=data,
                labels=np.array([1]),
                sampling_rate_hz=100.0,
                prestim_ms=0.0,
                channel_names=["a"],
            )

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            EpochSet(
                data=np.zeros((1, 1, 4)),
                labels=np.array([2]),
                sampling_rate_hz=100.0,
                prestim_ms=0.0,
                channel_names=["a"],
            )


class TestEpb:
    def test_round_trip(self, small_epochs, tmp_path):
        path = tmp_path / "set.epb"
        write_epb(small_epochs, path)
        back = read_epb(path)
        assert back.n_epochs == small_epochs.n_epochs
        assert np.array_equal(back.data, small_epochs.data)  # data was f32-exact
        assert np.array_equal(back.labels, small_epochs.labels)
        assert np.array_equal(back.subject_ids, small_epochs.subject_ids)
        assert back.channel_names == small_epochs.channel_names
        assert back.sampling_rate_hz == np.float32(small_epochs.sampling_rate_hz)
        assert back.prestim_ms == np.float32(small_epochs.prestim_ms)

    def test_rewrite_is_byte_identical(self, small_epochs, tmp_path):
        first = tmp_path / "a.epb"
        second = tmp_path / "b.epb"
        write_epb(small_epochs, first)
        write_epb(read_epb(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.epb"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(ContainerFormatError, match="unrecognized container"):
            read_epb(path)

    def test_bad_version(self, small_epochs, tmp_path):
        path = tmp_path / "v2.epb"
        write_epb(small_epochs, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 2  # version u16 little-endian
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerFormatError, match="unrecognized container"):
            read_epb(path)

    def test_header_only_is_corrupt(self, small_epochs, tmp_path):
        path = tmp_path / "trunc.epb"
        write_epb(small_epochs, path)
        path.write_bytes(path.read_bytes()[:24])
        with pytest.raises(ContainerFormatError, match="corrupt file"):
            read_epb(path)

    def test_truncated_payload_is_corrupt(self, small_epochs, tmp_path):
        path = tmp_path / "trunc2.epb"
        write_epb(small_epochs, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(ContainerFormatError, match="corrupt file"):
            read_epb(path)

    def test_long_channel_name_rejected(self, small_epochs, tmp_path):
        small_epochs.channel_names[0] = "muchtoolongname"
        with pytest.raises(ValueError, match="channel name"):
            write_epb(small_epochs, tmp_path / "x.epb")

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(
        max_examples=20,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    def test_round_trip_property(self, tmp_path, seed):
        gen = np.random.Generator(np.random.PCG64(seed))
        n, c, s = int(gen.integers(1, 5)), int(gen.integers(1, 4)), int(gen.integers(1, 30))
        epochs = EpochSet(
            data=gen.normal(0, 50, size=(n, c, s)).astype(np.float32).astype(np.float64),
            labels=gen.integers(0, 2, size=n),
            sampling_rate_hz=float(gen.integers(100, 2000)),
            prestim_ms=float(gen.integers(0, 100)),
            channel_names=[f"c{i}" for i in range(c)],
            subject_ids=gen.integers(-1, 100, size=n),
        )
        path = tmp_path / f"prop_{seed}.epb"
        write_epb(epochs, path)
        back = read_epb(path)
        assert np.array_equal(back.data, epochs.data)
        assert np.array_equal(back.labels, epochs.labels)
        assert np.array_equal(back.subject_ids, epochs.subject_ids)


class TestImportCsv:
    def _write(self, tmp_path, rows, labels):
        data_path = tmp_path / "data.csv"
        labels_path = tmp_path / "labels.csv"
        data_path.write_text("\n".join(",".join(str(v) for v in row) for row in rows) + "\n")
        labels_path.write_text("\n".join(str(v) for v in labels) + "\n")
        return data_path, labels_path

    def test_basic_import(self, tmp_path):
        rows = [list(range(12)), list(range(12, 24))]
        data_path, labels_path = self._write(tmp_path, rows, [0, 1])
        epochs = import_csv(
            data_path, labels_path, n_channels=3, sampling_rate_hz=100.0, prestim_ms=10.0
        )
        assert (epochs.n_epochs, epochs.n_channels, epochs.n_samples) == (2, 3, 4)
        # channel-major concatenation
        assert np.array_equal(epochs.data[0, 0], [0, 1, 2, 3])
        assert np.array_equal(epochs.data[0, 2], [8, 9, 10, 11])
        assert np.array_equal(epochs.labels, [0, 1])

    def test_label_count_mismatch(self, tmp_path):
        data_path, labels_path = self._write(tmp_path, [list(range(6))], [0, 1])
        with pytest.raises(ContainerFormatError, match="mismatch"):
            import_csv(data_path, labels_path, n_channels=3, sampling_rate_hz=1, prestim_ms=0)

    def test_ragged_rows(self, tmp_path):
        data_path = tmp_path / "data.csv"
        data_path.write_text("1,2,3\n1,2\n")
        labels_path = tmp_path / "labels.csv"
        labels_path.write_text("0\n1\n")
        with pytest.raises(ContainerFormatError, match="ragged"):
            import_csv(data_path, labels_path, n_channels=1, sampling_rate_hz=1, prestim_ms=0)

    def test_unparsable_value(self, tmp_path):
        data_path, labels_path = self._write(tmp_path, [["a", "b", "c"]], [0])
        with pytest.raises(ContainerFormatError, match="unparsable"):
            import_csv(data_path, labels_path, n_channels=1, sampling_rate_hz=1, prestim_ms=0)

    def test_bad_label(self, tmp_path):
        data_path, labels_path = self._write(tmp_path, [[1.0, 2.0]], [3])
        with pytest.raises(ContainerFormatError, match="invalid label"):
            import_csv(data_path, labels_path, n_channels=1, sampling_rate_hz=1, prestim_ms=0)

    def test_nine_digit_round_trip_preserves_f32(self, tmp_path, rng):
        values = rng.normal(0, 30, size=8).astype(np.float32)
        row = [f"{v:.9g}" for v in values]
        data_path, labels_path = self._write(tmp_path, [row], [1])
        epochs = import_csv(
            data_path, labels_path, n_channels=2, sampling_rate_hz=10.0, prestim_ms=0.0
        )
        assert np.array_equal(epochs.data.astype(np.float32).ravel(), values)
