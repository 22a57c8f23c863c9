import math

import numpy as np
import pytest

from zvnav.core import (
    ImuSample,
    ImuWindow,
    NoiseModel,
    Recording,
    arrays_to_stream,
    sliding_windows,
    stream_to_arrays,
    validate_stream,
    window_samples_from_ms,
)
from zvnav.errors import StreamFormatError

from conftest import make_samples, uniform_stream


def _stream(n, fs=250.0, seed=0):
    rng = np.random.default_rng(seed)
    t, accel, gyro = uniform_stream(rng, n, fs)
    return make_samples(t, accel, gyro)


class TestImuSample:
    def test_coerces_to_float_arrays(self):
        s = ImuSample(0, [1, 2, 3], (4, 5, 6))
        assert s.accel.dtype == float and s.accel.shape == (3,)
        assert s.gyro.dtype == float

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            ImuSample(0.0, [1, 2], [0, 0, 0])
        with pytest.raises(ValueError):
            ImuSample(0.0, [1, 2, 3], [[0, 0, 0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ImuSample(0.0, [np.nan, 0, 0], [0, 0, 0])
        with pytest.raises(ValueError):
            ImuSample(math.inf, [0, 0, 9.81], [0, 0, 0])

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            ImuSample(-0.1, [0, 0, 9.81], [0, 0, 0])


class TestImuWindow:
    def test_matrices_shapes(self):
        w = ImuWindow(tuple(_stream(5)), 0)
        assert w.accel_matrix().shape == (5, 3)
        assert w.gyro_matrix().shape == (5, 3)
        assert len(w) == 5
        assert w.end_index == 4

    def test_requires_increasing_times(self):
        s = _stream(3)
        with pytest.raises(ValueError):
            ImuWindow((s[0], s[2], s[1]), 0)

    def test_requires_nonempty(self):
        with pytest.raises(ValueError):
            ImuWindow((), 0)


class TestNoiseModel:
    def test_defaults(self):
        nm = NoiseModel(sigma_a=0.1, sigma_w=0.01)
        assert nm.gravity_mag == 9.81
        assert nm.sigma_zupt == 0.01

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(sigma_a=0.0, sigma_w=0.01),
            dict(sigma_a=0.1, sigma_w=-1.0),
            dict(sigma_a=0.1, sigma_w=0.01, gravity_mag=0.0),
            dict(sigma_a=0.1, sigma_w=0.01, sigma_zupt=0.0),
        ],
    )
    def test_rejects_nonpositive(self, kwargs):
        with pytest.raises(ValueError):
            NoiseModel(**kwargs)


class TestSlidingWindows:
    def test_exact_fit_single_window(self):
        stream = _stream(5)
        windows = sliding_windows(stream, 5)
        assert len(windows) == 1
        assert windows[0].start_index == 0
        assert len(windows[0]) == 5

    def test_seven_samples_three_windows(self):
        windows = sliding_windows(_stream(7), 5)
        assert [w.start_index for w in windows] == [0, 1, 2]

    def test_thousand_samples_at_250hz(self):
        stream = _stream(1000, fs=250.0)
        windows = sliding_windows(stream, 5)
        assert len(windows) == 996
        for w in (windows[0], windows[-1]):
            assert len(w) == 5
            span = w.samples[-1].t - w.samples[0].t
            assert span == pytest.approx(4 * 0.004, rel=1e-12)

    def test_count_invariant(self):
        for n in range(5, 30, 7):
            stream = _stream(n)
            assert len(sliding_windows(stream, 5)) == max(0, n - 5 + 1)

    def test_reconstruction_property(self):
        # first sample of each window + tail of the last window = stream
        stream = _stream(23)
        windows = sliding_windows(stream, 5)
        rebuilt = [w.samples[0] for w in windows] + list(windows[-1].samples[1:])
        assert [s.t for s in rebuilt] == [s.t for s in stream]

    def test_short_stream_raises(self):
        with pytest.raises(StreamFormatError):
            sliding_windows(_stream(4), 5)
        with pytest.raises(StreamFormatError):
            sliding_windows([], 5)

    def test_nonmonotone_raises(self):
        s = _stream(6)
        s[3], s[4] = s[4], s[3]
        with pytest.raises(StreamFormatError):
            sliding_windows(s, 5)

    def test_bad_window_length(self):
        with pytest.raises(ValueError):
            sliding_windows(_stream(5), 0)


class TestValidateStream:
    def test_uniform_stream_ok(self):
        diag = validate_stream(_stream(100, fs=250.0))
        assert diag.ok
        assert diag.median_period == pytest.approx(0.004, rel=1e-9)
        diag.raise_if_bad()

    def test_nan_component_flagged(self):
        t = np.arange(10) / 250.0
        accel = np.tile([0.0, 0.0, 9.81], (10, 1))
        gyro = np.zeros((10, 3))
        accel[4, 1] = np.nan
        diag = validate_stream((t, accel, gyro))
        assert not diag.ok
        assert diag.first_bad_index == 4
        with pytest.raises(StreamFormatError):
            diag.raise_if_bad()

    def test_duplicate_timestamp_flagged(self):
        t = np.arange(10) / 250.0
        t[6] = t[5]
        accel = np.tile([0.0, 0.0, 9.81], (10, 1))
        gyro = np.zeros((10, 3))
        diag = validate_stream((t, accel, gyro))
        assert not diag.ok
        assert diag.first_bad_index == 6
        assert "non-increasing" in diag.message

    def test_rate_gap_flagged(self):
        t = np.arange(20) / 250.0
        t[10:] += 0.05  # dropped packets
        accel = np.tile([0.0, 0.0, 9.81], (20, 1))
        gyro = np.zeros((20, 3))
        diag = validate_stream((t, accel, gyro))
        assert not diag.ok
        assert diag.first_bad_index == 10

    def test_empty_stream(self):
        diag = validate_stream([])
        assert not diag.ok


def test_window_samples_from_ms():
    assert window_samples_from_ms(20.0, 0.004) == 5
    assert window_samples_from_ms(20.0, 0.01) == 2
    with pytest.raises(ValueError):
        window_samples_from_ms(0.0, 0.004)


def test_stream_array_round_trip():
    stream = _stream(17)
    t, accel, gyro = stream_to_arrays(stream)
    back = arrays_to_stream(t, accel, gyro)
    assert len(back) == len(stream)
    assert all(
        a.t == b.t
        and np.array_equal(a.accel, b.accel)
        and np.array_equal(a.gyro, b.gyro)
        for a, b in zip(stream, back)
    )


class TestRecording:
    def test_basic(self):
        t, accel, gyro = stream_to_arrays(_stream(10))
        rec = Recording("r0", t, accel, gyro, gait_tag="normal", loop_length_m=84.0)
        assert len(rec) == 10
        assert rec.duration == pytest.approx(t[-1] - t[0])
        assert len(rec.samples()) == 10

    def test_rejects_mismatched_labels(self):
        t, accel, gyro = stream_to_arrays(_stream(10))
        with pytest.raises(ValueError):
            Recording("r0", t, accel, gyro, stationary=np.zeros(9, dtype=bool))

    def test_rejects_nonmonotone_time(self):
        t, accel, gyro = stream_to_arrays(_stream(10))
        t[5] = t[4]
        with pytest.raises(ValueError):
            Recording("r0", t, accel, gyro)
