import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from csilab.signal import ScalarSeries
from csilab.spectral import (
    Psd,
    SpectralError,
    WindowSpec,
    build_feature,
    descriptors,
    dft_psd,
    multi_window_features,
    normalize_acc_spectrum,
)
from csilab.spectral.cache import CacheFormatError, read_feature_cache, write_feature_cache
from csilab.spectral.psd import taper_window


def brute_psd(x, taper="rectangular"):
    """Direct DFT summation, independent of numpy.fft."""
    w = len(x)
    m = sum(x) / w
    y = [(xi - m) * ti for xi, ti in zip(x, taper_window(w, taper))]
    out = []
    for k in range(1, w // 2 + 1):
        X = sum(y[n] * cmath.exp(-2j * math.pi * k * n / w) for n in range(w))
        out.append(abs(X) ** 2)
    return np.array(out)


RECT20 = WindowSpec(20, taper="rectangular")


def sine_window(f=3.0, w=20, fps=30.0, phase=0.0):
    return np.sin(2 * np.pi * f * np.arange(w) / fps + phase)


# --- dft_psd --------------------------------------------------------------

def test_zero_and_constant_windows_have_zero_psd():
    for taper in ("rectangular", "hann"):
        spec = WindowSpec(20, taper=taper)
        np.testing.assert_array_equal(dft_psd(np.zeros(20), spec).bins, 0.0)
        np.testing.assert_allclose(dft_psd(np.full(20, 3.7), spec).bins, 0.0, atol=1e-20)


def test_on_bin_sine_has_single_dominant_bin():
    bins = dft_psd(sine_window(), RECT20).bins
    ref = brute_psd(sine_window())
    assert np.argmax(bins) == 1  # k = 2 -> 3 Hz
    others = np.delete(bins, 1)
    assert np.all(others < 1e-9 * bins[1])
    assert bins[1] == pytest.approx(ref[1], rel=1e-12)
    assert bins[1] == pytest.approx((20 / 2) ** 2, rel=1e-12)


@pytest.mark.parametrize("taper", ["rectangular", "hann"])
@pytest.mark.parametrize("w", [5, 8, 13, 20])
def test_psd_matches_brute_force(taper, w):
    x = np.random.default_rng(w).normal(size=w)
    np.testing.assert_allclose(dft_psd(x, WindowSpec(w, taper=taper)).bins, brute_psd(list(x), taper), rtol=1e-10)


def test_length_mismatch_raises():
    with pytest.raises(SpectralError):
        dft_psd(np.zeros(19), RECT20)


def test_parseval_rectangular():
    for w in (5, 6, 19, 20):
        x = np.random.default_rng(w).normal(size=w)
        bins = dft_psd(x, WindowSpec(w, taper="rectangular")).bins
        weights = np.full(len(bins), 2.0)
        if w % 2 == 0:
            weights[-1] = 1.0  # Nyquist bin has no mirror image
        total = np.sum(weights * bins) / w ** 2 + np.mean(x) ** 2
        assert total == pytest.approx(np.mean(x ** 2), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    hnp.arrays(np.float64, 20, elements=st.floats(-100, 100, allow_subnormal=False)),
    st.integers(0, 19),
)
def test_circular_shift_invariance_bitwise(x, s):
    a = build_feature(x, RECT20).as_vector()
    b = build_feature(np.roll(x, s), RECT20).as_vector()
    assert a.tobytes() == b.tobytes()


# --- descriptors ----------------------------------------------------------

def test_flat_psd_descriptors():
    d = descriptors(Psd(np.ones(10), 1.5))
    assert d.entropy == pytest.approx(1.0)
    assert d.clarity == pytest.approx(1.0)
    assert d.spacing_hz == pytest.approx(1.5)
    assert d.peak_freq_hz == pytest.approx(1.5)


def test_single_bin_descriptors():
    bins = np.zeros(10)
    bins[3] = 2.0
    d = descriptors(Psd(bins, 1.5))
    assert d.entropy == 0.0
    assert d.clarity == pytest.approx(10.0)
    assert d.spacing_hz == 0.0
    assert d.peak_freq_hz == pytest.approx(6.0)
    assert d.avg_power == pytest.approx(0.2)


def test_two_peak_spacing():
    bins = np.zeros(10)
    bins[1] = bins[4] = 1.0  # k = 2 and k = 5
    d = descriptors(Psd(bins, 30.0 / 20))
    assert d.spacing_hz == pytest.approx(4.5)


def test_snr_uses_median_of_non_peak_bins():
    bins = np.array([1.0, 8.0, 2.0, 3.0, 1.0])
    d = descriptors(Psd(bins, 1.0))
    assert d.snr == pytest.approx(8.0 / (1.5 + 1e-12))


@settings(max_examples=80, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 1e6, allow_subnormal=False)))
def test_descriptor_invariants(bins):
    d = descriptors(Psd(bins, 1.5))
    assert d.peak_height >= 0
    assert 0.0 <= d.entropy <= 1.0
    assert d.spacing_hz >= 0
    if np.any(bins > 0):
        assert d.clarity >= 1.0 - 1e-12


# --- build_feature --------------------------------------------------------

def test_zero_window_feature():
    feat = build_feature(np.zeros(20), RECT20)
    np.testing.assert_array_equal(feat.psd.bins, 0.0)
    assert feat.desc.entropy == 1.0
    for name in ("peak_height", "clarity", "spacing_hz", "snr", "avg_power"):
        assert getattr(feat.desc, name) == 0.0


@pytest.mark.parametrize("w", range(2, 31))
def test_feature_vector_length(w):
    assert build_feature(np.arange(w, dtype=float), WindowSpec(w)).as_vector().shape == (w // 2 + 7,)


def test_sine_feature_peak():
    feat = build_feature(sine_window(), RECT20)
    assert feat.desc.peak_freq_hz == pytest.approx(3.0)
    assert feat.desc.peak_height == pytest.approx(brute_psd(sine_window())[1], rel=1e-12)


# --- acceleration normalisation ------------------------------------------

def test_normalised_acceleration_matches_velocity_spectrum():
    f, fps, w = 3.0, 30.0, 20
    t = np.arange(w) / fps
    v = np.sin(2 * np.pi * f * t)
    a = 2 * np.pi * f * np.cos(2 * np.pi * f * t)
    sv = dft_psd(v, RECT20)
    sa = dft_psd(a, RECT20)
    assert sa.bins.max() / (2 * np.pi * f) ** 2 == pytest.approx(sv.bins.max(), rel=0.01)
    np.testing.assert_allclose(normalize_acc_spectrum(sa).bins, sv.bins, atol=1e-9 * sv.bins.max())


def test_normalisation_is_linear_and_matches_formula():
    bins = np.random.default_rng(0).uniform(size=10)
    out = normalize_acc_spectrum(Psd(bins, 1.5)).bins
    np.testing.assert_allclose(normalize_acc_spectrum(Psd(4.0 * bins, 1.5)).bins, 4.0 * out)
    assert out[0] == pytest.approx(bins[0] / (2 * np.pi * 30.0 / 20) ** 2)


# --- multi-window ----------------------------------------------------------

def test_positions_per_window():
    mw = multi_window_features(ScalarSeries(0.0, 30.0, np.random.default_rng(0).normal(size=90)))
    assert mw.windows == tuple(range(5, 21))
    assert mw[20].shape == (8, 17)
    assert mw[5].shape == (43, 9)
    for w in mw.windows:
        assert mw[w].shape == ((90 - w) // max(1, w // 2) + 1, w // 2 + 7)


def test_raw_mode_shapes():
    mw = multi_window_features(np.arange(90.0), mode="raw")
    assert mw[7].shape == (28, 7)
    np.testing.assert_array_equal(mw[7][1], np.arange(3.0, 10.0))


def test_short_series_rejected():
    with pytest.raises(SpectralError):
        multi_window_features(np.zeros(19))


@pytest.mark.parametrize("w", [5, 10, 20])
def test_circular_shift_by_hop_shifts_sequence(w):
    x = np.random.default_rng(1).normal(size=90)
    hop = max(1, w // 2)
    a = multi_window_features(x, windows=(w,))[w]
    b = multi_window_features(np.roll(x, hop), windows=(w,))[w]
    assert a[:-1].tobytes() == b[1:].tobytes()


# --- feature cache -----------------------------------------------------------

def test_feature_cache_round_trip(tmp_path):
    blocks = [np.arange(6.0).reshape(2, 3), np.random.default_rng(0).normal(size=(8, 17))]
    p = tmp_path / "f.hsft"
    assert write_feature_cache(p, blocks) == 2
    raw = p.read_bytes()
    assert raw[:4] == b"HSFT" and raw[4:8] == (1).to_bytes(4, "little")
    back = read_feature_cache(p)
    for a, b in zip(blocks, back):
        np.testing.assert_array_equal(a, b)


def test_feature_cache_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"NOPE\x01\x00\x00\x00")
    with pytest.raises(CacheFormatError):
        read_feature_cache(p)
