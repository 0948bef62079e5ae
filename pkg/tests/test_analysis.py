import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinfid import analysis
from spinfid.analysis import (FidTrace, abragam, compare, demodulate, dft, envelope, first_zero,
                              fit_abragam, idft, spectral_width, spectrum)


def trace_from(t, sx, sy=None):
    sy = np.zeros_like(sx) if sy is None else sy
    return FidTrace(t=t, sx=sx, sy=sy, sz=np.zeros_like(sx), source="test")


def test_trace_requires_uniform_grid():
    with pytest.raises(ValueError):
        trace_from(np.array([0.0, 1.0, 3.0]), np.zeros(3))


def test_trace_csv_round_trip(tmp_path):
    t = np.arange(10) * 0.5
    tr = FidTrace(t=t, sx=np.cos(t), sy=np.sin(t), sz=t / 7, source="x")
    tr.to_csv(tmp_path / "a.csv")
    back = FidTrace.from_csv(tmp_path / "a.csv")
    assert np.array_equal(back.sx, tr.sx) and np.array_equal(back.sz, tr.sz)
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "t,sx,sy,sz"


def test_impulse():
    x = np.zeros(16)
    x[0] = 1
    assert np.allclose(dft(x), 1.0)


def test_cosine_bins():
    M = 64
    X = dft(np.cos(2 * np.pi * np.arange(M) / M))
    mag = np.abs(X)
    assert mag[1] == pytest.approx(M / 2) and mag[M - 1] == pytest.approx(M / 2)
    assert np.delete(mag, [1, M - 1]).max() < 1e-12


def test_dft_matches_definition(rng):
    x = rng.normal(size=12) + 1j * rng.normal(size=12)
    n = np.arange(12)
    direct = np.array([np.sum(x * np.exp(-2j * np.pi * k * n / 12)) for k in range(12)])
    assert np.allclose(dft(x), direct, atol=1e-12)


def test_too_short():
    with pytest.raises(ValueError):
        dft([1.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(-1e3, 1e3)))
def test_round_trip_parseval_symmetry(x):
    X = dft(x)
    assert np.allclose(idft(X).real, x, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(x).max()))
    e = np.sum(x**2)
    assert abs(e - np.sum(np.abs(X) ** 2) / x.size) <= 1e-9 * max(e, 1e-300)
    M = x.size
    assert np.allclose(np.abs(X[1:]), np.abs(X[1:][::-1]), rtol=1e-9, atol=1e-9 * max(1.0, np.abs(X).max()))


def test_spectrum_frequencies_and_padding():
    dt = 0.5
    sp = spectrum(np.ones(4000), dt)
    assert sp.resolution == pytest.approx(2 * np.pi / 2000)
    padded = spectrum(np.ones(4000), dt, resolution=4.5e-4)
    assert padded.resolution <= 4.5e-4
    assert padded.n_samples > 4000


def test_single_spin_envelope():
    t = np.arange(0, 100, 0.5)
    tr = trace_from(t, np.cos(t), -np.sin(t))
    assert np.allclose(envelope(tr), 1.0)
    assert np.allclose(demodulate(tr), 1.0)


def test_first_zero_of_cosine_envelope():
    t = np.arange(0, 2000, 0.5)
    assert first_zero(t, np.abs(np.cos(0.01 * t))) == pytest.approx(np.pi / 0.02, abs=1e-3)


def test_first_zero_not_found():
    t = np.arange(0, 10, 0.5)
    assert first_zero(t, np.ones_like(t)) is None


@pytest.mark.parametrize("scale", [1e-6, 0.5, 3.0, 1e4])
def test_first_zero_scale_invariant(scale):
    t = np.arange(0, 600, 0.5)
    amp = np.abs(np.cos(0.013 * t)) * np.exp(-t / 900)
    assert first_zero(t, scale * amp) == first_zero(t, amp)


def test_abragam_at_origin():
    assert abragam(0.0, 0.7, 0.01, 0.02) == pytest.approx(0.7)


def test_fit_exact_model():
    t = np.arange(0, 2000, 0.5)
    y = abragam(t, 1.0, 0.00065, 0.0245)
    fit = fit_abragam(t, y, t_star=np.pi / 0.0245)
    assert fit.A == pytest.approx(1.0, abs=1e-6)
    assert fit.a == pytest.approx(0.00065, abs=1e-6)
    assert fit.b == pytest.approx(0.0245, abs=1e-6)
    assert fit.window == (0.0, 2 * np.pi / 0.0245)


def test_fit_noisy_model():
    rng = np.random.default_rng(0)
    t = np.arange(0, 2000, 0.5)
    y = abragam(t, 1.0, 0.00065, 0.0245) + 1e-4 * rng.normal(size=t.size)
    fit = fit_abragam(t, y, t_star=np.pi / 0.0245)
    for got, want in zip((fit.A, fit.a, fit.b), (1.0, 0.00065, 0.0245)):
        assert got == pytest.approx(want, rel=0.02)


def test_fit_magnitude_mode():
    t = np.arange(0, 1000, 0.5)
    y = np.abs(abragam(t, 0.5, 0.0009, 0.045))
    fit = fit_abragam(t, y, t_star=np.pi / 0.045, magnitude=True)
    assert (fit.A, fit.b) == (pytest.approx(0.5, rel=1e-5), pytest.approx(0.045, rel=1e-5))


def test_fit_window_outside_trace():
    t = np.arange(0, 100, 0.5)
    with pytest.raises(ValueError):
        fit_abragam(t, np.cos(t), window=(0, 500))


def test_fit_failure_carries_best():
    t = np.arange(0, 400, 0.5)
    y = abragam(t, 1.0, 0.001, 0.02)
    with pytest.raises(analysis.FitFailure) as err:
        fit_abragam(t, y + np.sin(t), t_star=150.0, max_iter=5)
    assert isinstance(err.value.best, analysis.AbragamFit)


def test_fit_json_report():
    t = np.arange(0, 600, 0.5)
    fit = fit_abragam(t, abragam(t, 1.0, 0.001, 0.02), t_star=np.pi / 0.02)
    assert set(json.loads(json.dumps(fit.as_dict()))) == {"A", "a", "b", "residual", "window",
                                                          "magnitude"}


def test_spectral_width_of_doublet():
    t = np.arange(0, 2000, 0.5)
    x = np.cos(t) * np.cos(0.015 * t) * np.exp(-t / 400)
    sp = spectrum(x, 0.5)
    (wl, _), (wr, _) = analysis.peak_frequencies(sp)
    assert wl == pytest.approx(0.985, abs=2e-3) and wr == pytest.approx(1.015, abs=2e-3)
    assert 0.03 < spectral_width(sp) < 0.045


def test_compare_self():
    t = np.arange(0, 500, 0.5)
    tr = trace_from(t, np.cos(t) * np.cos(0.01 * t), -np.sin(t) * np.cos(0.01 * t))
    rep = compare(tr, tr)
    assert rep["before_t_star"] == {"max": 0.0, "rms": 0.0}
    assert rep["after_t_star"] == {"max": 0.0, "rms": 0.0}
    assert rep["width_difference"] == 0.0
    assert rep["t_star"] == pytest.approx(157.08, abs=0.01)


def test_compare_resamples():
    t = np.arange(0, 500, 0.5)
    a = trace_from(t, np.cos(0.01 * t))
    t2 = np.arange(0, 500, 0.25)
    b = trace_from(t2, np.cos(0.01 * t2) + 1e-3)
    rep = compare(a, b, t_star=100.0)
    assert rep["before_t_star"]["max"] == pytest.approx(1e-3, abs=1e-6)


def test_compare_disjoint():
    a = trace_from(np.arange(0, 10, 1.0), np.ones(10))
    b = trace_from(np.arange(20, 30, 1.0), np.ones(10))
    with pytest.raises(ValueError):
        compare(a, b)
