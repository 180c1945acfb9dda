import math

import numpy as np
import pytest
from scipy import stats

from xtalk.model import GaussianBand, Lorentzian, Tabulated, White
from xtalk.noisegen import MAFilter, Trajectory, design_ma, empirical_psd, sample_trajectory


def test_white_is_single_tap():
    f = design_ma(White(4.0), 9, 0.5)
    assert np.count_nonzero(np.abs(f.taps) > 1e-12) == 1
    assert np.max(np.abs(f.taps)) == pytest.approx(math.sqrt(4.0 / 0.5))
    assert not f.aliased


def test_zero_spectrum_gives_zero_taps():
    f = design_ma(Tabulated([0.0, 1e9], [0.0, 0.0]), 17, 1e-9)
    assert not np.any(f.taps)


def test_gaussian_band_response_peaks_near_centre():
    dt = 1e-8
    w0 = 2 * math.pi * 5e6
    f = design_ma(GaussianBand(1.0, w0, 2 * math.pi * 2e5), 257, dt)
    n_grid = max(4096, 8 * 257)
    bin_width = 2 * math.pi / (n_grid * dt)
    w = np.linspace(0, math.pi / dt, 200001)
    peak = w[np.argmax(np.abs(f.response(w)))]
    assert abs(peak - w0) <= bin_width


def test_aliased_spectrum_warns():
    with pytest.warns(RuntimeWarning, match="Nyquist"):
        f = design_ma(Lorentzian(1.0, 1e9), 33, 1e-8)
    assert f.aliased


def test_invalid_filter_rejected():
    with pytest.raises(ValueError):
        MAFilter([], 1.0)
    with pytest.raises(ValueError):
        MAFilter([1.0, math.nan], 1.0)
    with pytest.raises(ValueError):
        design_ma(White(1.0), 0, 1.0)


def test_zero_taps_give_zero_trajectory():
    t = sample_trajectory(MAFilter([0.0, 0.0], 1.0), 100, seed=3)
    assert t.samples.shape == (100,)
    assert not np.any(t.samples)


def test_single_tap_is_iid_normal():
    c = 2.5
    x = sample_trajectory(MAFilter([c], 1.0), 10 ** 5, seed=11).samples
    assert stats.kstest(x / c, "norm").pvalue > 0.01


def test_ma1_lag_one_autocorrelation():
    a, b = 1.0, 0.6
    n = 10 ** 6
    x = sample_trajectory(MAFilter([a, b], 1.0), n, seed=2).samples
    r1 = np.dot(x[:-1] - x.mean(), x[1:] - x.mean()) / np.dot(x - x.mean(), x - x.mean())
    rho1 = a * b / (a * a + b * b)
    # Bartlett: var(r1) = (1 - 3 rho1^2 + 4 rho1^4) / n for MA(1)
    se = math.sqrt((1 - 3 * rho1 ** 2 + 4 * rho1 ** 4) / n)
    assert abs(r1 - rho1) < 3 * se


def test_long_trajectory_mean_is_zero():
    taps = design_ma(Lorentzian(1.0, 2e6), 129, 1e-8).taps
    f = MAFilter(taps, 1e-8)
    n = 2 * 10 ** 5
    x = sample_trajectory(f, n, seed=5).samples
    # long-run variance of the mean for an MA process: (sum b)^2 / n
    se = abs(taps.sum()) / math.sqrt(n)
    assert abs(x.mean()) < 3 * se


def test_trajectories_are_deterministic():
    f = MAFilter([1.0, -0.3, 0.2], 1e-9)
    a = sample_trajectory(f, 500, seed=99, qubit=1, index=4).samples
    b = sample_trajectory(f, 500, seed=99, qubit=1, index=4).samples
    c = sample_trajectory(f, 500, seed=99, qubit=1, index=5).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_empirical_psd_of_nothing_is_zero():
    est = empirical_psd([], 1.0)
    assert not np.any(est.values)


def test_empirical_psd_rejects_unequal_lengths():
    with pytest.raises(ValueError):
        empirical_psd([np.zeros(4), np.zeros(5)], 1.0)


def test_empirical_psd_white_is_flat():
    dt, S0 = 1e-8, 3.0
    f = design_ma(White(S0), 1, dt)
    trajs = [sample_trajectory(f, 1024, seed=7, index=k) for k in range(1000)]
    est = empirical_psd(trajs, dt)
    err = np.linalg.norm(est.values - S0) / np.linalg.norm(np.full_like(est.values, S0))
    assert err < 0.05


def test_empirical_psd_ma1_matches_analytic():
    dt, a, b = 1e-8, 1.0, 0.7
    f = MAFilter([a, b], dt)
    trajs = [sample_trajectory(f, 1024, seed=8, index=k) for k in range(1000)]
    est = empirical_psd(trajs, dt)
    w = np.asarray(est.grid)
    oracle = np.abs(a + b * np.exp(-1j * w * dt)) ** 2 * dt
    assert np.linalg.norm(est.values - oracle) / np.linalg.norm(oracle) < 0.05


def test_trajectory_csv_round_trip():
    f = MAFilter([0.3, 1.1], 1e-9)
    t = sample_trajectory(f, 64, seed=1)
    text = t.to_csv()
    assert text.startswith("index,value\r\n")
    back = Trajectory.from_csv(text, 1e-9)
    assert back.samples.tobytes() == t.samples.tobytes()
