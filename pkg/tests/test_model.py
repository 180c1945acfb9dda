import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xtalk.model import (DeviceError, DeviceModel, GaussianBand, Lorentzian, NoiseModel, OneOverF,
                         Tabulated, White, correlation_from_psd, eval_psd, spectrum_from_dict,
                         two_coloring, validate_device)


def test_single_edge_is_bipartite():
    check = validate_device(DeviceModel(2, ((0, 1, 1.0),)))
    assert check.bipartite
    assert check.colors == (0, 1)


def test_triangle_is_not_bipartite():
    check = validate_device(DeviceModel(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0))))
    assert not check.bipartite
    assert len(check.monochromatic) == 1


def test_self_edge_rejected():
    with pytest.raises(DeviceError, match="self-edge"):
        validate_device(DeviceModel(2, ((0, 0, 1.0),)))


@pytest.mark.parametrize("edges, msg", [
    (((0, 5, 1.0),), "out of range"),
    (((1, 0, 1.0),), "ordered"),
    (((0, 1, 1.0), (0, 1, 2.0)), "duplicate"),
    (((0, 1, math.inf),), "non-finite"),
])
def test_invalid_edges(edges, msg):
    with pytest.raises(DeviceError, match=msg):
        validate_device(DeviceModel(3, edges))


def _brute_force_bipartite(n, edges):
    for colors in itertools.product((0, 1), repeat=n):
        if all(colors[i] != colors[j] for i, j, _ in edges):
            return True
    return False


@given(st.integers(1, 10).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=15))))
def test_bipartite_agrees_with_brute_force(data):
    n, pairs = data
    edges = tuple(sorted({(min(i, j), max(i, j), 1.0) for i, j in pairs if i != j}))
    check = validate_device(DeviceModel(n, edges))
    assert check.bipartite == _brute_force_bipartite(n, edges)
    colors, mono = two_coloring(n, edges)
    assert set(mono) == {(i, j) for i, j, _ in edges if colors[i] == colors[j]}


def test_eval_psd_examples():
    assert eval_psd(White(2.0), 123.4) == 2.0
    assert eval_psd(Lorentzian(3.0, 5.0), 0.0) == 3.0
    assert eval_psd(Lorentzian(3.0, 5.0), 5.0) == pytest.approx(1.5)
    assert eval_psd(Tabulated([1, 2], [4, 8]), 1.5) == pytest.approx(6.0)
    assert eval_psd(Tabulated([1, 2], [4, 8]), 3.0) == 0.0


def test_eval_psd_rejects_negative_frequency():
    with pytest.raises(ValueError):
        eval_psd(White(1.0), -1.0)


def test_eval_psd_nonnegative_on_random_draws():
    rng = np.random.default_rng(1)
    w = rng.uniform(0, 1e9, 10 ** 6)
    specs = [White(0.3), Lorentzian(2.0, 1e7), OneOverF(1e3, 1e4, 1e8), GaussianBand(1.0, 3e7, 1e6),
             Tabulated([0, 1e8, 2e8], [1.0, 0.0, 2.0])]
    for spec in specs:
        assert np.all(eval_psd(spec, w) >= 0)


def test_white_correlation_at_zero_lag():
    wmax = 1e8
    c = correlation_from_psd(White(2.0), 0.0, wmax)
    assert c.value == pytest.approx(2.0 * wmax / math.pi, rel=1e-6)


def test_lorentzian_correlation_decay_rate():
    # C(tau) = S0 wc exp(-wc |tau|) / 2 for the untruncated Lorentzian
    wc = 1e6
    spec = Lorentzian(1.0, wc)
    taus = np.linspace(0.5, 3.0, 6) / wc
    vals = [correlation_from_psd(spec, t, 4000 * wc, n_grid=2 ** 21 + 1).value for t in taus]
    rate = -np.polyfit(taus, np.log(vals), 1)[0]
    assert rate == pytest.approx(wc, rel=0.02)


@pytest.mark.parametrize("spec", [White(1.0), Lorentzian(1.0, 1e6), OneOverF(1.0, 1e4, 1e7),
                                  GaussianBand(1.0, 2e6, 3e5), Tabulated([0, 1e6, 5e6], [1.0, 2.0, 0.0])])
def test_correlation_even_and_peaked_at_zero(spec):
    wmax = 2e7
    c0 = correlation_from_psd(spec, 0.0, wmax, n_grid=2 ** 15 + 1).value
    for tau in (1e-8, 5e-8, 2e-7):
        cp = correlation_from_psd(spec, tau, wmax, n_grid=2 ** 15 + 1).value
        cm = correlation_from_psd(spec, -tau, wmax, n_grid=2 ** 15 + 1).value
        assert cp == cm
        assert abs(cp) <= c0 * (1 + 1e-9)


def test_spectrum_dict_round_trip():
    for spec in (White(1.5), Lorentzian(2.0, 3.0), OneOverF(1.0, 2.0, 3.0), GaussianBand(1.0, 2.0, 0.5),
                 Tabulated([0.0, 1.0], [2.0, 3.0])):
        again = spectrum_from_dict(spec.to_dict())
        w = np.linspace(0, 4, 9)
        np.testing.assert_array_equal(again(w), spec(w))


def test_noise_model_round_trip_and_scaling():
    noise = NoiseModel.dephasing({0: Lorentzian(2.0, 3.0), 2: White(0.5)})
    again = NoiseModel.from_dict(noise.to_dict())
    assert set(again.entries) == {(0, "z", 0, "z"), (2, "z", 2, "z")}
    scaled = noise.scaled(4.0)
    assert scaled.entries[(0, "z", 0, "z")](0.0) == pytest.approx(8.0)


def test_device_scaled_and_chain():
    dev = DeviceModel.chain(4, 2.0)
    assert [e[:2] for e in dev.edges] == [(0, 1), (1, 2), (2, 3)]
    assert dev.scaled(0.5).coupling(1, 2) == pytest.approx(1.0)
    assert DeviceModel.from_dict(dev.to_dict()) == dev
