import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from xtalk import _backend
from xtalk.control import XY4, build_dd_schedule, pattern_crdd, uniform_schedule
from xtalk.cumulant import predict_fidelity
from xtalk.model import ControlField, DeviceModel, Lorentzian, NoiseModel, PulseSchedule, Segment
from xtalk.paulis import bell_state, kron_all, product_state, xy_state
from xtalk.sim import (SimConfig, build_timeline, draw_trajectories, evolve, noise_filters,
                       pauli_expectation, run_monte_carlo, survival_probability)

NS = 1e-9
pytestmark = pytest.mark.filterwarnings("ignore:noise spectra extend beyond")
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
Z = np.diag([1.0, -1.0])


def _free(n, T):
    return uniform_schedule(n, ControlField((Segment(T),)))


def test_nothing_happens_without_control_noise_or_coupling():
    psi = product_state([xy_state(0.4), xy_state(1.9)])
    out = evolve(psi, _free(2, 1e-6), DeviceModel(2, ()), dt=1e-7)
    np.testing.assert_allclose(out, psi, atol=1e-14)


@pytest.mark.parametrize("JT", [0.1, 0.7, 2.0])
def test_pair_survival_is_cos_squared(JT):
    T = 1e-6
    dev = DeviceModel(2, ((0, 1, JT / T),))
    psi0 = product_state([PLUS, PLUS])
    out = evolve(psi0, _free(2, T), dev, dt=T / 10)
    assert abs(np.vdot(psi0, out)) ** 2 == pytest.approx(math.cos(JT) ** 2, abs=1e-12)


def test_larmor_precession():
    T, b = 1e-6, 2.3e6
    n = 50
    out = evolve(PLUS, _free(1, T), DeviceModel(1, ()), {(0, "z"): np.full(n, b)}, dt=T / n)
    assert pauli_expectation(out, "X") == pytest.approx(math.cos(2 * b * T), abs=1e-12)


def test_density_matrix_input():
    T = 1e-6
    dev = DeviceModel(2, ((0, 1, 0.4 / T),))
    psi0 = product_state([PLUS, PLUS])
    rho = 0.5 * np.outer(psi0, psi0.conj()) + 0.5 * np.eye(4) / 4
    out = evolve(rho, _free(2, T), dev, dt=T / 4)
    U = expm(-1j * 0.4 * np.kron(Z, Z))
    np.testing.assert_allclose(out, U @ rho @ U.conj().T, atol=1e-12)


def test_noiseless_dd_fidelity_is_one():
    f = build_dd_schedule(XY4, 35 * NS, 35 * NS, 4)
    dev = DeviceModel(2, ())
    psi = product_state([xy_state(0.3), xy_state(2.0)])
    res = run_monte_carlo(SimConfig(dev, uniform_schedule(2, f), psi, n_trajectories=2, n_shots=4000, seed=1))
    assert res.exact == pytest.approx(1.0, abs=1e-10)
    assert res.mean[0] == 1.0


@pytest.mark.parametrize("J", [1e5, 3e6])
def test_bell_pair_invariant(J):
    dev = DeviceModel(2, ((0, 1, J),))
    psi = bell_state("phi+")
    out = evolve(psi, _free(2, 2e-6), dev, dt=1e-7)
    assert abs(np.vdot(psi, out)) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_adjacent_bell_pairs_feel_the_common_edge():
    J, T = 1e6, 4e-6
    dev = DeviceModel.chain(4, J)
    psi0 = kron_all([bell_state("phi+").reshape(-1, 1)] * 2).ravel()
    times = np.linspace(0, T, 41)
    _, snaps = evolve(psi0, _free(4, T), dev, dt=T / 40, record_times=times)
    fid = np.abs(snaps @ psi0.conj()) ** 2
    # exact 16-dimensional oracle: only the middle edge acts nontrivially
    diag = np.diag(kron_all([np.eye(2), Z, Z, np.eye(2)]))
    oracle = [abs(np.vdot(psi0, np.exp(-1j * J * t * diag) * psi0)) ** 2 for t in times]
    np.testing.assert_allclose(fid, oracle, atol=1e-10)
    assert fid.min() < 0.5 and fid.max() == pytest.approx(1.0)


@pytest.mark.parametrize("counts, p", [({"00": 8000}, 1.0), ({"00": 4000, "11": 4000}, 0.5),
                                       ({"00": 7992, "01": 8}, 0.999)])
def test_survival_probability(counts, p):
    assert survival_probability(counts, "00") == pytest.approx(p, abs=1e-15)


def test_survival_probability_empty():
    with pytest.raises(ValueError):
        survival_probability({}, "0")


def test_halving_dt_leaves_noiseless_fidelity_unchanged():
    dev = DeviceModel(2, ((0, 1, 2 * math.pi * 2e5),))
    sched = pattern_crdd(dev, 35 * NS, 35 * NS, 3)
    psi = product_state([xy_state(0.7), xy_state(2.9)])
    a = evolve(psi, sched, dev, dt=35 * NS / 4)
    b = evolve(psi, sched, dev, dt=35 * NS / 8)
    assert abs(abs(np.vdot(psi, a)) ** 2 - abs(np.vdot(psi, b)) ** 2) < 1e-8


def test_norm_drift_over_many_slices():
    dev = DeviceModel.chain(3, 2 * math.pi * 1e5)
    sched = uniform_schedule(3, build_dd_schedule(XY4, 35 * NS, 35 * NS, 125))
    dt = 3.5 * NS
    assert round(sched.horizon / dt) == 10 ** 4
    noise = {(q, "z"): np.random.default_rng(q).normal(0, 1e6, 10 ** 4) for q in range(3)}
    psi = product_state([PLUS] * 3)
    out = evolve(psi, sched, dev, noise, dt=dt)
    assert abs(np.linalg.norm(out) - 1) < 1e-9


def test_qubit_cap():
    with pytest.raises(ValueError, match="capped"):
        evolve(np.ones(2 ** 9) / 2 ** 4.5, _free(9, 1.0), DeviceModel(9, ()), dt=0.5)


def test_bad_record_time_rejected():
    with pytest.raises(ValueError, match="slice boundary"):
        build_timeline(_free(1, 1.0), 1, 0.25, record_times=[0.3])


def test_config_validation():
    dev = DeviceModel(1, ())
    with pytest.raises(ValueError):
        SimConfig(dev, _free(1, 1.0), PLUS, n_trajectories=3, antithetic=True)
    with pytest.raises(ValueError):
        SimConfig(dev, _free(1, 1.0), PLUS, target="XX")
    with pytest.raises(ValueError):
        SimConfig(dev, _free(1, 1.0), PLUS, readout_error=0.5)


def _noisy_config(**kw):
    dev = DeviceModel(1, ())
    sched = uniform_schedule(1, build_dd_schedule(XY4, 35 * NS, 35 * NS, 5))
    noise = NoiseModel.dephasing({0: Lorentzian(4e4, 1e7)})
    base = dict(noise=noise, n_trajectories=64, n_shots=20000, seed=21)
    base.update(kw)
    return SimConfig(dev, sched, PLUS, **base)


def test_estimates_in_range_and_deterministic():
    a = run_monte_carlo(_noisy_config())
    b = run_monte_carlo(_noisy_config())
    assert np.all((a.estimates >= 0) & (a.estimates <= 1))
    assert a.to_json() == b.to_json()


def test_monte_carlo_agrees_with_cumulant_prediction():
    cfg = _noisy_config(n_trajectories=200)
    res = run_monte_carlo(cfg)
    pred = predict_fidelity(PLUS, cfg.schedule, cfg.device, cfg.noise).value
    assert pred >= 0.95
    se = res.exact.std(ddof=1) / math.sqrt(res.exact.shape[0])
    assert abs(res.exact.mean() - pred) <= 3 * se + 2e-4


def test_trajectory_order_does_not_matter():
    cfg = _noisy_config(n_trajectories=12)
    res = run_monte_carlo(cfg)
    dt = 35 * NS / 4
    filters = noise_filters(cfg.noise, dt, cfg.n_taps)
    tl = build_timeline(cfg.schedule, 1, dt, [cfg.schedule.horizon])
    vals = {}
    for k in reversed(range(12)):
        traj = draw_trajectories(filters, tl.n_slices, cfg.seed, k)
        _, snaps = evolve(PLUS, cfg.schedule, cfg.device, traj, timeline=tl)
        vals[k] = abs(np.vdot(PLUS, snaps[0])) ** 2
    again = np.array([vals[k] for k in range(12)])
    np.testing.assert_allclose(again, res.exact[:, 0], atol=1e-15)
    assert abs(again.mean() - res.exact.mean()) < 1e-12


def test_antithetic_pairs_are_mirrored():
    res = run_monte_carlo(_noisy_config(n_trajectories=4, antithetic=True, target="X"))
    assert res.exact.shape == (4, 1)
    assert np.all(np.abs(res.exact) <= 1)


def test_readout_error_lowers_survival():
    clean = run_monte_carlo(_noisy_config(n_trajectories=4))
    noisy = run_monte_carlo(_noisy_config(n_trajectories=4, readout_error=0.05))
    assert noisy.mean[0] < clean.mean[0]


needs_compiled = pytest.mark.skipif(not _backend.compiled_available(), reason="compiled kernel not built")


@needs_compiled
@settings(max_examples=25)
@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_backends_agree(n, seed, instantaneous):
    rng = np.random.default_rng(seed)
    dev = DeviceModel.chain(n, float(rng.uniform(0, 3e6))) if n > 1 else DeviceModel(1, ())
    shape = "instantaneous" if instantaneous else "square"
    sched = uniform_schedule(n, build_dd_schedule(XY4, 20 * NS, 20 * NS, 2, shape))
    dt = 5 * NS
    slices = int(round(sched.horizon / dt))
    traj = {(q, ax): rng.normal(0, 2e6, slices) for q in range(n) for ax in "xyz"}
    psi = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    psi /= np.linalg.norm(psi)
    rec = [0.0, sched.horizon / 2, sched.horizon]
    a, sa = evolve(psi, sched, dev, traj, dt=dt, record_times=rec, backend="python")
    b, sb = evolve(psi, sched, dev, traj, dt=dt, record_times=rec, backend="compiled")
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(sa, sb, atol=1e-12)


def test_pure_python_fallback_selected_by_environment():
    env = dict(os.environ, XTALK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import xtalk; print(xtalk.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
