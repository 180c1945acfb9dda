import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import sici

from xtalk.control import (FTTPS_COS, XY4, XY4_PRIME, build_dd_schedule, build_fttps, control_matrix,
                           pattern_crdd, uniform_schedule)
from xtalk.cumulant import (ChiTable, CumulantModel, GammaTable, check_suppression, chi_overlaps,
                            filter_G, first_cumulant, gamma_overlaps, predict_expectation,
                            predict_fidelity, second_cumulant)
from xtalk.model import ControlField, DeviceModel, Lorentzian, NoiseModel, PulseSchedule, Segment, White
from xtalk.paulis import bell_state, kron_all, pauli_string, product_state, xy_state
from xtalk.sim import SimConfig, run_monte_carlo

pytestmark = pytest.mark.filterwarnings("ignore:noise spectra extend beyond")

NS = 1e-9
I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
PLUS = np.array([1, 1]) / math.sqrt(2)


def _free(n, T):
    return uniform_schedule(n, ControlField((Segment(T),)))


def _edge(J):
    return DeviceModel(2, ((0, 1, J),))


def test_free_chi_is_JT():
    J, T = 2.0, 3.0
    chi = chi_overlaps(_free(2, T), _edge(J))
    m = chi.entries[(0, 1)]
    assert m[2, 2] == pytest.approx(J * T, rel=1e-12)
    m = m.copy()
    m[2, 2] = 0
    assert np.abs(m).max() < 1e-14


def test_simultaneous_instantaneous_xy4_chi_is_JT():
    J = 1.5
    f = build_dd_schedule(XY4, 35 * NS, 35 * NS, 2, "instantaneous")
    chi = chi_overlaps(uniform_schedule(2, f), _edge(J))
    assert chi.value(0, 1, "z", "z") == pytest.approx(J * f.duration, rel=1e-12)


def test_mismatched_horizons_rejected():
    with pytest.raises(ValueError, match="horizon"):
        sched = PulseSchedule({0: ControlField((Segment(1.0),)), 1: ControlField((Segment(2.0),))}, 1.0)
        chi_overlaps(sched, _edge(1.0))


@pytest.mark.parametrize("tau", [10 * NS, 35 * NS, 100 * NS])
@pytest.mark.parametrize("M", [1, 2, 5])
def test_crxy4_passes_and_simultaneous_fails(tau, M):
    dev = _edge(2 * math.pi * 75e3)
    cr = chi_overlaps(pattern_crdd(dev, tau, tau, M), dev)
    JT = dev.edges[0][2] * cr.T
    assert cr.max_abs() <= 1e-8 * JT
    assert check_suppression(cr).passed
    sim = chi_overlaps(uniform_schedule(2, build_dd_schedule(XY4, tau, tau, M)), dev)
    verdict = check_suppression(sim)
    assert not verdict.passed
    assert verdict.relative > 0.5


def test_zero_coupling_passes():
    dev = DeviceModel(2, ())
    v = check_suppression(chi_overlaps(_free(2, 1.0), dev))
    assert v.passed and v.note


def test_chi_resolution_doubling_is_stable():
    dev = _edge(3.0)
    sched = uniform_schedule(2, build_dd_schedule(XY4, 0.3, 0.2, 2))
    a = chi_overlaps(sched, dev, n_nodes=16).entries[(0, 1)]
    b = chi_overlaps(sched, dev, n_nodes=32).entries[(0, 1)]
    assert np.abs(a - b).max() < 1e-8 * 3.0 * sched.horizon


_seg = st.tuples(st.floats(0.05, 1.0), st.floats(-4.0, 4.0), st.floats(0, 2 * math.pi))


def _field_of(rows, T):
    total = sum(r[0] for r in rows)
    return ControlField(tuple(Segment(d * T / total, a, p) for d, a, p in rows))


@settings(max_examples=100)
@given(st.lists(_seg, min_size=1, max_size=4), st.lists(_seg, min_size=1, max_size=4))
def test_chi_symmetry_under_relabelling(rows_a, rows_b):
    T = 2.0
    fa, fb = _field_of(rows_a, T), _field_of(rows_b, T)
    dev = _edge(1.3)
    ab = chi_overlaps(PulseSchedule({0: fa, 1: fb}, T), dev).entries[(0, 1)]
    ba = chi_overlaps(PulseSchedule({0: fb, 1: fa}, T), dev).entries[(0, 1)]
    np.testing.assert_allclose(ab, ba.T, atol=1e-12)


def test_filter_free_closed_form():
    T = 2.0
    tr = control_matrix(ControlField((Segment(T),)))
    w = np.array([0.0, 0.3, 1.7, 25.0])
    G = filter_G(tr, w).G[:, 2, 2]
    assert G[0] == pytest.approx(T)
    np.testing.assert_allclose(G[1:], (np.exp(1j * w[1:] * T) - 1) / (1j * w[1:]), atol=1e-12)


def test_filter_echo_cancels_dc():
    f = ControlField((Segment(1.0), Segment(0.0, 0.0, 0.0, angle=math.pi), Segment(1.0)))
    G = filter_G(control_matrix(f), [0.0]).G
    assert abs(G[0, 2, 2]) < 1e-14


def test_gamma_zero_noise():
    traces = {0: control_matrix(ControlField((Segment(1.0),)))}
    assert gamma_overlaps(traces, NoiseModel(), omega_max=10.0, n_omega=64).entries == {}


def test_gamma_white_matches_time_domain():
    S0, T, wmax = 2.0, 1.0, 400.0
    traces = {0: control_matrix(ControlField((Segment(T),)))}
    g = gamma_overlaps(traces, NoiseModel.dephasing({0: White(S0)}), omega_max=wmax, n_omega=2 ** 16)
    # int_0^T int_0^T C(t1 - t2) with C(tau) = S0 sin(wmax tau) / (pi tau)
    si, _ = sici(wmax * T)
    oracle = 2 * S0 / math.pi * (T * si - (1 - math.cos(wmax * T)) / wmax)
    assert g.value(0, 0, "z", "z") == pytest.approx(oracle, rel=0.01)


def test_gamma_lorentzian_matches_time_domain():
    S0, wc, T = 1.0, 5.0, 2.0
    traces = {0: control_matrix(ControlField((Segment(T),)))}
    g = gamma_overlaps(traces, NoiseModel.dephasing({0: Lorentzian(S0, wc)}), omega_max=5e4, n_omega=2 ** 18)
    oracle = S0 * (T - (1 - math.exp(-wc * T)) / wc)
    assert g.value(0, 0, "z", "z") == pytest.approx(oracle, rel=0.01)


def test_gamma_uncorrelated_qubits_have_no_cross_terms():
    traces = {q: control_matrix(ControlField((Segment(1.0),)), qubit=q) for q in range(2)}
    g = gamma_overlaps(traces, NoiseModel.dephasing({0: White(1.0), 1: White(2.0)}), omega_max=50.0, n_omega=512)
    assert set(g.entries) == {(0, 0), (1, 1)}
    assert g.value(0, 1, "z", "z") == 0.0


def _chi_only_zz(c):
    m = np.zeros((3, 3))
    m[2, 2] = c
    return ChiTable({(0, 1): m}, 1.0, {(0, 1): c})


def test_first_cumulant_examples():
    zero = ChiTable({(0, 1): np.zeros((3, 3))}, 1.0)
    assert not np.any(first_cumulant(zero, kron_all([X, I2])))
    c = 0.37
    assert np.allclose(first_cumulant(_chi_only_zz(c), kron_all([Z, Z])), 0)
    ZZ = kron_all([Z, Z])
    X0 = kron_all([X, I2])
    oracle = c * (ZZ - X0 @ ZZ @ X0)
    got = first_cumulant(_chi_only_zz(c), X0)
    np.testing.assert_allclose(got, oracle, atol=1e-14)
    np.testing.assert_allclose(got, 2 * c * ZZ, atol=1e-14)


def test_first_cumulant_rejects_singular_observable():
    with pytest.raises(ValueError):
        first_cumulant(_chi_only_zz(1.0), np.diag([1.0, 0, 0, 0]))


def test_second_cumulant_examples():
    g = 0.21
    m = np.zeros((3, 3))
    m[2, 2] = g
    table = GammaTable({(0, 0): m}, 1.0, 2)
    assert not np.any(second_cumulant(GammaTable({}, 0.0, 0), X))
    assert np.allclose(second_cumulant(table, Z), 0)
    np.testing.assert_allclose(second_cumulant(table, X), 4 * g * I2, atol=1e-14)


def test_zero_noise_decoupled_plus_state():
    f = build_dd_schedule(XY4, 35 * NS, 35 * NS, 3)
    dev = DeviceModel(1, ())
    p = predict_expectation(PLUS, uniform_schedule(1, f), dev, None, X)
    assert p.value == pytest.approx(1.0, abs=1e-12)
    assert predict_fidelity(PLUS, uniform_schedule(1, f), dev, None).value == pytest.approx(1.0, abs=1e-12)


def _exact_pair(J, T):
    ZZ = kron_all([Z, Z])
    psi = expm(-1j * J * T * ZZ) @ np.kron(PLUS, PLUS)
    return psi


@pytest.mark.parametrize("JT", [0.01, 0.05, 0.1])
def test_pair_free_evolution_matches_exact(JT):
    T = 1.0
    J = JT / T
    psi0 = np.kron(PLUS, PLUS)
    psi = _exact_pair(J, T)
    X0 = kron_all([X, I2])
    exact_x = np.vdot(psi, X0 @ psi).real
    assert exact_x == pytest.approx(math.cos(2 * JT), abs=1e-12)
    pred = predict_expectation(psi0, _free(2, T), _edge(J), None, X0)
    assert pred.value == pytest.approx(exact_x, abs=1e-6)
    fid = predict_fidelity(psi0, _free(2, T), _edge(J), None).value
    assert fid == pytest.approx(abs(np.vdot(psi0, psi)) ** 2, abs=1e-6)
    assert fid == pytest.approx(math.cos(JT) ** 2, abs=1e-6)


@pytest.mark.parametrize("J", [0.3, 5.0, 40.0])
def test_bell_pair_is_crosstalk_invariant(J):
    f = predict_fidelity(bell_state("phi+"), _free(2, 1.0), _edge(J), None).value
    assert f == pytest.approx(1.0, abs=1e-12)


def test_weak_dephasing_matches_monte_carlo():
    T = 2e-6
    dt = T / 400
    S0 = 2.0e3
    sched = _free(1, T)
    dev = DeviceModel(1, ())
    noise = NoiseModel.dephasing({0: White(S0)})
    pred = predict_expectation(PLUS, sched, dev, noise, X, omega_max=math.pi / dt, n_omega=2 ** 14).value
    assert 0.95 <= pred < 1.0
    res = run_monte_carlo(SimConfig(dev, sched, PLUS, noise, dt=dt, n_trajectories=400, n_shots=1,
                                    target="X", seed=4, n_taps=1))
    mc = res.exact.mean()
    assert pred == pytest.approx(mc, rel=0.01)
    # the prediction decays rather than grows: the second-order term enters with a minus sign
    assert pred < 1.0


def test_fidelity_bounded_on_regression_configs():
    dev = DeviceModel.chain(3, 2 * math.pi * 1e5)
    noise = NoiseModel.dephasing({q: Lorentzian(1e5, 1e7) for q in range(3)})
    scheds = [_free(3, 2e-6), uniform_schedule(3, build_dd_schedule(XY4, 35 * NS, 35 * NS, 4)),
              pattern_crdd(dev, 35 * NS, 35 * NS, 4),
              uniform_schedule(3, build_fttps(FTTPS_COS, 16, 3, 35 * NS))]
    states = [product_state([xy_state(a) for a in (0.1, 1.3, 2.2)]), product_state([PLUS] * 3)]
    for s in scheds:
        for psi in states:
            f = predict_fidelity(psi, s, dev, noise).value
            assert -1e-12 <= f <= 1 + 1e-6


@given(st.lists(st.sampled_from("IZ"), min_size=3, max_size=3), st.floats(0.1, 50.0))
def test_cumulants_vanish_for_commuting_observable(label, J):
    dev = DeviceModel.chain(3, J)
    noise = NoiseModel.dephasing({0: White(1.0), 2: Lorentzian(2.0, 3.0)})
    model = CumulantModel(_free(3, 1.0), dev, noise, omega_max=100.0, n_omega=256)
    rep = model.report(pauli_string("".join(label)))
    assert not np.any(np.abs(rep.C1) > 1e-14)
    assert not np.any(np.abs(rep.C2) > 1e-14)
