"""Overlap integrals, filter functions and cumulant-based predictions.

Sign convention for the second cumulant: the noise-averaged expectation value
is evaluated as

    <O(T)> ~ Tr[exp(-i C1 - C2 / 2) rho_C(T) O],

with C2 = sum Gamma^{nu gamma}_{ij} A^{nu gamma}_{ij} and

    Gamma^{nu gamma}_{ij} = sum_{mu delta} int_{-inf}^{inf} dw/2pi
                            G^{mu nu}_i(w) G^{delta gamma}_j(-w) S^{mu delta}_{ij}(w)
                          = int dt1 dt2 <b^nu_i(t1) b^gamma_j(t2)>,

i.e. Gamma is the full double-time integral of the toggled noise correlation
(twice the half-line integral of the two-sided PSD). For a Pauli observable
every kernel A is a non-negative multiple of a Pauli product, so the decay
needs the minus sign; with a plus sign the prediction grows under pure
dephasing, contradicting the exact time-domain result.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson
from scipy.linalg import expm

from .control import ControlMatrixTrace, control_matrix, control_propagator
from .model import AXES, DeviceModel, NoiseModel, PulseSchedule, validate_device
from .paulis import AXIS_INDEX, commutation_sign, kron_all, pauli_string, sigma

GL_NODES = 16
DEFAULT_N_OMEGA = 2048
FIDELITY_QUBIT_CAP = 8


# ---------------------------------------------------------------------------
# First-order overlaps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChiTable:
    """chi^{mu nu}_{ij}(T) for each device edge, stored for i < j as 3x3 arrays."""

    entries: dict
    T: float
    couplings: dict = field(default_factory=dict)

    def value(self, i, j, mu, nu):
        a, b = AXIS_INDEX[mu], AXIS_INDEX[nu]
        if i < j:
            return float(self.entries[(i, j)][a, b])
        return float(self.entries[(j, i)][b, a])

    def as_dict(self):
        """Both orientations: ``{(i, j, mu, nu): value}``."""
        out = {}
        for (i, j), m in self.entries.items():
            for a, mu in enumerate(AXES):
                for b, nu in enumerate(AXES):
                    out[(i, j, mu, nu)] = float(m[a, b])
                    out[(j, i, nu, mu)] = float(m[a, b])
        return out

    def max_abs(self):
        return max((float(np.abs(m).max()) for m in self.entries.values()), default=0.0)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["i", "j", "mu", "nu", "chi"])
        for (i, j), m in sorted(self.entries.items()):
            for a, mu in enumerate(AXES):
                for b, nu in enumerate(AXES):
                    w.writerow([i, j, mu, nu, repr(float(m[a, b]))])
        return buf.getvalue()


def _traces_for(schedule, n_qubits, traces=None):
    if traces is not None:
        return traces
    return {q: control_matrix(schedule.field(q), 2, qubit=q) for q in range(n_qubits)}


def _gl_nodes(bounds, n_nodes):
    x, w = leggauss(n_nodes)
    a, b = bounds[:-1], bounds[1:]
    keep = b - a > 0
    a, b = a[keep], b[keep]
    t = ((a + b)[:, None] + (b - a)[:, None] * x[None]) / 2
    wt = (b - a)[:, None] * w[None] / 2
    return t.ravel(), wt.ravel()


def chi_overlaps(schedule: PulseSchedule, device: DeviceModel, n_nodes=GL_NODES, traces=None) -> ChiTable:
    """chi^{mu nu}_{ij} = J_ij int_0^T R^{z mu}_i R^{z nu}_j dt for every edge.

    Integrated by Gauss-Legendre on the union of both qubits' segment
    boundaries, where the integrand is a trigonometric polynomial.
    """
    validate_device(device)
    traces = _traces_for(schedule, device.n_qubits, traces)
    horizons = {round(tr.T, 18) for tr in traces.values()}
    if any(not math.isclose(tr.T, schedule.horizon, rel_tol=1e-12) for tr in traces.values()):
        raise ValueError(f"control traces have mismatched horizons {sorted(horizons)}")
    entries, couplings = {}, {}
    for i, j, J in device.edges:
        bounds = np.union1d(traces[i].boundaries, traces[j].boundaries)
        t, w = _gl_nodes(bounds, n_nodes)
        ri = traces[i].at(t)[:, 2, :]
        rj = traces[j].at(t)[:, 2, :]
        entries[(i, j)] = J * np.einsum("t,tm,tn->mn", w, ri, rj)
        couplings[(i, j)] = J
    return ChiTable(entries, schedule.horizon, couplings)


class Verdict(NamedTuple):
    passed: bool
    residual: float
    relative: float
    worst: tuple | None
    note: str = ""


def check_suppression(chi: ChiTable, tol=1e-8, floor=1e-12) -> Verdict:
    """PASS iff every |chi^{mu nu}_{ij}| <= tol * max(|J_ij| T, floor)."""
    if not chi.entries:
        return Verdict(True, 0.0, 0.0, None, "no couplings")
    worst, worst_rel, worst_abs = None, -1.0, 0.0
    for (i, j), m in sorted(chi.entries.items()):
        scale = max(abs(chi.couplings.get((i, j), 0.0)) * chi.T, floor)
        a, b = np.unravel_index(np.argmax(np.abs(m)), m.shape)
        rel = abs(m[a, b]) / scale
        if rel > worst_rel:
            worst_rel, worst_abs = rel, abs(float(m[a, b]))
            worst = (i, j, AXES[a], AXES[b])
    passed = worst_rel <= tol
    return Verdict(passed, worst_abs, float(worst_rel), worst)


# ---------------------------------------------------------------------------
# Filter functions and second-order overlaps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterTrace:
    """G^{mu nu}_i(w, T) = int_0^T R^{mu nu}_i(t) e^{i w t} dt on an omega grid."""

    qubit: int
    omega: np.ndarray
    G: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["qubit", "omega", "mu", "nu", "re", "im"])
        for k, om in enumerate(self.omega):
            for a, mu in enumerate(AXES):
                for b, nu in enumerate(AXES):
                    g = self.G[k, a, b]
                    w.writerow([self.qubit, repr(float(om)), mu, nu, repr(float(g.real)), repr(float(g.imag))])
        return buf.getvalue()


def _window_ft(w, a, b):
    """int_a^b e^{i w t} dt, stable at w -> 0."""
    length = b - a
    return np.exp(0.5j * w * (a + b)) * length * np.sinc(w * length / (2 * np.pi))


def filter_G(trace: ControlMatrixTrace, omega) -> FilterTrace:
    """Closed-form Fourier transform of each trigonometric piece of R(t)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not np.all(np.isfinite(omega)):
        raise ValueError("omega grid must be finite")
    if not trace.pieces:
        raise ValueError("trace carries no segment pieces")
    G = np.zeros((omega.size, 3, 3), dtype=complex)
    for p in trace.pieces:
        G += _window_ft(omega, p.start, p.end)[:, None, None] * p.p0
        if p.rate == 0:
            continue
        lo = np.exp(1j * p.rate * p.end) * _window_ft(omega - p.rate, p.start, p.end)
        hi = np.exp(-1j * p.rate * p.end) * _window_ft(omega + p.rate, p.start, p.end)
        G += ((lo + hi) / 2)[:, None, None] * p.p1
        G += ((lo - hi) / 2j)[:, None, None] * p.p2
    return FilterTrace(trace.qubit, omega, G)


@dataclass(frozen=True)
class GammaTable:
    """Gamma^{nu gamma}_{ij}(T) keyed by (i, j) -> 3x3, plus quadrature metadata."""

    entries: dict
    omega_max: float
    n_omega: int
    truncated: bool = False

    def value(self, i, j, nu, gamma):
        m = self.entries.get((i, j))
        if m is None:
            return 0.0
        return float(m[AXIS_INDEX[nu], AXIS_INDEX[gamma]])

    def as_dict(self):
        out = {}
        for (i, j), m in self.entries.items():
            for a, nu in enumerate(AXES):
                for b, ga in enumerate(AXES):
                    out[(i, j, nu, ga)] = float(m[a, b])
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["i", "j", "nu", "gamma", "Gamma"])
        for (i, j), m in sorted(self.entries.items()):
            for a, nu in enumerate(AXES):
                for b, ga in enumerate(AXES):
                    w.writerow([i, j, nu, ga, repr(float(m[a, b]))])
        return buf.getvalue()


def default_omega_grid(traces, noise: NoiseModel, omega_max=None, n_omega=None):
    """Frequency cutoff and interval count for the Gamma quadrature.

    Cutoff: the largest of 20x the highest spectral feature, 400/T and
    8 pi / (shortest control segment). The interval count is at least
    DEFAULT_N_OMEGA and keeps the step below 0.25/T so the window lobes of
    width 2 pi/T are resolved.
    """
    T = max(tr.T for tr in traces.values())
    if omega_max is None:
        cands = [400.0 / T]
        if noise.feature_frequency:
            cands.append(20.0 * noise.feature_frequency)
        seg = min(p.end - p.start for tr in traces.values() for p in tr.pieces)
        cands.append(8 * math.pi / seg)
        omega_max = max(cands)
    if n_omega is None:
        n_omega = max(DEFAULT_N_OMEGA, int(math.ceil(omega_max * T / 0.25)))
    n_omega += n_omega % 2
    return float(omega_max), int(n_omega)


def gamma_overlaps(traces, noise: NoiseModel, omega_max=None, n_omega=None) -> GammaTable:
    """Second-order overlaps by composite Simpson quadrature on [0, omega_max].

    ``traces`` maps qubit -> ControlMatrixTrace. The result carries
    ``truncated=True`` (and warns) when a spectrum extends past the cutoff.
    """
    omega_max, n_omega = default_omega_grid(traces, noise, omega_max, n_omega)
    w = np.linspace(0.0, omega_max, n_omega + 1)
    truncated = noise.support_max > omega_max
    if truncated and noise.entries:
        warnings.warn(f"noise spectra extend beyond omega_max={omega_max:.3g} rad/s; "
                      "Gamma is truncated", RuntimeWarning, stacklevel=2)
    filters = {}

    def G(q):
        if q not in filters:
            filters[q] = filter_G(traces[q], w).G
        return filters[q]

    entries = {}
    for (i, mu, j, de), spec in sorted(noise.entries.items()):
        s = spec(w)
        if not np.any(s):
            continue
        gi = G(i)[:, AXIS_INDEX[mu], :]
        gj = G(j)[:, AXIS_INDEX[de], :]
        integrand = np.real(gi[:, :, None] * gj[:, None, :].conj()) * s[:, None, None]
        val = 2 * simpson(integrand, x=w, axis=0) / (2 * np.pi)
        entries[(i, j)] = entries.get((i, j), 0.0) + val
    return GammaTable(entries, omega_max, n_omega, bool(truncated and noise.entries))


# ---------------------------------------------------------------------------
# Cumulant operators
# ---------------------------------------------------------------------------

def _inverse(O):
    O = np.asarray(O, dtype=complex)
    if np.linalg.cond(O) > 1e12:
        raise ValueError("observable is not invertible; expand it in Pauli strings first")
    return np.linalg.inv(O)


def _n_from(O):
    return int(round(math.log2(np.asarray(O).shape[0])))


def first_cumulant(chi: ChiTable, O) -> np.ndarray:
    """C1 = sum_{i<j} sum_{mu nu} chi^{mu nu}_{ij} (s_i s_j - O^-1 s_i s_j O)."""
    O = np.asarray(O, dtype=complex)
    n = _n_from(O)
    Oinv = _inverse(O)
    out = np.zeros_like(O)
    for (i, j), m in chi.entries.items():
        for a, mu in enumerate(AXES):
            for b, nu in enumerate(AXES):
                if m[a, b] == 0:
                    continue
                ss = sigma(mu, i, n) @ sigma(nu, j, n)
                out += m[a, b] * (ss - Oinv @ ss @ O)
    return out


def cumulant_kernel(O, i, nu, j, gamma):
    """A^{nu gamma}_{ij} = s s + O^-1 s s O - O^-1 s O s - s O^-1 s O."""
    O = np.asarray(O, dtype=complex)
    n = _n_from(O)
    Oinv = _inverse(O)
    si, sj = sigma(nu, i, n), sigma(gamma, j, n)
    return si @ sj + Oinv @ si @ sj @ O - Oinv @ si @ O @ sj - si @ Oinv @ sj @ O


def second_cumulant(gamma: GammaTable, O) -> np.ndarray:
    """C2 = sum_{i,j} sum_{nu gamma} Gamma^{nu gamma}_{ij} A^{nu gamma}_{ij} (i = j included)."""
    O = np.asarray(O, dtype=complex)
    out = np.zeros_like(O)
    for (i, j), m in gamma.entries.items():
        for a, nu in enumerate(AXES):
            for b, ga in enumerate(AXES):
                if m[a, b] != 0:
                    out += m[a, b] * cumulant_kernel(O, i, nu, j, ga)
    return out


def _pauli_cumulants(chi, gamma, label):
    """C1, C2 for a Pauli-string observable via commutation signs.

    For a Pauli string P, P^-1 s P = +-s, so every term reduces to a signed
    Pauli product: C1 terms carry (1 - s_i s_j), C2 terms (1 - s_i)(1 - s_j).
    """
    n = len(label)
    d = 2 ** n
    c1 = np.zeros((d, d), dtype=complex)
    c2 = np.zeros((d, d), dtype=complex)
    for (i, j), m in chi.entries.items():
        for a, mu in enumerate(AXES):
            si = commutation_sign(label, mu, i)
            for b, nu in enumerate(AXES):
                f = 1 - si * commutation_sign(label, nu, j)
                if f and m[a, b]:
                    c1 += f * m[a, b] * (sigma(mu, i, n) @ sigma(nu, j, n))
    if gamma is not None:
        for (i, j), m in gamma.entries.items():
            for a, nu in enumerate(AXES):
                fi = 1 - commutation_sign(label, nu, i)
                if not fi:
                    continue
                for b, ga in enumerate(AXES):
                    f = fi * (1 - commutation_sign(label, ga, j))
                    if f and m[a, b]:
                        c2 += f * m[a, b] * (sigma(nu, i, n) @ sigma(ga, j, n))
    return c1, c2


def exponent(c1, c2):
    """Generator of the cumulant resummation: -i C1 - C2/2."""
    return -1j * c1 - 0.5 * c2


@dataclass(frozen=True)
class CumulantReport:
    chi: ChiTable
    gamma: GammaTable
    C1: np.ndarray
    C2: np.ndarray
    kernels: dict
    verdict: Verdict


class Prediction(NamedTuple):
    value: float
    imag_residual: float


class CumulantModel:
    """Caches traces, chi and Gamma for one (schedule, device, noise) triple."""

    def __init__(self, schedule: PulseSchedule, device: DeviceModel, noise: NoiseModel | None = None,
                 omega_max=None, n_omega=None):
        validate_device(device)
        self.schedule = schedule
        self.device = device
        self.noise = noise or NoiseModel()
        self.n = device.n_qubits
        self.traces = {q: control_matrix(schedule.field(q), 2, qubit=q) for q in range(self.n)}
        self.chi = chi_overlaps(schedule, device, traces=self.traces)
        if self.noise.entries:
            self.gamma = gamma_overlaps(self.traces, self.noise, omega_max, n_omega)
        else:
            self.gamma = GammaTable({}, 0.0, 0)
        self.U = kron_all([control_propagator(schedule.field(q), 0.0, schedule.horizon)
                           for q in range(self.n)])

    def rho_c(self, rho0):
        return self.U @ rho0 @ self.U.conj().T

    def report(self, O, tol=1e-8) -> CumulantReport:
        c1 = first_cumulant(self.chi, O)
        c2 = second_cumulant(self.gamma, O)
        kernels = {}
        for (i, j), m in self.gamma.entries.items():
            for a, nu in enumerate(AXES):
                for b, ga in enumerate(AXES):
                    if m[a, b]:
                        kernels[(i, j, nu, ga)] = cumulant_kernel(O, i, nu, j, ga)
        return CumulantReport(self.chi, self.gamma, c1, c2, kernels, check_suppression(self.chi, tol))

    def expectation(self, rho0, O) -> Prediction:
        O = np.asarray(O, dtype=complex)
        c1 = first_cumulant(self.chi, O)
        c2 = second_cumulant(self.gamma, O)
        val = np.trace(expm(exponent(c1, c2)) @ self.rho_c(rho0) @ O)
        return _real(val)

    def fidelity(self, rho0, cap=FIDELITY_QUBIT_CAP) -> Prediction:
        if self.n > cap:
            raise ValueError(f"predict_fidelity is capped at {cap} qubits (got {self.n})")
        rho_c = self.rho_c(rho0)
        total = 0.0
        for label, c in _pauli_coefficients(rho0).items():
            c1, c2 = _pauli_cumulants(self.chi, self.gamma, label)
            P = pauli_string(label)
            gen = exponent(c1, c2)
            if np.any(gen):
                total += c * np.trace(expm(gen) @ rho_c @ P)
            else:
                total += c * np.trace(rho_c @ P)
        return _real(total)


def _real(val):
    val = complex(val)
    if abs(val.imag) > 1e-6:
        warnings.warn(f"cumulant prediction has imaginary part {val.imag:.3g}; "
                      "perturbative regime likely violated", RuntimeWarning, stacklevel=3)
    return Prediction(val.real, abs(val.imag))


def _pauli_coefficients(rho, tol=1e-14):
    """c_P = Tr[rho P] / 2^n using per-qubit contractions."""
    n = _n_from(rho)
    d = 2 ** n
    from .paulis import pauli_labels, SINGLE
    t = np.asarray(rho, dtype=complex).reshape((2,) * (2 * n))
    out = {}
    for label in pauli_labels(n):
        m = t
        for q, c in enumerate(label):
            if c == "I":
                continue
            m = np.moveaxis(np.tensordot(SINGLE[c], m, axes=([1], [q])), 0, q)
        val = np.trace(m.reshape(d, d)) / d
        if abs(val) > tol:
            out[label] = val.real if abs(val.imag) < tol else val
    return out


def _as_density(state):
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def predict_expectation(rho0, schedule, device, noise, O, omega_max=None, n_omega=None) -> Prediction:
    """Cumulant prediction of the noise-averaged <O(T)>; ``rho0`` may be a state vector."""
    model = CumulantModel(schedule, device, noise, omega_max, n_omega)
    return model.expectation(_as_density(rho0), O)


def predict_fidelity(state, schedule, device, noise, omega_max=None, n_omega=None,
                     cap=FIDELITY_QUBIT_CAP) -> Prediction:
    """Cumulant prediction of Tr[rho(T) rho(0)] for a pure initial state.

    The state is expanded in Pauli strings, rho0 = sum_P c_P P, and each term
    is propagated with its own observable-dependent cumulants.
    """
    if device.n_qubits > cap:
        raise ValueError(f"predict_fidelity is capped at {cap} qubits (got {device.n_qubits})")
    rho0 = _as_density(state)
    if abs(np.trace(rho0 @ rho0).real - 1) > 1e-8:
        raise ValueError("predict_fidelity needs a pure initial state")
    model = CumulantModel(schedule, device, noise, omega_max, n_omega)
    return model.fidelity(rho0, cap)
