"""Exact Monte-Carlo reference dynamics for small registers.

Each trajectory is evolved slice by slice under

    H(t) = sum_q [Omega_q/2 (cos phi_q X_q + sin phi_q Y_q) + beta_q(t) . sigma_q]
           + sum_{i<j} J_ij Z_i Z_j,

with piecewise-constant control, noise held constant over each slice of
width dt, and instantaneous pulses applied as kicks at their time stamps.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .control import su2
from .model import AXES, DeviceModel, NoiseModel, PulseSchedule, validate_device
from .noisegen import design_ma, sample_trajectory
from .paulis import SINGLE

QUBIT_CAP = 8
DEFAULT_TAPS = 257
_SHOT_STREAM = 0x5A5A


def zz_diagonal(device: DeviceModel):
    """Diagonal of sum J_ij Z_i Z_j in the computational basis (qubit 0 = MSB)."""
    n = device.n_qubits
    idx = np.arange(2 ** n)
    z = 1 - 2 * ((idx[:, None] >> (n - 1 - np.arange(n))[None]) & 1)
    out = np.zeros(2 ** n)
    for i, j, J in device.edges:
        out += J * z[:, i] * z[:, j]
    return out


def _is_multiple(t, dt):
    r = t / dt
    return abs(r - round(r)) <= 1e-9 * max(1.0, abs(r))


def choose_dt(schedule: PulseSchedule, noise: NoiseModel | None = None, n_qubits=None):
    """Largest slice width that divides every boundary, is at most a quarter of the
    shortest segment and resolves the noise.

    The noise bound reads dt <= 1 / (20 f) with f = omega_feature / 2 pi the
    highest spectral feature in Hz.
    """
    qubits = range(n_qubits) if n_qubits is not None else schedule.qubits
    bounds, durations = [], []
    for q in qubits:
        f = schedule.field(q)
        bounds.extend(f.boundaries())
        durations.extend(s.duration for s in f.segments if not s.instantaneous)
    seg = min(durations)
    target = seg / 4
    if noise is not None and noise.feature_frequency:
        target = min(target, 2 * math.pi / (20 * noise.feature_frequency))
    for k in range(max(1, math.ceil(seg / target - 1e-9)), 4096):
        dt = seg / k
        if all(_is_multiple(b, dt) for b in bounds):
            return dt
    raise ValueError("no slice width divides every segment boundary; pass dt explicitly")


@dataclass
class Timeline:
    """Per-slice control fields plus the op stream consumed by the kernel."""

    n_slices: int
    hx: np.ndarray
    hy: np.ndarray
    ops: np.ndarray
    kick_qubits: np.ndarray
    kick_unitaries: np.ndarray
    record_times: np.ndarray


def build_timeline(schedule: PulseSchedule, n_qubits: int, dt: float, record_times=None) -> Timeline:
    T = schedule.horizon
    if not _is_multiple(T, dt):
        raise ValueError(f"dt={dt} does not divide the horizon {T}")
    n_slices = int(round(T / dt))
    mids = (np.arange(n_slices) + 0.5) * dt
    hx = np.zeros((n_slices, n_qubits))
    hy = np.zeros((n_slices, n_qubits))
    kicks = []  # (slice boundary index, qubit, order, unitary)
    for q in range(n_qubits):
        f = schedule.field(q)
        bounds = f.boundaries()
        for k, seg in enumerate(f.segments):
            a = bounds[k]
            if not _is_multiple(a, dt):
                raise ValueError(f"dt={dt} does not divide segment boundary {a} on qubit {q}")
            if seg.instantaneous:
                kicks.append((int(round(a / dt)), q, k, su2(seg.angle, seg.phase)))
                continue
            if seg.amplitude == 0:
                continue
            sel = (mids > a) & (mids < bounds[k + 1])
            hx[sel, q] = 0.5 * seg.amplitude * math.cos(seg.phase)
            hy[sel, q] = 0.5 * seg.amplitude * math.sin(seg.phase)
    record_times = np.zeros(0) if record_times is None else np.asarray(record_times, dtype=float)
    rec_idx = []
    for t in record_times:
        if t < -1e-18 or t > T * (1 + 1e-12) or not _is_multiple(t, dt):
            raise ValueError(f"record time {t} is not a slice boundary in [0, T]")
        rec_idx.append(int(round(t / dt)))
    kicks.sort(key=lambda k: (k[0], k[1], k[2]))
    ops = []
    ki, ri = 0, 0
    rec_order = sorted(range(len(rec_idx)), key=lambda r: rec_idx[r])
    for b in range(n_slices + 1):
        while ki < len(kicks) and kicks[ki][0] == b:
            ops.append((_backend.OP_KICK, ki))
            ki += 1
        while ri < len(rec_order) and rec_idx[rec_order[ri]] == b:
            ops.append((_backend.OP_RECORD, rec_order[ri]))
            ri += 1
        if b < n_slices:
            ops.append((_backend.OP_SLICE, b))
    kq = np.array([k[1] for k in kicks], dtype=np.int64)
    ku = np.array([k[3] for k in kicks], dtype=complex).reshape(-1, 2, 2)
    return Timeline(n_slices, hx, hy, np.array(ops, dtype=np.int64).reshape(-1, 2), kq, ku, record_times)


def _check_state(psi, n):
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2 ** n,):
        raise ValueError(f"state must have shape ({2 ** n},)")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("initial state must have unit norm")
    return psi


def evolve(state, schedule: PulseSchedule, device: DeviceModel, trajectories=None, dt=None,
           record_times=None, backend=None, timeline=None):
    """Evolve a pure state (or density matrix) under one noise realization.

    Parameters
    ----------
    state : (2**n,) state vector or (2**n, 2**n) density matrix
    trajectories : mapping (qubit, axis) -> per-slice noise values (rad/s)
    dt : slice width; chosen by ``choose_dt`` when omitted
    record_times : optional slice-boundary times at which to snapshot the state

    Returns
    -------
    final state, or ``(final, snapshots)`` when ``record_times`` is given. A
    density-matrix input returns density matrices.
    """
    validate_device(device)
    n = device.n_qubits
    if n > QUBIT_CAP:
        raise ValueError(f"exact simulation is capped at {QUBIT_CAP} qubits (got {n})")
    if timeline is None:
        dt = dt or choose_dt(schedule, None, n)
        timeline = build_timeline(schedule, n, dt, record_times)
    dt = schedule.horizon / timeline.n_slices
    hz = np.zeros_like(timeline.hx)
    hx, hy = timeline.hx, timeline.hy
    if trajectories:
        hx, hy = hx.copy(), hy.copy()
        cols = {"x": hx, "y": hy, "z": hz}
        for (q, axis), values in trajectories.items():
            values = np.asarray(values, dtype=float)
            if values.size < timeline.n_slices:
                raise ValueError(f"trajectory for ({q}, {axis}) is shorter than {timeline.n_slices} slices")
            cols[axis][:, q] += values[:timeline.n_slices]
    zz = zz_diagonal(device)
    prop = _backend.get_propagate(backend)
    n_rec = len(timeline.record_times)

    def run(psi):
        out, snaps = prop(psi, hx, hy, hz, zz, dt, timeline.ops, timeline.kick_qubits,
                          timeline.kick_unitaries, n_rec)
        if abs(np.linalg.norm(out) - 1) > 1e-9:
            raise RuntimeError("norm drift exceeded 1e-9")
        return np.asarray(out), np.asarray(snaps)

    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        final, snaps = run(_check_state(state, n))
    else:
        if abs(np.trace(state) - 1) > 1e-10:
            raise ValueError("density matrix must have unit trace")
        w, v = np.linalg.eigh(state)
        final = np.zeros_like(state)
        snaps = np.zeros((n_rec,) + state.shape, dtype=complex)
        for p, vec in zip(w, v.T):
            if p < 1e-14:
                continue
            f, s = run(vec)
            final += p * np.outer(f, f.conj())
            snaps += p * np.einsum("ri,rj->rij", s, s.conj())
    if record_times is None and n_rec == 0:
        return final
    return final, snaps


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def preparation_unitary(psi0):
    """A unitary whose first column is ``psi0`` (so V|0...0> = psi0)."""
    psi0 = np.asarray(psi0, dtype=complex)
    d = psi0.size
    m = np.eye(d, dtype=complex)
    k = int(np.argmax(np.abs(psi0)))
    m[:, [0, k]] = m[:, [k, 0]]
    m[:, 0] = psi0
    q, r = np.linalg.qr(m)
    return q * (r[0, 0] / abs(r[0, 0]))


def _readout_confusion(probs, p, n):
    """Apply independent bit-flip readout error with probability p per qubit."""
    if p == 0:
        return probs
    t = probs.reshape((2,) * n)
    flip = np.array([[1 - p, p], [p, 1 - p]])
    for q in range(n):
        t = np.moveaxis(np.tensordot(flip, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


@dataclass
class SimConfig:
    device: DeviceModel
    schedule: PulseSchedule
    initial_state: np.ndarray
    noise: NoiseModel | None = None
    filters: dict | None = None
    dt: float | None = None
    n_trajectories: int = 10
    n_shots: int = 8000
    seed: int = 0
    target: str = "fidelity"
    record_times: tuple | None = None
    readout_error: float = 0.0
    n_taps: int = DEFAULT_TAPS
    stream: int = 0
    antithetic: bool = False
    backend: str | None = None

    def __post_init__(self):
        if self.n_trajectories < 1 or self.n_shots < 1:
            raise ValueError("n_trajectories and n_shots must be >= 1")
        if self.antithetic and self.n_trajectories % 2:
            raise ValueError("antithetic sampling needs an even number of trajectories")
        if not 0 <= self.readout_error < 0.5:
            raise ValueError("readout_error must lie in [0, 0.5)")
        if self.target != "fidelity" and (len(self.target) != self.device.n_qubits
                                          or set(self.target) - set("IXYZ")):
            raise ValueError(f"target must be 'fidelity' or an {self.device.n_qubits}-qubit Pauli label")
        if self.noise is not None and any(i != j or mu != nu for (i, mu, j, nu) in self.noise.entries):
            raise ValueError("the simulator injects independent noise only (no cross-spectra)")


@dataclass
class SimResult:
    """Per-trajectory exact values, shot estimates and aggregates.

    Arrays have shape (n_trajectories, n_points); n_points is the number of
    record times, or 1 for the final time only.
    """

    times: np.ndarray
    exact: np.ndarray
    estimates: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    target: str
    n_shots: int
    seed: int
    backend: str
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, include_wall_time=False):
        out = {
            "target": self.target, "n_shots": self.n_shots, "seed": self.seed,
            "backend": self.backend,
            "times": self.times.tolist(), "mean": self.mean.tolist(), "stderr": self.stderr.tolist(),
            "exact": self.exact.tolist(), "estimates": self.estimates.tolist(),
        }
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, include_wall_time=False):
        return json.dumps(self.to_dict(include_wall_time), sort_keys=True, indent=2)


def noise_filters(noise: NoiseModel, dt, n_taps=DEFAULT_TAPS):
    """Design one MA filter per local noise entry, keyed (qubit, axis)."""
    return {(i, mu): design_ma(spec, n_taps, dt) for (i, mu), spec in sorted(noise.local_entries.items())}


def draw_trajectories(filters, n_slices, seed, index, stream=0):
    """Noise values for one trajectory: {(qubit, axis): samples}.

    ``stream`` separates independent experiments sharing a master seed (for
    example one stream per sequence) without changing the per-qubit keys.
    """
    out = {}
    for (q, axis), filt in sorted(filters.items()):
        key = (stream << 32) | index
        out[(q, axis)] = sample_trajectory(filt, n_slices, seed, q, AXES.index(axis), key).samples
    return out


def pauli_expectation(psi, label):
    n = len(label)
    t = psi.reshape((2,) * n)
    phi = t
    for q, c in enumerate(label):
        if c != "I":
            phi = np.moveaxis(np.tensordot(SINGLE[c], phi, axes=([1], [q])), 0, q)
    return float(np.real(np.vdot(t.ravel(), phi.ravel())))


def run_monte_carlo(config: SimConfig) -> SimResult:
    """Average survival probability (or a Pauli expectation) over noise trajectories.

    Fidelity targets follow the hardware protocol: inverse preparation, then
    the all-zeros population, with binomial shot sampling and optional
    readout error. Pauli targets are sampled as +-1 outcomes. With
    ``antithetic=True`` trajectories come in (beta, -beta) pairs, which
    removes the sampling error of every contribution odd in the noise.
    """
    start = time.perf_counter()
    dev = config.device
    n = dev.n_qubits
    psi0 = _check_state(config.initial_state, n)
    dt = config.dt or choose_dt(config.schedule, config.noise, n)
    record = config.record_times
    timeline = build_timeline(config.schedule, n, dt, record if record is not None else [config.schedule.horizon])
    filters = dict(config.filters or {})
    if config.noise is not None:
        filters.update(noise_filters(config.noise, dt, config.n_taps))
    for f in filters.values():
        if not math.isclose(f.dt, dt, rel_tol=1e-12):
            raise ValueError("noise filter sample period must equal the slice width")
    prep = preparation_unitary(psi0)
    n_pts = len(timeline.record_times)
    exact = np.zeros((config.n_trajectories, n_pts))
    est = np.zeros_like(exact)
    for k in range(config.n_trajectories):
        if config.antithetic:
            traj = draw_trajectories(filters, timeline.n_slices, config.seed, k // 2, config.stream)
            if k % 2:
                traj = {key: -v for key, v in traj.items()}
        else:
            traj = draw_trajectories(filters, timeline.n_slices, config.seed, k, config.stream)
        _, snaps = evolve(psi0, config.schedule, dev, traj, timeline=timeline, backend=config.backend)
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([config.seed & (2 ** 64 - 1), _SHOT_STREAM, config.stream, k])))
        for r, psi in enumerate(snaps):
            if config.target == "fidelity":
                probs = np.abs(prep.conj().T @ psi) ** 2
                exact[k, r] = probs[0]
                p0 = float(np.clip(_readout_confusion(probs, config.readout_error, n)[0], 0, 1))
                est[k, r] = rng.binomial(config.n_shots, p0) / config.n_shots
            else:
                val = pauli_expectation(psi, config.target)
                exact[k, r] = val
                p_plus = float(np.clip((1 + val) / 2, 0, 1))
                est[k, r] = 2 * rng.binomial(config.n_shots, p_plus) / config.n_shots - 1
    mean = est.mean(axis=0)
    if config.antithetic:
        pairs = est.reshape(-1, 2, n_pts).mean(axis=1)
        stderr = (pairs.std(axis=0, ddof=1) / math.sqrt(pairs.shape[0]) if pairs.shape[0] > 1
                  else np.abs(est[0] - est[1]) / 2)
    elif config.n_trajectories > 1:
        stderr = est.std(axis=0, ddof=1) / math.sqrt(config.n_trajectories)
    elif config.target == "fidelity":
        stderr = np.sqrt(np.clip(mean * (1 - mean), 0, None) / config.n_shots)
    else:
        stderr = np.sqrt(np.clip(1 - mean ** 2, 0, None) / config.n_shots)
    backend = config.backend or _backend.BACKEND
    return SimResult(timeline.record_times, exact, est, mean, stderr, config.target,
                     config.n_shots, config.seed, backend, time.perf_counter() - start)


def survival_probability(counts, target):
    """Relative frequency of ``target`` in an outcome histogram."""
    total = sum(counts.values())
    if total < 1:
        raise ValueError("histogram is empty")
    return counts.get(target, 0) / total
