"""Pulse protocols, control propagators and toggling-frame control matrices.

Frame convention: the control matrix is

    R^{mu nu}(t) = Tr[U_C(T, t) sigma^mu U_C(T, t)^dag sigma^nu] / 2,

i.e. the frame is referenced to the *end* of the window, so R(T) = 1 and a
pulse flips the sign of R^{zz} at all times *before* it. This choice fixes the
relative signs of the overlap integrals between qubits and must be kept
consistent across protocols that are compared.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (ControlField, DeviceModel, PulseSchedule, Segment, idle,
                    validate_device)

SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

FREE, XY4, XY4_PRIME, FTTPS_COS, FTTPS_SIN = "FREE", "XY4", "XY4_PRIME", "FTTPS_COS", "FTTPS_SIN"
DD_KINDS = (XY4, XY4_PRIME)
FTTPS_KINDS = (FTTPS_COS, FTTPS_SIN)
PULSE_SHAPES = ("square", "instantaneous")


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceDescriptor:
    kind: str
    tau: float = 0.0
    delta: float = 0.0
    repetitions: int = 1
    ell: int = 0
    kappa: int = 1
    t_gate: float = 0.0
    pulse_shape: str = "square"

    def __post_init__(self):
        if self.pulse_shape not in PULSE_SHAPES:
            raise ValueError(f"pulse_shape must be one of {PULSE_SHAPES}")
        if self.kind in (FREE, *DD_KINDS):
            if self.tau < 0 or self.delta < 0 or (self.tau == 0 and self.delta == 0):
                raise ValueError("need tau >= 0, delta >= 0, not both zero")
            if self.repetitions < 1:
                raise ValueError("repetitions must be >= 1")
        elif self.kind in FTTPS_KINDS:
            _check_fttps(self.ell, self.kappa, self.t_gate)
        else:
            raise ValueError(f"unknown sequence kind {self.kind!r}")

    @property
    def duration(self):
        if self.kind in FTTPS_KINDS:
            return self.ell * self.t_gate
        return self.repetitions * 4 * (self.tau + self.delta)

    def build(self) -> ControlField:
        if self.kind == FREE:
            return idle(self.duration)
        if self.kind in DD_KINDS:
            return build_dd_schedule(self.kind, self.tau, self.delta, self.repetitions, self.pulse_shape)
        return build_fttps(self.kind, self.ell, self.kappa, self.t_gate, self.pulse_shape)


def _pi_pulse(delta, phase, pulse_shape):
    if pulse_shape == "square":
        return [Segment(delta, math.pi / delta, phase)]
    # instantaneous: the kick sits at the centre of its delta window
    out = [Segment(0.0, 0.0, phase, angle=math.pi)]
    if delta > 0:
        out = [Segment(delta / 2)] + out + [Segment(delta / 2)]
    return out


def _merge_idle(segments):
    out = []
    for s in segments:
        if out and s.amplitude == 0 and not s.instantaneous and out[-1].amplitude == 0 \
                and not out[-1].instantaneous:
            out[-1] = Segment(out[-1].duration + s.duration)
        else:
            out.append(s)
    return out


def build_dd_schedule(kind, tau, delta, repetitions, pulse_shape="square") -> ControlField:
    """XY4 (``f X f Y f X f Y``) or XY4' (``X f Y f X f Y f``) repeated ``repetitions`` times.

    Square pi pulses have amplitude ``pi / delta``; phase 0 is X, pi/2 is Y.
    Instantaneous pulses are placed at the centre of their ``delta`` window so
    the cycle time stays ``4 (tau + delta)`` for both shapes.
    """
    SequenceDescriptor(kind, tau, delta, repetitions, pulse_shape=pulse_shape)
    if kind not in DD_KINDS:
        raise ValueError(f"kind must be one of {DD_KINDS}")
    if pulse_shape == "square" and delta == 0:
        raise ValueError("square pulses need delta > 0")
    free = [Segment(tau)] if tau > 0 else []
    x = _pi_pulse(delta, 0.0, pulse_shape)
    y = _pi_pulse(delta, math.pi / 2, pulse_shape)
    if kind == XY4:
        cycle = free + x + free + y + free + x + free + y
    else:
        cycle = x + free + y + free + x + free + y + free
    return ControlField(tuple(_merge_idle(cycle * repetitions)))


def sequence_string(field: ControlField) -> str:
    """Human-readable form such as ``"f X f Y f X f Y"``."""
    out = []
    for s in field.segments:
        if s.rotation == 0:
            if not out or out[-1] != "f":
                out.append("f")
            continue
        axis = {0.0: "X", round(math.pi / 2, 12): "Y"}.get(round(s.phase % (2 * math.pi), 12), "R")
        angle = s.rotation
        if math.isclose(angle, math.pi):
            out.append(axis)
        else:
            out.append(f"{axis}({angle:.4g})")
    return " ".join(out)


def _check_fttps(ell, kappa, t_gate):
    if ell < 2 or ell % 2:
        raise ValueError("ell must be a positive even integer")
    if not 1 <= kappa <= ell:
        raise ValueError("kappa must satisfy 1 <= kappa <= ell")
    if t_gate <= 0:
        raise ValueError("t_gate must be positive")


def fttps_signs(variant, ell, kappa):
    """Target slot signs sgn{cos(pi (kappa-1) m / ell)} (or sin) for m = 1..ell.

    sgn(0) is taken as +1, so the kappa = 1 sine sequence is pulse-free.
    """
    m = np.arange(1, ell + 1)
    arg = np.pi * (kappa - 1) * m / ell
    val = np.cos(arg) if variant == FTTPS_COS else np.sin(arg)
    val[np.abs(val) < 1e-12] = 0.0
    return np.where(val >= 0, 1, -1)


def fttps_pulse_slots(variant, ell, kappa):
    """0-based slots holding an X gate: sign changes between slot m and m+1."""
    s = fttps_signs(variant, ell, kappa)
    return np.flatnonzero(s[:-1] != s[1:])


def build_fttps(variant, ell, kappa, t_gate, pulse_shape="square") -> ControlField:
    """ell gate slots of width ``t_gate``; X where the target sign flips, identity elsewhere.

    Square X gates fill their slot. Instantaneous X gates sit at the end of
    their slot so the toggling sign on slot m is exactly the target sign (up
    to the global sign fixed by referencing the frame to the final time).
    The bookending X_{pi/2} pulses are not part of the field: qubits are
    prepared and measured along +x.
    """
    if variant not in FTTPS_KINDS:
        raise ValueError(f"variant must be one of {FTTPS_KINDS}")
    if pulse_shape not in PULSE_SHAPES:
        raise ValueError(f"pulse_shape must be one of {PULSE_SHAPES}")
    _check_fttps(ell, kappa, t_gate)
    slots = set(fttps_pulse_slots(variant, ell, kappa).tolist())
    segs = []
    for m in range(ell):
        if m in slots and pulse_shape == "square":
            segs.append(Segment(t_gate, math.pi / t_gate, 0.0))
        else:
            segs.append(Segment(t_gate))
            if m in slots:
                segs.append(Segment(0.0, 0.0, 0.0, angle=math.pi))
    return ControlField(tuple(_merge_idle(segs)))


def _patterned(device, field_a, field_b, label_a, label_b):
    check = validate_device(device)
    if check.monochromatic:
        warnings.warn(
            "coupling graph is not bipartite; crosstalk suppression is not guaranteed on "
            f"edges {list(check.monochromatic)}", RuntimeWarning, stacklevel=3)
    per_qubit, labels = {}, {}
    for q, c in enumerate(check.colors):
        per_qubit[q] = field_a if c == 0 else field_b
        labels[q] = label_a if c == 0 else label_b
    return PulseSchedule(per_qubit, field_a.duration, labels, check.monochromatic)


def uniform_schedule(n_qubits, field: ControlField, label="") -> PulseSchedule:
    """The same field on every qubit (simultaneous, unpatterned application)."""
    return PulseSchedule({q: field for q in range(n_qubits)}, field.duration,
                         {q: label for q in range(n_qubits)})


def pattern_crdd(device: DeviceModel, tau, delta, repetitions, pulse_shape="square") -> PulseSchedule:
    """CR-XY4: XY4 on one color class of the coupling graph, XY4' on the other."""
    a = build_dd_schedule(XY4, tau, delta, repetitions, pulse_shape)
    b = build_dd_schedule(XY4_PRIME, tau, delta, repetitions, pulse_shape)
    return _patterned(device, a, b, XY4, XY4_PRIME)


def pattern_crfttps(device: DeviceModel, ell, kappa, t_gate, pulse_shape="square") -> PulseSchedule:
    """CR-FTTPS: cosine FTTPS on one color class, sine FTTPS on the other."""
    a = build_fttps(FTTPS_COS, ell, kappa, t_gate, pulse_shape)
    b = build_fttps(FTTPS_SIN, ell, kappa, t_gate, pulse_shape)
    return _patterned(device, a, b, FTTPS_COS, FTTPS_SIN)


# ---------------------------------------------------------------------------
# Propagators
# ---------------------------------------------------------------------------

def su2(angle, phase):
    """exp(-i angle/2 (cos(phase) X + sin(phase) Y))."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phase)],
                     [-1j * s * np.exp(1j * phase), c]])


def control_propagator(field: ControlField, t1, t2) -> np.ndarray:
    """Time-ordered single-qubit propagator U_C(t2, t1).

    An instantaneous pulse at time t_p is included when t1 < t_p <= t2, or
    when t_p = t1 = 0 < t2, so U(t1, t3) = U(t2, t3) U(t1, t2). An empty
    interval (t1 = t2) is the identity.
    """
    if t1 > t2:
        raise ValueError("control_propagator needs t1 <= t2")
    u = np.eye(2, dtype=complex)
    if t1 == t2:
        return u
    start = 0.0
    for seg in field.segments:
        end = start + seg.duration
        if seg.instantaneous:
            if (start > t1 or start == t1 == 0.0) and start <= t2:
                u = su2(seg.angle, seg.phase) @ u
        else:
            lo, hi = max(start, t1), min(end, t2)
            if hi > lo and seg.amplitude != 0:
                u = su2(seg.amplitude * (hi - lo), seg.phase) @ u
        start = end
    return u


def adjoint(u) -> np.ndarray:
    """A[mu, nu] = Tr[u sigma^mu u^dag sigma^nu] / 2 (real 3x3)."""
    rot = np.einsum("ab,mbc,cd,nda->mn", u, SIGMA, u.conj().T, SIGMA)
    return rot.real / 2


def _skew(axis):
    x, y, z = axis
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class _Piece:
    """R(t) = p0 + p1 cos(rate (end - t)) + p2 sin(rate (end - t)) on [start, end]."""

    start: float
    end: float
    rate: float
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        th = self.rate * (self.end - t)
        return (self.p0[None] + np.cos(th)[:, None, None] * self.p1[None]
                + np.sin(th)[:, None, None] * self.p2[None])


def _pieces(field: ControlField):
    """Trigonometric pieces of R(t), one per finite-duration segment."""
    suffix = np.eye(3)  # adjoint of U(T, end of current segment)
    out = []
    bounds = field.boundaries()
    for k in range(len(field.segments) - 1, -1, -1):
        seg = field.segments[k]
        a, b = bounds[k], bounds[k + 1]
        axis = np.array([math.cos(seg.phase), math.sin(seg.phase), 0.0])
        if seg.instantaneous:
            suffix = adjoint(su2(seg.angle, seg.phase)) @ suffix
            continue
        if seg.amplitude == 0:
            zero = np.zeros((3, 3))
            out.append(_Piece(a, b, 0.0, suffix.copy(), zero, zero))
            continue
        k_mat = _skew(axis)
        k2 = k_mat @ k_mat
        # Ad(exp(-i th n.sigma/2)) = Rot(n, th)^T = I - sin(th) K + (1 - cos(th)) K^2
        out.append(_Piece(a, b, seg.amplitude, (np.eye(3) + k2) @ suffix, -k2 @ suffix, -k_mat @ suffix))
        suffix = adjoint(su2(seg.amplitude * seg.duration, seg.phase)) @ suffix
    return tuple(reversed(out))


@dataclass(frozen=True)
class ControlMatrixTrace:
    """Sampled toggling-frame control matrix of one qubit.

    ``pieces`` keep the exact per-segment trigonometric form so that overlap
    integrals and Fourier transforms can be evaluated analytically.
    """

    qubit: int
    grid: np.ndarray
    R: np.ndarray
    T: float
    pieces: tuple = field(repr=False, default=())

    def at(self, times):
        """Exact R at arbitrary times in [0, T] (right-continuous at kicks)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.size, 3, 3))
        starts = np.array([p.start for p in self.pieces])
        idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(self.pieces) - 1)
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.pieces[k].evaluate(times[sel])
        return out

    @property
    def boundaries(self):
        return np.array([p.start for p in self.pieces] + [self.T])


def control_matrix(field: ControlField, n_samples=16, qubit=0) -> ControlMatrixTrace:
    """Sample R(t) with ``n_samples`` points per segment, segment ends included."""
    if n_samples < 2:
        raise ValueError("control_matrix needs at least 2 samples per segment")
    pieces = _pieces(field)
    if not pieces:
        raise ValueError("control field has no finite-duration segments")
    grid, rows = [], []
    for p in pieces:
        t = np.linspace(p.start, p.end, n_samples)
        if grid:
            t = t[1:]
        grid.append(t)
        rows.append(p.evaluate(t))
    return ControlMatrixTrace(qubit, np.concatenate(grid), np.concatenate(rows), field.duration, pieces)


def schedule_traces(schedule: PulseSchedule, n_qubits=None, n_samples=16):
    n = n_qubits if n_qubits is not None else max(schedule.qubits) + 1
    return {q: control_matrix(schedule.field(q), n_samples, qubit=q) for q in range(n)}


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def schedule_to_csv(schedule: PulseSchedule, n_qubits=None) -> str:
    """Long-format CSV of piecewise-constant fields: qubit, t_start, t_end, omega, phi, angle."""
    n = n_qubits if n_qubits is not None else max(schedule.qubits) + 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["qubit", "t_start", "t_end", "omega", "phi", "angle"])
    for q in range(n):
        f = schedule.field(q)
        bounds = f.boundaries()
        for k, s in enumerate(f.segments):
            w.writerow([q, repr(float(bounds[k])), repr(float(bounds[k + 1])),
                        repr(float(s.amplitude)), repr(float(s.phase)), repr(float(s.rotation))])
    return buf.getvalue()
