"""Moving-average synthesis of stationary Gaussian noise trajectories.

A trajectory is the output of a finite impulse-response filter driven by unit
normal innovations, sampled at period dt and held constant over each sample.
For taps b_k the discrete process has PSD

    S_d(w) = dt * |sum_k b_k exp(-i w k dt)|^2,   |w| <= pi/dt,

in the same two-sided convention as ``model.SpectrumSpec``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import SpectrumSpec, Tabulated, White


@dataclass(frozen=True)
class MAFilter:
    """FIR taps b_0..b_q for unit-variance innovations sampled every ``dt`` seconds."""

    taps: np.ndarray
    dt: float
    aliased: bool = False

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=float))
        if taps.size < 1 or not np.all(np.isfinite(taps)):
            raise ValueError("MA filter needs at least one finite tap")
        if not self.dt > 0:
            raise ValueError("sample period must be positive")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def order(self):
        return self.taps.size - 1

    def response(self, omega):
        """Transfer function sum_k b_k exp(-i w k dt)."""
        omega = np.asarray(omega, dtype=float)
        k = np.arange(self.taps.size)
        return np.exp(-1j * np.multiply.outer(omega, k) * self.dt) @ self.taps

    def psd(self, omega):
        return self.dt * np.abs(self.response(omega)) ** 2


@dataclass(frozen=True)
class Trajectory:
    samples: np.ndarray
    seed: tuple
    qubit: int
    dt: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["index", "value"])
        for k, v in enumerate(self.samples):
            w.writerow([k, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, dt, qubit=0, seed=()):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["index", "value"]:
            raise ValueError("trajectory CSV needs an 'index,value' header")
        values = np.array([float(r[1]) for r in rows[1:]])
        return cls(values, tuple(seed), qubit, dt)


def _aliased(spec, target, nyquist):
    """True when the spectrum still carries weight at the Nyquist frequency.

    A flat spectrum is exactly representable by discrete white noise, so it is
    never flagged; otherwise the Nyquist value must be below 1e-3 of the peak.
    """
    if isinstance(spec, White):
        return False
    if spec.support_max <= nyquist:
        return False
    peak = float(target.max(initial=0.0))
    return bool(peak > 0 and float(spec(nyquist)) > 1e-3 * peak)


def design_ma(spec: SpectrumSpec, n_taps: int, dt: float, n_grid=None) -> MAFilter:
    """Zero-phase FIR approximation of ``spec`` truncated to ``n_taps`` taps.

    sqrt(S / dt) is sampled on the full DFT grid, inverse transformed, centred
    and cut to a symmetric window. White spectra map to the single tap
    sqrt(S0 / dt).
    """
    if n_taps < 1:
        raise ValueError("n_taps must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    nyquist = math.pi / dt
    n = n_grid or max(4096, 8 * n_taps)
    omega = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    target = np.maximum(spec(omega), 0.0)
    aliased = _aliased(spec, target, nyquist)
    if aliased:
        warnings.warn(f"spectrum extends beyond the Nyquist frequency {nyquist:.4g} rad/s; "
                      "power above it is discarded", RuntimeWarning, stacklevel=2)
    amp = np.sqrt(target / dt)
    h = np.fft.fftshift(np.real(np.fft.ifft(amp)))
    centre = n // 2
    lo = centre - (n_taps - 1) // 2
    taps = h[lo:lo + n_taps].copy()
    return MAFilter(taps, dt, aliased)


def _generator(master_seed, qubit, axis, index):
    ss = np.random.SeedSequence([int(master_seed) & (2 ** 64 - 1), int(qubit), int(axis), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def sample_trajectory(filt: MAFilter, n_samples: int, seed, qubit=0, axis=2, index=0) -> Trajectory:
    """Filter unit normal innovations through ``filt``.

    The generator is a counter-based Philox stream keyed by
    (seed, qubit, axis, index), so any trajectory can be regenerated in
    isolation. The first q outputs (filter warm-up) are discarded.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not np.any(filt.taps):
        return Trajectory(np.zeros(n_samples), (seed, qubit, axis, index), qubit, filt.dt)
    rng = _generator(seed, qubit, axis, index)
    e = rng.standard_normal(n_samples + filt.order)
    x = np.convolve(e, filt.taps, mode="valid")
    return Trajectory(x, (seed, qubit, axis, index), qubit, filt.dt)


def empirical_psd(trajectories, dt: float) -> Tabulated:
    """Averaged periodogram mean(|DFT|^2) * dt / n on omega >= 0."""
    arrays = [np.asarray(getattr(t, "samples", t), dtype=float) for t in trajectories]
    if not arrays:
        return Tabulated([0.0, math.pi / dt], [0.0, 0.0])
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("trajectories must have equal length")
    data = np.vstack(arrays)
    per = np.mean(np.abs(np.fft.rfft(data, axis=1)) ** 2, axis=0) * dt / n
    omega = 2 * np.pi * np.fft.rfftfreq(n, d=dt)
    return Tabulated(omega, per)
