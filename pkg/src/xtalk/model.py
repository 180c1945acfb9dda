"""Physical model: device topology, control fields and noise spectra.

Units are hbar = 1 throughout: times in seconds, angular frequencies and
coupling strengths in rad/s. Power spectral densities are two-sided densities
of an even spectrum, S(w) = S(-w), specified on w >= 0, so that the two-point
correlation function is

    C(tau) = (1/pi) * int_0^inf S(w) cos(w tau) dw.

With this convention a white spectrum of level S0 has C(tau) = S0 delta(tau).
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.integrate import simpson

AXES = ("x", "y", "z")


class DeviceError(ValueError):
    """Invalid device description; ``edge`` holds the offending edge if any."""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


# ---------------------------------------------------------------------------
# Device
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviceModel:
    """Qubit register with static ZZ couplings ``J_ij sigma^z_i sigma^z_j``.

    ``edges`` holds ``(i, j, J_ij)`` triples with ``i < j`` and J in rad/s.
    """

    n_qubits: int
    edges: tuple = ()
    labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(i), int(j), float(J)) for i, j, J in self.edges))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def chain(cls, n_qubits, J):
        return cls(n_qubits, tuple((i, i + 1, J) for i in range(n_qubits - 1)))

    def coupling(self, i, j):
        i, j = min(i, j), max(i, j)
        for a, b, J in self.edges:
            if (a, b) == (i, j):
                return J
        return 0.0

    def neighbors(self, i):
        out = []
        for a, b, _ in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def with_couplings(self, J_table):
        """Copy of the device with couplings replaced from ``{(i, j): J}``."""
        edges = tuple((i, j, float(J_table.get((i, j), J))) for i, j, J in self.edges)
        return DeviceModel(self.n_qubits, edges, self.labels)

    def scaled(self, factor):
        return DeviceModel(self.n_qubits, tuple((i, j, J * factor) for i, j, J in self.edges), self.labels)

    def to_dict(self):
        out = {"n_qubits": self.n_qubits, "edges": [[i, j, J] for i, j, J in self.edges]}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["n_qubits"]), tuple(tuple(e) for e in data.get("edges", ())),
                   data.get("labels"))


class DeviceCheck(NamedTuple):
    device: DeviceModel
    bipartite: bool
    colors: tuple
    monochromatic: tuple


def two_coloring(n_qubits, edges):
    """BFS 2-coloring of the coupling graph.

    Components are started from their lowest-index vertex, which receives
    color 0. On odd cycles the BFS assignment is kept and the conflicting
    edges are returned.

    Returns
    -------
    colors : tuple of int
    monochromatic : tuple of (i, j) edges joining equal colors
    """
    adj = [[] for _ in range(n_qubits)]
    for i, j, *_ in edges:
        adj[i].append(j)
        adj[j].append(i)
    colors = [-1] * n_qubits
    for start in range(n_qubits):
        if colors[start] >= 0:
            continue
        colors[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in sorted(adj[u]):
                if colors[v] < 0:
                    colors[v] = 1 - colors[u]
                    queue.append(v)
    mono = tuple(sorted((min(i, j), max(i, j)) for i, j, *_ in edges if colors[i] == colors[j]))
    return tuple(colors), mono


def validate_device(device: DeviceModel) -> DeviceCheck:
    """Check device invariants and report bipartiteness of the coupling graph."""
    n = device.n_qubits
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DeviceError(f"n_qubits must be a positive integer, got {n!r}")
    seen = set()
    for edge in device.edges:
        i, j, J = edge
        if i == j:
            raise DeviceError(f"self-edge on qubit {i}", edge)
        if not (0 <= i < n and 0 <= j < n):
            raise DeviceError(f"edge index out of range for {n} qubits: {edge}", edge)
        if i > j:
            raise DeviceError(f"edge must be ordered with i < j: {edge}", edge)
        if (i, j) in seen:
            raise DeviceError(f"duplicate edge ({i}, {j})", edge)
        if not math.isfinite(J):
            raise DeviceError(f"non-finite coupling on edge ({i}, {j})", edge)
        seen.add((i, j))
    if device.labels is not None and len(device.labels) != n:
        raise DeviceError("labels must have one entry per qubit")
    colors, mono = two_coloring(n, device.edges)
    return DeviceCheck(device, not mono, colors, mono)


# ---------------------------------------------------------------------------
# Control fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Constant drive ``amplitude/2 (cos(phase) X + sin(phase) Y)`` for ``duration``.

    A zero-duration segment is an instantaneous rotation by ``angle`` about the
    axis set by ``phase``.
    """

    duration: float
    amplitude: float = 0.0
    phase: float = 0.0
    angle: float | None = None

    def __post_init__(self):
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration}")
        if self.duration == 0 and self.angle is None:
            raise ValueError("instantaneous segment needs a rotation angle")

    @property
    def instantaneous(self):
        return self.duration == 0

    @property
    def rotation(self):
        return self.angle if self.instantaneous else self.amplitude * self.duration


@dataclass(frozen=True)
class ControlField:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration(self):
        return math.fsum(s.duration for s in self.segments)

    def boundaries(self):
        """Start times of each segment followed by the end time."""
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def repeated(self, times):
        return ControlField(self.segments * times)

    def to_list(self):
        out = []
        for s in self.segments:
            row = {"duration": s.duration, "amplitude": s.amplitude, "phase": s.phase}
            if s.angle is not None:
                row["angle"] = s.angle
            out.append(row)
        return out

    @classmethod
    def from_list(cls, rows):
        return cls(tuple(Segment(**r) for r in rows))


def idle(duration):
    return ControlField((Segment(duration),))


@dataclass(frozen=True)
class PulseSchedule:
    """Per-qubit control fields sharing the horizon ``T``."""

    per_qubit: Mapping[int, ControlField]
    horizon: float
    labels: Mapping[int, str] = field(default_factory=dict)
    unprotected_edges: tuple = ()

    def __post_init__(self):
        for q, f in self.per_qubit.items():
            if not math.isclose(f.duration, self.horizon, rel_tol=1e-12, abs_tol=1e-18):
                raise ValueError(
                    f"qubit {q} field lasts {f.duration} s but schedule horizon is {self.horizon} s")

    @property
    def qubits(self):
        return sorted(self.per_qubit)

    def field(self, q):
        return self.per_qubit.get(q) or idle(self.horizon)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

class SpectrumSpec:
    """Base class for even, non-negative noise spectra."""

    kind = "abstract"

    def __call__(self, omega):
        return self.evaluate(np.abs(np.asarray(omega, dtype=float)))

    def evaluate(self, omega):
        raise NotImplementedError

    @property
    def feature_frequency(self):
        """Largest characteristic frequency (rad/s), None for flat spectra."""
        return None

    @property
    def support_max(self):
        """Frequency beyond which the spectrum is negligible (inf if unbounded)."""
        return math.inf

    def to_dict(self):
        raise NotImplementedError

    def scaled(self, factor):
        """Same spectral shape with the amplitude multiplied by ``factor``."""
        data = self.to_dict()
        data.pop("kind")
        key = self._amplitude_key
        data[key] = np.asarray(data[key]) * factor if key == "values" else data[key] * factor
        return type(self)(**data)

    _amplitude_key = "s0"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class White(SpectrumSpec):
    kind = "white"

    def __init__(self, s0):
        self.s0 = float(s0)

    def evaluate(self, omega):
        return np.full_like(omega, self.s0, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "s0": self.s0}


class Lorentzian(SpectrumSpec):
    """``S0 / (1 + (w / wc)^2)``; correlation ``S0 wc / 2 exp(-wc |tau|)``."""

    kind = "lorentzian"

    def __init__(self, s0, omega_c):
        if omega_c <= 0:
            raise ValueError("omega_c must be positive")
        self.s0 = float(s0)
        self.omega_c = float(omega_c)

    def evaluate(self, omega):
        return self.s0 / (1.0 + (omega / self.omega_c) ** 2)

    @property
    def feature_frequency(self):
        return self.omega_c

    def to_dict(self):
        return {"kind": self.kind, "s0": self.s0, "omega_c": self.omega_c}


class OneOverF(SpectrumSpec):
    """``A / w`` on ``[omega_min, omega_max]``, zero elsewhere."""

    kind = "one_over_f"
    _amplitude_key = "a"

    def __init__(self, a, omega_min, omega_max):
        if not 0 < omega_min < omega_max:
            raise ValueError("need 0 < omega_min < omega_max")
        self.a = float(a)
        self.omega_min = float(omega_min)
        self.omega_max = float(omega_max)

    def evaluate(self, omega):
        inside = (omega >= self.omega_min) & (omega <= self.omega_max)
        safe = np.where(inside, omega, 1.0)
        return np.where(inside, self.a / safe, 0.0)

    @property
    def feature_frequency(self):
        return self.omega_max

    @property
    def support_max(self):
        return self.omega_max

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "omega_min": self.omega_min, "omega_max": self.omega_max}


class GaussianBand(SpectrumSpec):
    """Narrowband peak ``S0 exp(-(w - w0)^2 / (2 sigma^2))`` (mirrored to w < 0)."""

    kind = "gaussian_band"

    def __init__(self, s0, omega_0, sigma):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.s0 = float(s0)
        self.omega_0 = float(omega_0)
        self.sigma = float(sigma)

    def evaluate(self, omega):
        return self.s0 * np.exp(-0.5 * ((omega - self.omega_0) / self.sigma) ** 2)

    @property
    def feature_frequency(self):
        return self.omega_0 + 4 * self.sigma

    @property
    def support_max(self):
        return self.omega_0 + 8 * self.sigma

    def to_dict(self):
        return {"kind": self.kind, "s0": self.s0, "omega_0": self.omega_0, "sigma": self.sigma}


class Tabulated(SpectrumSpec):
    """Linear interpolation of ``values`` on ``grid``; zero outside the grid."""

    kind = "tabulated"
    _amplitude_key = "values"

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 1:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("tabulated values must be finite and non-negative")
        self.grid = grid
        self.values = values

    def evaluate(self, omega):
        out = np.interp(omega, self.grid, self.values)
        return np.where((omega < self.grid[0]) | (omega > self.grid[-1]), 0.0, out)

    @property
    def feature_frequency(self):
        return float(self.grid[-1])

    @property
    def support_max(self):
        return float(self.grid[-1])

    def to_dict(self):
        return {"kind": self.kind, "grid": self.grid.tolist(), "values": self.values.tolist()}


_SPECTRA = {cls.kind: cls for cls in (White, Lorentzian, OneOverF, GaussianBand, Tabulated)}


def spectrum_from_dict(data):
    data = dict(data)
    kind = data.pop("kind")
    try:
        cls = _SPECTRA[kind]
    except KeyError:
        raise ValueError(f"unknown spectrum kind {kind!r}") from None
    return cls(**data)


def eval_psd(spec: SpectrumSpec, omega):
    """Evaluate ``spec`` at ``omega >= 0`` (scalar or array)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("eval_psd requires omega >= 0")
    out = spec.evaluate(w)
    return float(out) if out.ndim == 0 else out


class Correlation(NamedTuple):
    value: float
    resolved: bool


def correlation_from_psd(spec: SpectrumSpec, tau, omega_max, n_grid=4097) -> Correlation:
    """Two-point correlation ``C(tau)`` from a truncated cosine transform of ``spec``.

    ``resolved`` is False when the grid step cannot follow ``cos(w tau)``
    (more than a quarter period per step); the value is still returned.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    w = np.linspace(0.0, omega_max, int(n_grid))
    tau = abs(float(tau))
    value = simpson(spec(w) * np.cos(w * tau), x=w) / math.pi
    resolved = (w[1] - w[0]) * tau <= math.pi / 4
    if not resolved:
        warnings.warn(f"correlation quadrature under-resolved at tau={tau:g}", RuntimeWarning, stacklevel=2)
    return Correlation(float(value), bool(resolved))


# ---------------------------------------------------------------------------
# Noise model
# ---------------------------------------------------------------------------

def _axis(mu):
    if mu not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {mu!r}")
    return mu


@dataclass(frozen=True)
class NoiseModel:
    """Spectra ``S^{mu nu}_{ij}`` keyed by ``(i, mu, j, nu)``; missing entries are zero."""

    entries: Mapping[tuple, SpectrumSpec] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (i, mu, j, nu), spec in self.entries.items():
            clean[(int(i), _axis(mu), int(j), _axis(nu))] = spec
        for (i, mu, j, nu), spec in clean.items():
            mirror = clean.get((j, nu, i, mu))
            if mirror is None:
                raise ValueError(f"noise entry {(i, mu, j, nu)} lacks its mirror {(j, nu, i, mu)}")
            if mirror != spec:
                raise ValueError(f"noise entries {(i, mu, j, nu)} and {(j, nu, i, mu)} differ")
        object.__setattr__(self, "entries", clean)

    @classmethod
    def dephasing(cls, spectra: Mapping[int, SpectrumSpec]):
        """Independent z-axis noise on each listed qubit."""
        return cls({(q, "z", q, "z"): s for q, s in spectra.items()})

    def spectrum(self, i, mu, j, nu):
        return self.entries.get((i, mu, j, nu))

    @property
    def local_entries(self):
        return {(i, mu): s for (i, mu, j, nu), s in self.entries.items() if i == j and mu == nu}

    @property
    def is_diagonal(self):
        return all(i == j and mu == nu for (i, mu, j, nu) in self.entries)

    def scaled(self, factor):
        """Multiply every spectrum by ``factor``."""
        return NoiseModel({key: spec.scaled(factor) for key, spec in self.entries.items()})

    @property
    def feature_frequency(self):
        freqs = [s.feature_frequency for s in self.entries.values() if s.feature_frequency]
        return max(freqs) if freqs else None

    @property
    def support_max(self):
        return max((s.support_max for s in self.entries.values()), default=0.0)

    def to_dict(self):
        return [{"i": i, "mu": mu, "j": j, "nu": nu, "spectrum": s.to_dict()}
                for (i, mu, j, nu), s in sorted(self.entries.items())]

    @classmethod
    def from_dict(cls, rows: Sequence[Mapping]):
        entries = {}
        for row in rows:
            spec = spectrum_from_dict(row["spectrum"])
            i, mu = int(row["i"]), row.get("mu", "z")
            j, nu = int(row.get("j", i)), row.get("nu", mu)
            entries[(i, mu, j, nu)] = spec
            entries.setdefault((j, nu, i, mu), spec)
        return cls(entries)
