"""Dephasing-spectrum reconstruction from fixed-total-time pulse sequences.

For a qubit prepared along +x and measured in X under z-noise, the second
cumulant gives <X> = baseline * exp(-b) with

    b = 2 (Gamma^{yy} + Gamma^{zz}) = 4 int_0^inf dw/2pi (|G^{zz}|^2 + |G^{zy}|^2) S(w).

Sampling the integral on the comb w_k = pi (k - 1) / T (trapezoidal weight 1/2
at w = 0) turns a set of sequences into the linear system b = A s.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .control import FTTPS_COS, FTTPS_KINDS, FTTPS_SIN, build_fttps, control_matrix
from .cumulant import filter_G

DECAY_FLOOR = 1e-6
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class InversionDesign:
    variant: str
    ell: int
    t_gate: float
    omega: np.ndarray
    A: np.ndarray
    kappas: tuple
    pulse_shape: str = "instantaneous"
    ridge: float = 0.0

    @property
    def T(self):
        return self.ell * self.t_gate

    @property
    def condition(self):
        return float(np.linalg.cond(self.A))

    def forward(self, spectrum):
        """Predicted decays for a spectrum (callable or values on ``omega``)."""
        s = spectrum(self.omega) if callable(spectrum) else np.asarray(spectrum, dtype=float)
        return self.A @ s


def frequency_samples(ell, t_gate):
    """omega_k = pi (k - 1) / (ell t_gate) for k = 1..ell/2."""
    return np.pi * np.arange(ell // 2) / (ell * t_gate)


def sequence_kappas(variant, ell):
    """Sequence indices used for reconstruction with ``variant``.

    The cosine family uses kappa = 1..ell/2. In the sine family kappa = 1 and
    kappa = 2 share the same all-positive sign pattern, so kappa = 2 is
    replaced by kappa = ell/2 + 1; that sequence is orthogonal to cosine
    kappa = 2 and keeps the design full rank.
    """
    if variant not in FTTPS_KINDS:
        raise ValueError(f"variant must be one of {FTTPS_KINDS}")
    ks = list(range(1, ell // 2 + 1))
    if variant == FTTPS_SIN and ell >= 4:
        ks[1] = ell // 2 + 1
    return tuple(ks)


def design_inversion(variant, ell, t_gate, pulse_shape="instantaneous", ridge=0.0, kappas=None) -> InversionDesign:
    """Linear map from spectrum samples to the log-decays of the ell/2 sequences of ``variant``."""
    if variant not in FTTPS_KINDS:
        raise ValueError(f"variant must be one of {FTTPS_KINDS}")
    if ell < 2 or ell % 2:
        raise ValueError("ell must be a positive even integer")
    omega = frequency_samples(ell, t_gate)
    d_omega = np.pi / (ell * t_gate)
    weights = np.ones(omega.size)
    weights[0] = 0.5
    kappas = tuple(kappas) if kappas is not None else sequence_kappas(variant, ell)
    if len(kappas) != omega.size:
        raise ValueError(f"need {omega.size} sequences, got {len(kappas)}")
    A = np.empty((len(kappas), omega.size))
    for r, kappa in enumerate(kappas):
        field = build_fttps(variant, ell, kappa, t_gate, pulse_shape)
        G = filter_G(control_matrix(field, 2), omega).G
        A[r] = 4 * weights * d_omega / (2 * np.pi) * (np.abs(G[:, 2, 2]) ** 2 + np.abs(G[:, 2, 1]) ** 2)
    if not np.all(np.isfinite(A)):
        raise ValueError("design matrix has non-finite entries")
    cond = np.linalg.cond(A)
    if cond > MAX_CONDITION:
        raise ValueError(f"design matrix is singular (condition number {cond:.3g})")
    return InversionDesign(variant, ell, t_gate, omega, A, kappas, pulse_shape, ridge)


def extract_decays(expectations, baseline=None, eps=DECAY_FLOOR):
    """b = -ln(clamp(<O> / baseline, eps, 1))."""
    e = np.asarray(expectations, dtype=float)
    ratio = e if baseline is None else e / np.asarray(baseline, dtype=float)
    if np.any(ratio < eps):
        warnings.warn("expectations at or below the decay floor were clamped (strong-decay regime)",
                      RuntimeWarning, stacklevel=2)
    return -np.log(np.clip(ratio, eps, 1.0))


def cc_correct(expectations, crosstalk_only, eps=DECAY_FLOOR):
    """Divide measured expectations by their noiseless crosstalk-only predictions.

    Entries whose prediction falls below ``eps`` are left unchanged (with a warning).
    """
    e = np.asarray(expectations, dtype=float)
    pred = np.broadcast_to(np.asarray(crosstalk_only, dtype=float), e.shape)
    bad = pred < eps
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} crosstalk-only predictions below {eps:g}; "
                      "correction skipped for those entries", RuntimeWarning, stacklevel=2)
    return np.where(bad, e, e / np.where(bad, 1.0, pred))


@dataclass(frozen=True)
class SpectrumEstimate:
    omega: np.ndarray
    values: np.ndarray
    qubit: int = 0
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    condition: float = float("nan")
    residual: float = float("nan")

    def with_ci(self, low, high):
        low, high = np.minimum(low, high), np.maximum(low, high)
        return SpectrumEstimate(self.omega, self.values, self.qubit, low, high, self.condition, self.residual)

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        if header:
            w.writerow(["qubit", "omega", "S_hat", "ci_low", "ci_high"])
        lo = self.ci_low if self.ci_low is not None else [math.nan] * self.omega.size
        hi = self.ci_high if self.ci_high is not None else [math.nan] * self.omega.size
        for om, s, a, b in zip(self.omega, self.values, lo, hi):
            w.writerow([self.qubit, repr(float(om)), repr(float(s)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def reconstruct(b, design: InversionDesign, constraint="none", ridge=None, qubit=0) -> SpectrumEstimate:
    """Least-squares solution of A s = b, optionally ridge-regularised and/or non-negative."""
    b = np.asarray(b, dtype=float)
    A = design.A
    if b.shape != (A.shape[0],):
        raise ValueError(f"decay vector must have length {A.shape[0]}")
    if constraint not in ("none", "nonneg"):
        raise ValueError("constraint must be 'none' or 'nonneg'")
    cond = design.condition
    if cond > MAX_CONDITION:
        raise ValueError(f"design matrix is singular (condition number {cond:.3g})")
    lam = design.ridge if ridge is None else ridge
    A_aug, b_aug = A, b
    if lam > 0:
        scale = math.sqrt(lam) * np.linalg.norm(A, 2)
        A_aug = np.vstack([A, scale * np.eye(A.shape[1])])
        b_aug = np.concatenate([b, np.zeros(A.shape[1])])
    # column scaling keeps the solve well posed when entries span many decades
    col = np.linalg.norm(A_aug, axis=0)
    col[col == 0] = 1.0
    if constraint == "nonneg":
        y, _ = nnls(A_aug / col, b_aug, maxiter=50 * A.shape[1])
    else:
        y = np.linalg.lstsq(A_aug / col, b_aug, rcond=None)[0]
    s = y / col
    return SpectrumEstimate(design.omega.copy(), s, qubit, condition=cond,
                            residual=float(np.linalg.norm(A @ s - b)))


@dataclass(frozen=True)
class ReconstructionError:
    mse: float
    nmse: float


def reconstruction_error(estimate: SpectrumEstimate, truth) -> ReconstructionError:
    """Mean squared error against ``truth`` evaluated on the estimate's grid."""
    s_true = truth(estimate.omega) if callable(truth) else np.asarray(truth, dtype=float)
    mse = float(np.mean((estimate.values - s_true) ** 2))
    norm = float(np.mean(s_true ** 2))
    return ReconstructionError(mse, mse / norm if norm > 0 else math.inf)


# ---------------------------------------------------------------------------
# Multi-qubit protocols
# ---------------------------------------------------------------------------

PROTOCOLS = ("FTTPS", "CC-FTTPS", "CR-FTTPS")


@dataclass(frozen=True)
class QNSRun:
    """One simultaneous experiment: the sequence per color class and the design
    row (or None) it fills for each class."""

    label: str
    sequences: tuple  # ((variant, kappa) for color 0, (variant, kappa) for color 1)
    rows: tuple       # (row index or None for color 0, same for color 1)


def protocol_runs(protocol, ell):
    """Runs making up a multi-qubit QNS protocol.

    FTTPS and CC-FTTPS apply cosine sequence kappa to every qubit. CR-FTTPS
    applies cosine sequences to color 0 and sine sequences to color 1. Its
    DC row is measured in two runs, with one class idle while the other runs
    the cosine kappa = 2 echo, because the pulse-free sequences of both
    variants coincide and would leave the full ZZ phase in place.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}")
    if protocol != "CR-FTTPS":
        return tuple(QNSRun(f"k{k}", ((FTTPS_COS, k), (FTTPS_COS, k)), (k - 1, k - 1))
                     for k in range(1, ell // 2 + 1))
    sin_k = sequence_kappas(FTTPS_SIN, ell)
    runs = [QNSRun("k1a", ((FTTPS_COS, 1), (FTTPS_COS, 2)), (0, None)),
            QNSRun("k1b", ((FTTPS_COS, 2), (FTTPS_SIN, 1)), (None, 0))]
    for r in range(1, ell // 2):
        runs.append(QNSRun(f"k{r + 1}", ((FTTPS_COS, r + 1), (FTTPS_SIN, sin_k[r])), (r, r)))
    return tuple(runs)


def protocol_variants(protocol):
    """Design variant for (color 0, color 1)."""
    return (FTTPS_COS, FTTPS_SIN) if protocol == "CR-FTTPS" else (FTTPS_COS, FTTPS_COS)
