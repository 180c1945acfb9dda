"""Fidelity-decay fits, bootstrap intervals and summary ratios."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares

N_STARTS = 8


@dataclass(frozen=True)
class DecayFit:
    """Modified exponential decay with
    f(t) = (k exp(-t/lam) cos(gamma t) + exp(-t/alpha)) / (1 + k).

    F0 and F_Tmax are pinned to the first and last data points and
    c = (F_Tmax - F0) / (f(Tmax) - 1). With that c the curve through both
    endpoints is F(t) = F0 - c [1 - f(t)] = F0 + c [f(t) - 1].
    """

    lam: float
    alpha: float
    gamma: float
    k: float
    F0: float
    F_Tmax: float
    c: float
    T_max: float
    residual: float
    at_bounds: bool = False
    degenerate: bool = False

    def f(self, t):
        return _shape(np.asarray(t, dtype=float), self.lam, self.alpha, self.gamma, self.k)

    def __call__(self, t):
        return self.F0 - self.c * (1 - self.f(t))

    def to_dict(self):
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


def _shape(t, lam, alpha, gamma, k):
    return (k * np.exp(-t / lam) * np.cos(gamma * t) + np.exp(-t / alpha)) / (1 + k)


def _scale(T_max, F0, F_end, lam, alpha, gamma, k):
    den = _shape(np.array(T_max), lam, alpha, gamma, k) - 1
    return (F_end - F0) / den if abs(den) > 1e-15 else math.inf


def fit_decay(times, fidelities, weights=None, initial: DecayFit | None = None, k_min=0.0) -> DecayFit:
    """Bounded multi-start least squares for (lam, alpha, gamma, k).

    lam is the short and alpha the long decay time (lam <= alpha). Both are
    fitted in log space, lam within [1e-3, 1e3] x T_max, together with gamma
    in [0, 50 pi / T_max] and k in [0, 100]. Starts are 8 deterministic
    log-spaced (lam, alpha) pairs; the lowest residual wins. Passing a
    previous fit as ``initial`` replaces the multi-start by a single warm
    start, which is how bootstrap resamples are refitted.

    ``k_min`` raises the lower bound on k. With k_min >= 1 the short decay
    carries at least half of the decaying weight, which keeps lam
    identifiable on curves that are close to a single exponential (with
    k -> 0 lam would otherwise be arbitrary).
    """
    t = np.asarray(times, dtype=float)
    F = np.asarray(fidelities, dtype=float)
    if t.shape != F.shape or t.ndim != 1:
        raise ValueError("times and fidelities must be 1-D arrays of equal length")
    if t.size < 6:
        raise ValueError("fit_decay needs at least 6 points")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(F))):
        raise ValueError("non-finite data")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    w = np.ones_like(F) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
    T_max = float(t[-1])
    F0, F_end = float(F[0]), float(F[-1])
    spread = float(np.ptp(F))
    if spread <= 1e-12 * max(1.0, abs(F0)):
        return DecayFit(math.nan, math.nan, math.nan, math.nan, F0, F_end, 0.0, T_max, 0.0,
                        degenerate=True)

    # p = (ln lam, ln(alpha / lam), gamma, k): the ordering lam <= alpha is built in
    if not 0 <= k_min < 100:
        raise ValueError("k_min must lie in [0, 100)")
    lo = np.array([math.log(1e-3 * T_max), 0.0, 0.0, float(k_min)])
    hi = np.array([math.log(1e3 * T_max), math.log(1e6), 50 * math.pi / T_max, 100.0])

    def unpack(p):
        return math.exp(p[0]), math.exp(p[0] + p[1]), p[2], p[3]

    def resid(p):
        lam, alpha, gamma, k = unpack(p)
        c = _scale(T_max, F0, F_end, lam, alpha, gamma, k)
        if not math.isfinite(c):
            return np.full(F.shape, 1e3)
        return w * (F0 - c * (1 - _shape(t, lam, alpha, gamma, k)) - F)

    # dominant oscillation of the detrended data seeds gamma
    detr = F - np.interp(t, [t[0], t[-1]], [F0, F_end])
    tu = np.linspace(t[0], T_max, 4 * t.size)
    spec = np.abs(np.fft.rfft(np.interp(tu, t, detr)))
    freqs = 2 * np.pi * np.fft.rfftfreq(tu.size, d=tu[1] - tu[0])
    g0 = float(freqs[1 + np.argmax(spec[1:])]) if spec.size > 1 else 0.0
    g0 = min(g0, 0.99 * hi[2])

    if initial is not None and not initial.degenerate:
        starts = [(initial.lam, initial.alpha, initial.gamma, initial.k)]
    else:
        lams = T_max * np.logspace(-2, 0.5, N_STARTS)
        alphas = T_max * np.logspace(2, -0.5, N_STARTS)
        starts = [(l0, a0, g, max(1.0, k_min + 0.5)) for l0, a0 in zip(lams, alphas) for g in (g0, 0.0)]
    best = None
    for lam0, alpha0, gam0, k0 in starts:
        lam0, alpha0 = min(lam0, alpha0), max(lam0, alpha0)
        p0 = np.clip([math.log(lam0), math.log(alpha0 / lam0), gam0, k0], lo + 1e-9, hi - 1e-9)
        try:
            sol = least_squares(resid, p0, bounds=(lo, hi), x_scale=[1.0, 1.0, 1.0 / T_max, 1.0],
                                xtol=1e-13, ftol=1e-13, gtol=1e-13, max_nfev=2000)
        except (ValueError, FloatingPointError):
            continue
        cost = float(np.sum(sol.fun ** 2))
        if best is None or cost < best[0] - 1e-30:
            best = (cost, sol.x)
    if best is None:
        raise RuntimeError("decay fit failed from every start")
    cost, p = best
    lam, alpha, gamma, k = unpack(p)
    at_bounds = bool(np.any(np.isclose(p, lo, rtol=0, atol=1e-6) & (lo != 0))
                     or np.any(np.isclose(p, hi, rtol=0, atol=1e-6 * np.maximum(1, np.abs(hi)))))
    c = _scale(T_max, F0, F_end, lam, alpha, gamma, k)
    return DecayFit(lam, alpha, gamma, k, F0, F_end, float(c), T_max, math.sqrt(cost), at_bounds)


@dataclass(frozen=True)
class BootstrapSummary:
    estimate: float | np.ndarray
    ci_low: float | np.ndarray
    ci_high: float | np.ndarray
    n_resamples: int
    seed: int
    failures: int = 0

    def to_dict(self):
        conv = (lambda v: np.asarray(v).tolist())
        return {"estimate": conv(self.estimate), "ci_low": conv(self.ci_low),
                "ci_high": conv(self.ci_high), "n_resamples": self.n_resamples,
                "seed": self.seed, "failures": self.failures}


def bootstrap(statistic: Callable, rows, n_resamples=1000, seed=0, level=0.95) -> BootstrapSummary:
    """Percentile bootstrap over rows drawn with replacement.

    A resample whose statistic raises or returns non-finite values is
    redrawn; more than 10% such failures is an error. The interval is widened
    if needed so that it contains the point estimate.
    """
    rows = np.asarray(rows) if not isinstance(rows, np.ndarray) else rows
    n = len(rows)
    if n < 1:
        raise ValueError("bootstrap needs at least one row")
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    est = np.asarray(statistic(rows), dtype=float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    draws, failures = [], 0
    while len(draws) < n_resamples:
        idx = rng.integers(0, n, n)
        try:
            val = np.asarray(statistic(rows[idx]), dtype=float)
            if not np.all(np.isfinite(val)):
                raise FloatingPointError("non-finite statistic")
        except Exception:
            failures += 1
            if failures > 0.1 * n_resamples:
                raise RuntimeError(f"bootstrap statistic failed on {failures} resamples")
            continue
        draws.append(val)
    draws = np.array(draws)
    tail = 100 * (1 - level) / 2
    lo = np.percentile(draws, tail, axis=0)
    hi = np.percentile(draws, 100 - tail, axis=0)
    lo, hi = np.minimum(lo, est), np.maximum(hi, est)
    scalar = est.ndim == 0
    pick = (lambda v: float(v)) if scalar else (lambda v: v)
    return BootstrapSummary(pick(est), pick(lo), pick(hi), n_resamples, int(seed), failures)


def time_avg_fidelity(times, fidelities):
    """(1/T_max) int_0^T_max F(t)/F(0) dt by the trapezoidal rule."""
    t = np.asarray(times, dtype=float)
    F = np.asarray(fidelities, dtype=float)
    if t.size < 2 or t[0] != 0:
        raise ValueError("times must start at 0 and contain at least two points")
    if F[0] == 0:
        raise ValueError("F(0) must be non-zero")
    return float(trapezoid(F / F[0], t) / t[-1])


def improvement_ratios(fit_a: DecayFit, fit_b: DecayFit, favg_a, favg_b):
    """(R_lambda, R_F) = (lam_a / lam_b, favg_a / favg_b)."""
    if not fit_b.lam or not favg_b or not math.isfinite(fit_b.lam):
        raise ValueError("ratio denominators must be finite and non-zero")
    return fit_a.lam / fit_b.lam, favg_a / favg_b


def fits_to_json(records):
    """Serialize a mapping of name -> DecayFit/BootstrapSummary with stable ordering."""
    return json.dumps({k: v.to_dict() for k, v in records.items()}, sort_keys=True, indent=2)
