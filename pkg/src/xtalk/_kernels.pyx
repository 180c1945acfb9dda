# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled state-vector propagation for piecewise-constant Pauli Hamiltonians.

Each slice carries the Hamiltonian

    H = sum_q hx[q] X_q + hy[q] Y_q + hz[q] Z_q + diag(zz)

and is applied to the state by a scaled Taylor series of exp(-i H dt) acting on
the vector, using bit arithmetic for the Pauli operators (qubit 0 is the most
significant bit). The op stream interleaves slices, instantaneous single-qubit
kicks and snapshot requests; see ``xtalk._fallback`` for the reference
implementation of the same contract.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, ceil

cnp.import_array()

DEF MAX_TERMS = 60
DEF STEP_NORM = 0.5
DEF TERM_TOL = 1e-17

OP_SLICE = 0
OP_KICK = 1
OP_RECORD = 2


cdef inline void _apply_h(const double complex[::1] v, double complex[::1] out,
                          const double[::1] hx, const double[::1] hy,
                          const double[::1] hz, const double[::1] zz,
                          int n, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t b, m
    cdef int q, shift, bit
    cdef double complex acc, off
    for b in range(d):
        acc = zz[b] * v[b]
        for q in range(n):
            shift = n - 1 - q
            m = (<Py_ssize_t>1) << shift
            bit = (b >> shift) & 1
            if bit:
                acc = acc - hz[q] * v[b]
                off = hx[q] + 1j * hy[q]
            else:
                acc = acc + hz[q] * v[b]
                off = hx[q] - 1j * hy[q]
            acc = acc + off * v[b ^ m]
        out[b] = acc


cdef void _step(double complex[::1] psi, double complex[::1] term,
                double complex[::1] tmp, const double[::1] hx,
                const double[::1] hy, const double[::1] hz,
                const double[::1] zz, double zz_norm, int n, Py_ssize_t d,
                double dt) noexcept nogil:
    cdef double nrm = zz_norm
    cdef int q, k, nsub, s
    cdef Py_ssize_t b
    cdef double h, tn
    cdef double complex c
    for q in range(n):
        nrm += sqrt(hx[q] * hx[q] + hy[q] * hy[q] + hz[q] * hz[q])
    nsub = <int>ceil(nrm * dt / STEP_NORM)
    if nsub < 1:
        nsub = 1
    h = dt / nsub
    for s in range(nsub):
        for b in range(d):
            term[b] = psi[b]
        for k in range(1, MAX_TERMS + 1):
            _apply_h(term, tmp, hx, hy, hz, zz, n, d)
            c = -1j * h / k
            tn = 0.0
            for b in range(d):
                term[b] = c * tmp[b]
                psi[b] = psi[b] + term[b]
                tn += fabs(term[b].real) + fabs(term[b].imag)
            if tn < TERM_TOL:
                break


cdef void _kick(double complex[::1] psi, int n, Py_ssize_t d, int qubit,
                const double complex[:, ::1] u) noexcept nogil:
    cdef int shift = n - 1 - qubit
    cdef Py_ssize_t m = (<Py_ssize_t>1) << shift
    cdef Py_ssize_t b
    cdef double complex v0, v1
    for b in range(d):
        if (b >> shift) & 1:
            continue
        v0 = psi[b]
        v1 = psi[b | m]
        psi[b] = u[0, 0] * v0 + u[0, 1] * v1
        psi[b | m] = u[1, 0] * v0 + u[1, 1] * v1


def propagate(psi0, hx, hy, hz, zz, double dt, ops, kick_qubits=None,
              kick_unitaries=None, int n_records=0):
    """Run an op stream on a copy of ``psi0``.

    Parameters
    ----------
    psi0 : (2**n,) complex array
    hx, hy, hz : (n_slices, n) float arrays of Pauli coefficients (rad/s)
    zz : (2**n,) float array, static diagonal energies (rad/s)
    dt : slice width (s)
    ops : (n_ops, 2) int array of (opcode, argument)
    kick_qubits : (n_kicks,) int array
    kick_unitaries : (n_kicks, 2, 2) complex array
    n_records : number of snapshot slots

    Returns
    -------
    (final_state, snapshots)
    """
    cdef double complex[::1] psi = np.array(psi0, dtype=np.complex128, copy=True)
    cdef Py_ssize_t d = psi.shape[0]
    cdef double[:, ::1] hxv = np.ascontiguousarray(hx, dtype=np.float64)
    cdef double[:, ::1] hyv = np.ascontiguousarray(hy, dtype=np.float64)
    cdef double[:, ::1] hzv = np.ascontiguousarray(hz, dtype=np.float64)
    cdef double[::1] zzv = np.ascontiguousarray(zz, dtype=np.float64)
    cdef long[:, ::1] opv = np.ascontiguousarray(ops, dtype=np.int64).reshape(-1, 2)
    cdef int n = hxv.shape[1]
    if kick_qubits is None:
        kick_qubits = np.zeros(0, dtype=np.int64)
        kick_unitaries = np.zeros((0, 2, 2), dtype=np.complex128)
    cdef long[::1] kq = np.ascontiguousarray(kick_qubits, dtype=np.int64)
    cdef double complex[:, :, ::1] ku = np.ascontiguousarray(kick_unitaries, dtype=np.complex128)
    snaps_arr = np.zeros((n_records, d), dtype=np.complex128)
    cdef double complex[:, ::1] snaps = snaps_arr
    cdef double complex[::1] term = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] tmp = np.empty(d, dtype=np.complex128)
    cdef double zz_norm = 0.0
    cdef Py_ssize_t b, i, n_ops = opv.shape[0]
    cdef long code, arg
    if (<Py_ssize_t>1) << n != d:
        raise ValueError("state dimension does not match qubit count")
    for b in range(d):
        if fabs(zzv[b]) > zz_norm:
            zz_norm = fabs(zzv[b])
    with nogil:
        for i in range(n_ops):
            code = opv[i, 0]
            arg = opv[i, 1]
            if code == 0:
                _step(psi, term, tmp, hxv[arg], hyv[arg], hzv[arg], zzv,
                      zz_norm, n, d, dt)
            elif code == 1:
                _kick(psi, n, d, <int>kq[arg], ku[arg])
            else:
                for b in range(d):
                    snaps[arg, b] = psi[b]
    return np.asarray(psi), snaps_arr
