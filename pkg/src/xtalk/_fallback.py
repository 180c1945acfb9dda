"""Pure-numpy implementation of the propagation kernel.

Same contract as the compiled ``xtalk._kernels.propagate``: consecutive slices
are exponentiated densely in batches (Hermitian eigendecomposition), kicks act
on single qubits, and record ops copy the current state into a snapshot row.
"""
from functools import lru_cache

import numpy as np

OP_SLICE = 0
OP_KICK = 1
OP_RECORD = 2

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# bound on (chunk * d * d) complex entries held at once
_CHUNK_ENTRIES = 1 << 21


@lru_cache(maxsize=16)
def _embedded_paulis(n):
    """(3, n, d, d) array of single-qubit Paulis embedded in n qubits."""
    d = 1 << n
    out = np.zeros((3, n, d, d), dtype=complex)
    for a, key in enumerate("xyz"):
        for q in range(n):
            op = np.ones((1, 1), dtype=complex)
            for k in range(n):
                op = np.kron(op, _PAULI[key] if k == q else np.eye(2))
            out[a, q] = op
    return out


def _slice_unitaries(hx, hy, hz, zz, dt):
    n = hx.shape[1]
    paulis = _embedded_paulis(n)
    h = (np.einsum("sq,qij->sij", hx, paulis[0])
         + np.einsum("sq,qij->sij", hy, paulis[1])
         + np.einsum("sq,qij->sij", hz, paulis[2]))
    idx = np.arange(zz.size)
    h[:, idx, idx] += zz
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)[:, None, :]) @ v.conj().transpose(0, 2, 1)


def _kick(psi, n, qubit, u):
    t = psi.reshape((1 << qubit, 2, -1))
    t = np.einsum("ab,ibj->iaj", u, t)
    return t.reshape(-1)


def propagate(psi0, hx, hy, hz, zz, dt, ops, kick_qubits=None,
              kick_unitaries=None, n_records=0):
    psi = np.array(psi0, dtype=complex, copy=True)
    hx = np.asarray(hx, dtype=float)
    hy = np.asarray(hy, dtype=float)
    hz = np.asarray(hz, dtype=float)
    zz = np.asarray(zz, dtype=float)
    ops = np.asarray(ops, dtype=np.int64).reshape(-1, 2)
    n = hx.shape[1]
    d = psi.size
    if 1 << n != d:
        raise ValueError("state dimension does not match qubit count")
    snaps = np.zeros((n_records, d), dtype=complex)
    chunk = max(1, _CHUNK_ENTRIES // (d * d))

    i = 0
    while i < len(ops):
        code, arg = ops[i]
        if code == OP_SLICE:
            j = i
            while j < len(ops) and ops[j, 0] == OP_SLICE:
                j += 1
            idx = ops[i:j, 1]
            for start in range(0, idx.size, chunk):
                sel = idx[start:start + chunk]
                us = _slice_unitaries(hx[sel], hy[sel], hz[sel], zz, dt)
                for u in us:
                    psi = u @ psi
            i = j
            continue
        if code == OP_KICK:
            psi = _kick(psi, n, int(kick_qubits[arg]), kick_unitaries[arg])
        else:
            snaps[arg] = psi
        i += 1
    return psi, snaps
