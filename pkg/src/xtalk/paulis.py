"""Dense Pauli operators on small registers (qubit 0 = most significant)."""
from functools import lru_cache
from itertools import product

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z, "x": X, "y": Y, "z": Z}
AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def kron_all(ops):
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def embed(op, qubit, n):
    """Single-qubit ``op`` acting on ``qubit`` of an ``n``-qubit register."""
    return kron_all([op if k == qubit else I2 for k in range(n)])


@lru_cache(maxsize=64)
def sigma(axis, qubit, n):
    """sigma^axis on ``qubit`` (axis in 'x', 'y', 'z'); cached, do not mutate."""
    out = embed(SINGLE[axis], qubit, n)
    out.setflags(write=False)
    return out


def pauli_string(label):
    """Dense matrix for a label such as ``"XIZ"``."""
    return kron_all([SINGLE[c] for c in label])


def pauli_labels(n):
    return ("".join(p) for p in product("IXYZ", repeat=n))


def pauli_expand(rho, tol=1e-14):
    """Coefficients ``c_P = Tr[rho P] / 2^n`` of the non-negligible Pauli strings."""
    rho = np.asarray(rho)
    n = int(round(np.log2(rho.shape[0])))
    out = {}
    for label in pauli_labels(n):
        c = np.trace(rho @ pauli_string(label)) / 2 ** n
        if abs(c) > tol:
            out[label] = c.real if abs(c.imag) < tol else c
    return out


def commutation_sign(label, axis, qubit):
    """+1 if the Pauli string commutes with sigma^axis_qubit, -1 otherwise."""
    c = label[qubit]
    return 1 if c == "I" or c.lower() == axis else -1


def product_state(single_states):
    """Kronecker product of single-qubit state vectors."""
    return kron_all([np.asarray(s, dtype=complex).reshape(-1, 1) for s in single_states]).ravel()


def xy_state(phi):
    """(|0> + e^{i phi} |1>) / sqrt(2): Bloch vector in the xy-plane at azimuth phi."""
    return np.array([1.0, np.exp(1j * phi)], dtype=complex) / np.sqrt(2)


def bell_state(kind="phi+"):
    s = 1 / np.sqrt(2)
    table = {
        "phi+": [s, 0, 0, s], "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0], "psi-": [0, s, -s, 0],
    }
    return np.array(table[kind], dtype=complex)


def w_state():
    v = np.zeros(8, dtype=complex)
    v[[1, 2, 4]] = 1 / np.sqrt(3)
    return v
