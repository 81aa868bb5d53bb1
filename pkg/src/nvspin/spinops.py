"""Angular-momentum matrices for arbitrary spin and product-space embedding.

Operators are dimensionless (hbar = 1); basis states are ordered by
decreasing projection m = +S ... -S within each spin, and product spaces
order their factors slot-major (slot 0 outermost in the Kronecker product).
"""

from __future__ import annotations

import itertools

import numpy as np


def dimension(two_s: int) -> int:
    """Hilbert-space dimension 2S+1 of a spin with quantum number S = two_s/2."""
    _check_two_s(two_s)
    return two_s + 1


def projections(two_s: int) -> np.ndarray:
    """Projections m in decreasing order, +S ... -S."""
    _check_two_s(two_s)
    s = two_s / 2.0
    return s - np.arange(two_s + 1)


def spin_matrices(two_s: int):
    """Return (Sx, Sy, Sz, S2) for a spin with 2S = two_s.

    Sz is diagonal with entries +S ... -S; S2 = S(S+1) * identity.
    """
    m = projections(two_s)
    s = two_s / 2.0
    dim = two_s + 1
    sz = np.diag(m).astype(complex)
    # <m+1|S+|m> = sqrt(S(S+1) - m(m+1)); with m descending that sits on the
    # superdiagonal.
    raising = np.zeros((dim, dim), dtype=complex)
    amp = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    raising[np.arange(dim - 1), np.arange(1, dim)] = amp
    sx = (raising + raising.conj().T) / 2.0
    sy = (raising - raising.conj().T) / 2.0j
    s2 = s * (s + 1) * np.eye(dim, dtype=complex)
    return sx, sy, sz, s2


def spin_vector(two_s: int):
    """(Sx, Sy, Sz) as a length-3 tuple, for contractions with tensors."""
    sx, sy, sz, _ = spin_matrices(two_s)
    return sx, sy, sz


def embed(op: np.ndarray, slot: int, dims) -> np.ndarray:
    """Embed a single-spin operator into the product space.

    Acts as `op` on subspace `slot` and as the identity elsewhere; the result
    has dimension prod(dims).
    """
    dims = list(dims)
    if not 0 <= slot < len(dims):
        raise ValueError(f"slot {slot} out of range for dims {dims}")
    op = np.asarray(op, dtype=complex)
    if op.shape != (dims[slot], dims[slot]):
        raise ValueError(
            f"operator shape {op.shape} does not match dims[{slot}]={dims[slot]} "
            f"in dims {dims}"
        )
    out = np.eye(1, dtype=complex)
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == slot else np.eye(d, dtype=complex))
    return out


def product_basis(two_s_list):
    """All product-basis projection tuples, slot-major, m descending per slot.

    The i-th tuple labels the i-th basis state of the Kronecker-product space
    built by :func:`embed` with dims = [two_s+1 for each spin].
    """
    axes = [projections(two_s) for two_s in two_s_list]
    return list(itertools.product(*axes))


def _check_two_s(two_s) -> None:
    if int(two_s) != two_s or two_s < 0:
        raise ValueError(f"two_s must be a non-negative integer, got {two_s!r}")
