"""Sparse operators on the truncated (cw photon) x (ccw photon) x (emitter) space.

Basis ordering is row-major over ``(n_cw, n_ccw, e)`` with ``e = 0`` the
ground state, so the flat index is ``(n_cw * (N + 1) + n_ccw) * 2 + e``.
Density operators are vectorized row-major as well (``rho.ravel()``), which
gives ``vec(A rho B) = kron(A, B.T) @ vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp

SLOTS = ("cw", "ccw", "emitter")
PRUNE_RELATIVE = 1e-15


def canonical(op) -> sp.csr_matrix:
    """Canonical CSR form: complex dtype, duplicates summed, tiny entries pruned, indices sorted."""
    m = sp.csr_matrix(op, dtype=complex)
    m.sum_duplicates()
    if m.nnz:
        cutoff = PRUNE_RELATIVE * np.abs(m.data).max()
        m.data[np.abs(m.data) <= cutoff] = 0.0
        m.eliminate_zeros()
    m.sort_indices()
    return m


def annihilation(n_max: int) -> sp.csr_matrix:
    """Truncated ladder operator with a|n> = sqrt(n)|n-1>, n = 0..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return canonical(sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, shape=(n_max + 1, n_max + 1)))


def number(n_max: int) -> sp.csr_matrix:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return canonical(sp.diags(np.arange(n_max + 1, dtype=float)))


def lowering_sigma() -> sp.csr_matrix:
    """Emitter lowering operator |g><e| (index 0 = ground)."""
    return canonical(sp.csr_matrix(([1.0], ([0], [1])), shape=(2, 2)))


@dataclass(frozen=True)
class HilbertLayout:
    n_max: int = 8

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_max + 1, self.n_max + 1, 2)

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1) ** 2

    def slot_index(self, slot) -> int:
        if isinstance(slot, str):
            if slot not in SLOTS:
                raise ValueError(f"unknown slot {slot!r}; expected one of {SLOTS}")
            return SLOTS.index(slot)
        if not 0 <= slot < 3:
            raise ValueError(f"slot index {slot} out of range")
        return int(slot)

    def quantum_numbers(self) -> np.ndarray:
        """(dim, 3) integer array of (n_cw, n_ccw, e) for every basis state."""
        return np.array(np.unravel_index(np.arange(self.dim), self.dims)).T

    def excitation_numbers(self) -> np.ndarray:
        return self.quantum_numbers().sum(axis=1)

    def index(self, n_cw: int, n_ccw: int, e: int) -> int:
        return int(np.ravel_multi_index((n_cw, n_ccw, e), self.dims))


def embed(op, slot, layout: HilbertLayout) -> sp.csr_matrix:
    """Lift a single-factor operator into the composite space (identity elsewhere)."""
    k = layout.slot_index(slot)
    op = sp.csr_matrix(op)
    if op.shape != (layout.dims[k],) * 2:
        raise ValueError(f"operator shape {op.shape} does not match slot {SLOTS[k]} of dimension {layout.dims[k]}")
    factors = [sp.identity(n, format="csr", dtype=complex) for n in layout.dims]
    factors[k] = op
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return canonical(out)


@dataclass(frozen=True)
class ModeOperators:
    """The three ladder operators of a layout, embedded in the composite space."""

    a_cw: sp.csr_matrix
    a_ccw: sp.csr_matrix
    sigma: sp.csr_matrix

    @classmethod
    def for_layout(cls, layout: HilbertLayout) -> "ModeOperators":
        a = annihilation(layout.n_max)
        return cls(embed(a, "cw", layout), embed(a, "ccw", layout), embed(lowering_sigma(), "emitter", layout))


def dagger(op) -> sp.csr_matrix:
    return canonical(op.conj().T)


def lindblad_superoperator(hamiltonian, collapse_ops: Sequence = ()) -> sp.csr_matrix:
    """Generator L with vec(d rho/dt) = L @ vec(rho) for the Lindblad equation.

    d rho/dt = -i[H, rho] + sum_k (C rho C^+ - 1/2 {C^+ C, rho}).
    """
    h = sp.csr_matrix(hamiltonian, dtype=complex)
    d = h.shape[0]
    if h.shape != (d, d):
        raise ValueError("Hamiltonian must be square")
    eye = sp.identity(d, format="csr", dtype=complex)
    out = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for c in collapse_ops:
        c = sp.csr_matrix(c, dtype=complex)
        if c.shape != (d, d):
            raise ValueError(f"collapse operator shape {c.shape} does not match Hamiltonian dimension {d}")
        cdc = c.conj().T @ c
        out = out + sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
    return canonical(out)


def apply_superoperator(superop, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (superop @ np.asarray(rho).ravel()).reshape(d, d)


def dump_coo(op, stream: TextIO) -> None:
    """Write an operator as 'row col re im' lines in canonical order."""
    m = canonical(op).tocoo()
    order = np.lexsort((m.col, m.row))
    for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
        stream.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def load_coo(stream: TextIO, dim: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        r, c, re_, im_ = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re_), float(im_)))
    return canonical(sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim)))
