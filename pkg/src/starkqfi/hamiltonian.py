"""Sparse Stark Bose-Hubbard operators in the Fock basis.

The Hamiltonian is assembled as ``J * H_hop + U * H_int + h * G`` with

* ``H_hop = -sum_l (b+_l b_{l+1} + h.c.)`` over open-boundary bonds,
* ``H_int = 1/2 sum_l n_l (n_l - 1)``,
* ``G = sum_l l n_l`` with ``l`` counted from 0 at the lowest site.

``G`` is also the derivative of the Hamiltonian with respect to the tilt, so
it doubles as the generator in the QFI calculation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the tilted Bose-Hubbard chain (energies in units of J by default)."""

    L: int
    N: int
    J: float = 1.0
    U: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if self.L < 1 or self.N < 0:
            raise ValueError(f"invalid lattice (L={self.L}, N={self.N})")
        if self.J < 0:
            raise ValueError(f"tunnelling must be non-negative, got J={self.J}")
        for name in ("J", "U", "h"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})


def _csr(data, rows, cols, D) -> sp.csr_matrix:
    mat = sp.csr_matrix((data, (rows, cols)), shape=(D, D), dtype=np.complex128)
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def hopping_operator(basis: FockBasis) -> sp.csr_matrix:
    """``-sum_l (b+_l b_{l+1} + b+_{l+1} b_l)`` with bosonic amplitudes."""
    states = basis.states
    D = basis.dimension
    rows, cols, vals = [], [], []
    for l in range(basis.L - 1):
        # move one boson from site l+1 down to site l
        src = np.nonzero(states[:, l + 1] > 0)[0]
        if src.size == 0:
            continue
        n_from = states[src, l + 1]
        n_to = states[src, l]
        target = states[src].copy()
        target[:, l + 1] -= 1
        target[:, l] += 1
        dst = basis.rank_many(target)
        amp = -np.sqrt(n_from * (n_to + 1.0))
        rows += [dst, src]
        cols += [src, dst]
        vals += [amp, amp]
    if not rows:
        return sp.csr_matrix((D, D), dtype=np.complex128)
    return _csr(np.concatenate(vals), np.concatenate(rows), np.concatenate(cols), D)


def interaction_diagonal(basis: FockBasis) -> np.ndarray:
    n = basis.states
    return 0.5 * (n * (n - 1)).sum(axis=1).astype(float)


def gradient_diagonal(basis: FockBasis) -> np.ndarray:
    """Per-state value of ``sum_l l n_l``."""
    return (basis.states @ np.arange(basis.L)).astype(float)


def _diag(values: np.ndarray) -> sp.csr_matrix:
    D = values.size
    idx = np.arange(D)
    return _csr(values.astype(np.complex128), idx, idx, D)


def build_gradient_generator(basis: FockBasis) -> sp.csr_matrix:
    """Diagonal operator ``G = dH/dh = sum_l l n_l``."""
    return _diag(gradient_diagonal(basis))


def build_hamiltonian(params: ModelParams, basis: FockBasis | None = None) -> sp.csr_matrix:
    if basis is None:
        basis = FockBasis(params.L, params.N)
    if (basis.L, basis.N) != (params.L, params.N):
        raise ValueError(
            f"basis (L={basis.L}, N={basis.N}) does not match params "
            f"(L={params.L}, N={params.N})"
        )
    diag = params.U * interaction_diagonal(basis) + params.h * gradient_diagonal(basis)
    H = _diag(diag)
    if params.J != 0.0 and basis.L > 1:
        H = H + params.J * hopping_operator(basis)
    H = H.tocsr()
    H.sort_indices()
    return H


def apply(H: sp.spmatrix, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product; CSR rows are summed in ascending column order."""
    v = np.asarray(v)
    if v.shape[0] != H.shape[1]:
        raise ValueError(f"vector length {v.shape[0]} != operator dimension {H.shape[1]}")
    return H @ v


def is_hermitian(H: sp.spmatrix, atol: float = 1e-14) -> bool:
    diff = (H - H.getH()).tocoo()
    return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= atol


def export_triplets(H: sp.spmatrix, path: str | Path) -> None:
    """Debug dump: one ``row col re im`` line per nonzero, sorted by (row, col)."""
    coo = H.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for k in order:
            z = coo.data[k]
            fh.write(f"{coo.row[k]} {coo.col[k]} {z.real:.17g} {z.imag:.17g}\n")
