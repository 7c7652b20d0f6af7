"""Time evolution under ``exp(-iHt)`` with the tilt derivative carried along.

Two interchangeable engines:

``EigenPropagator``
    Full diagonalisation. Exact up to round-off and used both as the
    production path for small bases and as the oracle for the Krylov engine.

``KrylovPropagator``
    Short-step Krylov exponentials. Plain states use Lanczos; the pair
    ``(psi, dpsi)`` is advanced with Arnoldi on the block generator
    ``[[H, 0], [G, H]]``, which is exactly the derivative of ``H`` with
    respect to the tilt when ``G = dH/dh``.

One Krylov basis serves every grid point it can reach within tolerance, so
dense output grids cost little beyond the step-size control itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

logger = logging.getLogger(__name__)

NORM_TOL = 1e-10
DENSE_THRESHOLD = 1024
KRYLOV_DIM = 30
STEP_TOL = 1e-12
# eigenvalue gaps below this use the series form of the phase integral
NEAR_DEGENERATE = 1e-3


class PropagationError(RuntimeError):
    """Krylov stepping failed (breakdown, NaN, or step-size collapse)."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (at t={t:.6g})")
        self.t = t


@dataclass
class EvolvedPair:
    """State and tilt derivative at time ``t``."""

    t: float
    psi: np.ndarray
    dpsi: np.ndarray


def _check_grid(t_grid: Sequence[float]) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("empty time grid")
    if t[0] < 0 or np.any(np.diff(t) < 0):
        raise ValueError("time grid must be non-negative and ascending")
    return t


def _check_state(psi0: np.ndarray, D: int) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=np.complex128).ravel()
    if psi0.size != D:
        raise ValueError(f"state length {psi0.size} != dimension {D}")
    if abs(np.linalg.norm(psi0) - 1.0) > NORM_TOL:
        raise ValueError(f"initial state not normalised (norm={np.linalg.norm(psi0):.3e})")
    return psi0


def _phase_integral(omega: np.ndarray, t: float) -> np.ndarray:
    """``int_0^t exp(-i omega s) ds`` evaluated stably for small ``omega``."""
    z = -1j * omega * t
    out = np.full(z.shape, t, dtype=np.complex128)
    nz = z != 0
    out[nz] = t * np.expm1(z[nz]) / z[nz]
    return out


class EigenPropagator:
    """Exact propagation through the eigendecomposition of ``H``.

    Parameters
    ----------
    H : sparse or dense Hermitian matrix
    G : sparse or dense Hermitian matrix, optional
        Generator of the parameter derivative. Needed for ``pairs``/``qfi``.
    """

    def __init__(self, H, G=None):
        Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
        self.D = Hd.shape[0]
        self.energies, self.vectors = la.eigh(Hd)
        self._G = None if G is None else (G.toarray() if sp.issparse(G) else np.asarray(G))
        self._prepared_for: np.ndarray | None = None

    def evolve(self, psi0, t_grid) -> np.ndarray:
        psi0 = _check_state(psi0, self.D)
        t = _check_grid(t_grid)
        c = self.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(t, self.energies))
        out = (phases * c) @ self.vectors.T
        out[t == 0.0] = psi0  # exact, not a round trip through the eigenbasis
        return out

    def _prepare(self, psi0: np.ndarray) -> None:
        if self._G is None:
            raise ValueError("derivative propagation needs a generator G")
        if self._prepared_for is not None and np.array_equal(self._prepared_for, psi0):
            return
        V = self.vectors
        E = self.energies
        c = V.conj().T @ psi0
        Gt = V.conj().T @ self._G @ V
        M = Gt * c[None, :]
        omega = E[None, :] - E[:, None]  # omega[j, k] = E_k - E_j
        near = np.abs(omega) < NEAR_DEGENERATE
        B = np.zeros_like(M)
        far = ~near
        B[far] = M[far] / (-1j * omega[far])
        self._c = c
        self._B = B
        self._Bsum = B.sum(axis=1)
        jn, kn = np.nonzero(near)
        self._near = (jn, M[jn, kn], omega[jn, kn])
        self._prepared_for = psi0.copy()

    def _eigen_coefficients(self, t: np.ndarray, chunk: int = 256):
        """Yield ``(t_chunk, c(t), d(t))`` in the eigenbasis."""
        E = self.energies
        jn, mn, wn = self._near
        for start in range(0, t.size, chunk):
            tc = t[start : start + chunk]
            ph = np.exp(-1j * np.outer(E, tc))  # (D, T)
            far = self._B @ ph - ph * self._Bsum[:, None]
            near = np.zeros_like(far)
            for col, tk in enumerate(tc):
                np.add.at(near[:, col], jn, mn * _phase_integral(wn, tk))
            d = -1j * (far + ph * near)
            yield tc, ph * self._c[:, None], d

    def pairs(self, psi0, t_grid) -> Iterator[EvolvedPair]:
        psi0 = _check_state(psi0, self.D)
        t = _check_grid(t_grid)
        self._prepare(psi0)
        V = self.vectors
        for tc, cc, dd in self._eigen_coefficients(t):
            psi = V @ cc
            dpsi = V @ dd
            for k, tk in enumerate(tc):
                if tk == 0.0:
                    yield EvolvedPair(0.0, psi0.copy(), np.zeros_like(psi0))
                else:
                    yield EvolvedPair(float(tk), psi[:, k], dpsi[:, k])

    def qfi(self, psi0, t_grid) -> np.ndarray:
        """QFI at every grid time, computed without leaving the eigenbasis."""
        from .qfi import clamp_series

        psi0 = _check_state(psi0, self.D)
        t = _check_grid(t_grid)
        self._prepare(psi0)
        out = []
        for _, cc, dd in self._eigen_coefficients(t):
            dd_norm = np.einsum("ij,ij->j", dd.conj(), dd).real
            overlap = np.einsum("ij,ij->j", cc.conj(), dd)
            out.append(clamp_series(4.0 * (dd_norm - np.abs(overlap) ** 2), 4.0 * dd_norm))
        return np.concatenate(out)


def _lanczos(matvec, v, m, scale):
    """Lanczos with full reorthogonalisation. Returns (V, T, beta_next)."""
    D = v.size
    V = np.zeros((m + 1, D), dtype=np.complex128)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j > 0:
            w -= beta[j - 1] * V[j - 1]
        w -= V[: j + 1].T @ (V[: j + 1] @ w.conj()).conj()
        b = np.linalg.norm(w)
        beta[j] = b
        if b <= 1e-14 * scale:
            k = j + 1
            T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
            return V[:k], T.astype(np.complex128), 0.0
        V[j + 1] = w / b
    T = np.diag(alpha) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    return V[:m], T.astype(np.complex128), beta[m - 1]


def _arnoldi(matvec, v, m, scale):
    """Arnoldi with classical Gram-Schmidt applied twice. Returns (V, Hm, h_next)."""
    D = v.size
    V = np.zeros((m + 1, D), dtype=np.complex128)
    Hm = np.zeros((m + 1, m), dtype=np.complex128)
    V[0] = v
    for j in range(m):
        w = matvec(V[j])
        for _ in range(2):
            corr = (V[: j + 1] @ w.conj()).conj()
            w -= V[: j + 1].T @ corr
            Hm[: j + 1, j] += corr
        b = np.linalg.norm(w)
        Hm[j + 1, j] = b
        if b <= 1e-14 * scale:
            k = j + 1
            return V[:k], Hm[:k, :k], 0.0
        V[j + 1] = w / b
    return V[:m], Hm[:m, :m], Hm[m, m - 1].real


def _small_expm(Hm: np.ndarray, tau: float, h_next: float):
    """``exp(-i tau Hm) e1`` and the a-posteriori error estimate for this step."""
    k = Hm.shape[0]
    aug = np.zeros((k + 1, k + 1), dtype=np.complex128)
    aug[:k, :k] = -1j * tau * Hm
    aug[0, k] = 1.0
    E = la.expm(aug)
    y = E[:k, 0]
    # phi_1(-i tau Hm) e1 sits in the last column
    err = h_next * tau * abs(E[k - 1, k])
    return y, err


class KrylovPropagator:
    """Short-step Krylov propagation with adaptive step size.

    Parameters
    ----------
    H : sparse Hermitian matrix
    G : sparse Hermitian matrix, optional
    krylov_dim : int
        Maximum Krylov subspace dimension per step.
    tol : float
        Accepted local error per step, relative to the vector norm.
    """

    def __init__(self, H, G=None, krylov_dim: int = KRYLOV_DIM, tol: float = STEP_TOL,
                 max_steps: int = 10_000_000):
        self.H = sp.csr_matrix(H)
        self.D = self.H.shape[0]
        self.G = None if G is None else sp.csr_matrix(G)
        self.krylov_dim = int(krylov_dim)
        self.tol = float(tol)
        self.max_steps = int(max_steps)
        # spectral shift keeps phases small; undone exactly after each output
        absrow = np.asarray(abs(self.H).sum(axis=1)).ravel()
        diag = self.H.diagonal().real
        lo = np.min(diag - (absrow - np.abs(diag))) if self.D else 0.0
        hi = np.max(diag + (absrow - np.abs(diag))) if self.D else 0.0
        self.shift = 0.5 * (lo + hi)
        self._Hs = (self.H - self.shift * sp.identity(self.D, format="csr")).tocsr()
        self._Hs.sort_indices()
        self._scale = max(0.5 * (hi - lo), 1e-300)

    def _run(self, x0: np.ndarray, t: np.ndarray, matvec: Callable, hermitian: bool):
        m = min(self.krylov_dim, x0.size)
        now = 0.0
        x = x0.copy()
        out_i = 0
        tau = min(1.0 / self._scale, t[-1]) if t[-1] > 0 else 0.0
        steps = 0
        while out_i < t.size and t[out_i] <= 0.0:
            yield out_i, x.copy()
            out_i += 1
        while out_i < t.size:
            beta = np.linalg.norm(x)
            if not np.isfinite(beta):
                raise PropagationError("non-finite state encountered", now)
            if beta == 0.0:
                while out_i < t.size:
                    yield out_i, x.copy()
                    out_i += 1
                return
            builder = _lanczos if hermitian else _arnoldi
            V, Hm, h_next = builder(matvec, x / beta, m, self._scale)
            remaining = t[-1] - now
            tau = min(2.0 * tau, remaining)
            while True:
                y, err = _small_expm(Hm, tau, h_next)
                if err <= self.tol:
                    break
                tau *= 0.5
                if tau < 1e-15 * max(1.0, t[-1]):
                    raise PropagationError("step size collapsed", now)
            # emit grid points reachable with this basis
            while out_i < t.size and t[out_i] <= now + tau * (1 + 1e-14):
                dt = t[out_i] - now
                yk, _ = _small_expm(Hm, dt, 0.0)
                yield out_i, beta * (V.T @ yk)
                out_i += 1
            if out_i >= t.size:
                return
            x = beta * (V.T @ y)
            now += tau
            steps += 1
            self.steps_taken = steps
            if steps > self.max_steps:
                raise PropagationError("exceeded maximum number of steps", now)

    def evolve(self, psi0, t_grid) -> np.ndarray:
        psi0 = _check_state(psi0, self.D)
        t = _check_grid(t_grid)
        out = np.empty((t.size, self.D), dtype=np.complex128)
        for i, x in self._run(psi0, t, self._Hs.dot, hermitian=True):
            out[i] = x * np.exp(-1j * self.shift * t[i])
        return out

    def pairs(self, psi0, t_grid) -> Iterator[EvolvedPair]:
        if self.G is None:
            raise ValueError("derivative propagation needs a generator G")
        psi0 = _check_state(psi0, self.D)
        t = _check_grid(t_grid)
        D = self.D
        Hs = self._Hs
        # Centre G on its initial mean and scale the derivative block to O(1)
        # norm so the step error control sees psi and dpsi on equal footing.
        # The removed constant only adds -i g0 t psi, restored below.
        g0 = float(np.vdot(psi0, self.G @ psi0).real)
        Gc = (self.G - g0 * sp.identity(D, format="csr")).tocsr()
        gnorm = float(np.max(np.asarray(abs(Gc).sum(axis=1)).ravel())) if D else 0.0
        eps = 1.0 / max(1.0, t[-1] * gnorm)
        Ge = (eps * Gc).tocsr()

        def matvec(z):
            a, b = z[:D], z[D:]
            return np.concatenate([Hs @ a, Ge @ a + Hs @ b])

        x0 = np.concatenate([psi0, np.zeros(D, dtype=np.complex128)])
        for i, x in self._run(x0, t, matvec, hermitian=False):
            phase = np.exp(-1j * self.shift * t[i])
            psi = x[:D] * phase
            dpsi = x[D:] * (phase / eps) - 1j * g0 * t[i] * psi
            yield EvolvedPair(float(t[i]), psi, dpsi)

    def qfi(self, psi0, t_grid) -> np.ndarray:
        from .qfi import qfi_value

        return np.array([qfi_value(p.psi, p.dpsi) for p in self.pairs(psi0, t_grid)])


def make_propagator(H, G=None, method: str = "auto", dense_threshold: int = DENSE_THRESHOLD,
                    **krylov_kw):
    """Pick the dense engine for small bases, Krylov otherwise."""
    D = H.shape[0]
    if method == "auto":
        method = "dense" if D <= dense_threshold else "krylov"
    if method == "dense":
        return EigenPropagator(H, G)
    if method == "krylov":
        return KrylovPropagator(H, G, **krylov_kw)
    raise ValueError(f"unknown propagation method {method!r}")


def evolve(H, psi0, t_grid, method: str = "auto", dense_threshold: int = DENSE_THRESHOLD,
           **krylov_kw) -> np.ndarray:
    """``exp(-iHt) psi0`` at each grid time, as rows of a ``(len(t), D)`` array."""
    return make_propagator(H, None, method, dense_threshold, **krylov_kw).evolve(psi0, t_grid)


def evolve_with_derivative(H, G, psi0, t_grid, method: str = "auto",
                           dense_threshold: int = DENSE_THRESHOLD, **krylov_kw) -> list[EvolvedPair]:
    """Co-propagate the state and its derivative with respect to the coefficient of ``G``."""
    prop = make_propagator(H, G, method, dense_threshold, **krylov_kw)
    return list(prop.pairs(psi0, t_grid))
