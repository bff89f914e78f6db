"""Matrix constructions bounding the output efficiency of LO processing.

Given the merged interferometer ``U`` (processing after generation), the
per-mode transmissivities ``p`` and the number ``M`` of kept modes, the
vacuum coupling matrix ``A[i, j] = U[i, j] sqrt(1 - p[j])`` is factored as
``A = R Q`` (``R`` upper triangular, ``Q`` unitary). An SVD of the top-left
``M x M`` block of ``R`` gives ``R = X^dag R' Q'`` with ``X, Q'`` acting only
on that block. Appending ``X`` to the kept modes exposes independent vacuum
admixtures of strength ``|R'_kk|^2``, i.e. loss channels with
transmissivities ``p''_k = 1 - |R'_kk|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from loeff.channels import as_loss_vector
from loeff.errors import ConfigurationError
from loeff.interferometer import as_mode_unitary, embed

RANK_TOL = 1e-12
MAJORIZATION_TOL = 1e-9


def rq_decompose(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``a = r @ q`` with ``r`` upper triangular (real non-negative diagonal) and ``q`` unitary.

    Computed from the QR factorization of the row-reversed conjugate
    transpose. Rank-deficient inputs are fine: zero rows of ``r`` keep the
    completed orthonormal rows of ``q``.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"rq_decompose needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    flip = a[::-1, :]
    q1, r1 = np.linalg.qr(flip.conj().T, mode="complete")
    # flip = r1^H q1^H  =>  a = (J r1^H J)(J q1^H)
    r = r1.conj().T[::-1, ::-1]
    q = q1.conj().T[::-1, :]
    r = np.triu(r)
    diag = np.diag(r)
    ph = np.ones(n, dtype=np.complex128)
    nz = np.abs(diag) > 0
    ph[nz] = diag[nz] / np.abs(diag[nz])
    # r q = (r D^*)(D q) with D = diag(ph)
    r = r * ph.conj()[np.newaxis, :]
    q = ph[:, np.newaxis] * q
    r[np.diag_indices(n)] = np.abs(np.diag(r))
    return r, q


def block_svd(r: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``r = x^dag @ r_prime @ q_prime`` with the top-left ``m x m`` block of ``r_prime`` diagonal.

    ``x`` and ``q_prime`` are the identity outside that block. The diagonal
    singular values are sorted ascending (so ``1 - s**2`` is non-increasing)
    and values below ``RANK_TOL`` are set to zero.
    """
    r = np.asarray(r, dtype=np.complex128)
    n = r.shape[0]
    if not 0 <= m <= n:
        raise ConfigurationError(f"block size {m} invalid for a {n}x{n} matrix")
    if m == 0:
        return np.eye(n, dtype=np.complex128), r.copy(), np.eye(n, dtype=np.complex128)
    block = r[:m, :m]
    if np.allclose(block, np.diag(np.diag(block)), atol=0, rtol=0):
        d = np.diag(block)
        if np.all(d.imag == 0) and np.all(d.real >= 0) and np.all(np.diff(d.real) >= 0):
            return np.eye(n, dtype=np.complex128), r.copy(), np.eye(n, dtype=np.complex128)
    w, s, vh = np.linalg.svd(block)
    order = np.argsort(s, kind="stable")
    w, s, vh = w[:, order], s[order], vh[order, :]
    x = embed(w.conj().T, n)
    q_prime = embed(vh, n)
    r_prime = x @ r @ q_prime.conj().T
    r_prime[:m, :m] = np.diag(np.where(s < RANK_TOL, 0.0, s))
    # rows below the block in the first m columns vanish because r is triangular
    r_prime[m:, :m] = 0.0
    return x, r_prime, q_prime


@dataclass(frozen=True, eq=False)
class ProofTrace:
    """Every matrix produced while bounding the output efficiency."""

    U: np.ndarray
    p: np.ndarray
    M: int
    K: int
    R: np.ndarray
    Q: np.ndarray
    X: np.ndarray
    Rprime: np.ndarray
    Qprime: np.ndarray
    Qdoubleprime: np.ndarray
    Uprime: np.ndarray
    p_out: np.ndarray

    @property
    def X_block(self) -> np.ndarray:
        """``X`` restricted to the kept modes."""
        return self.X[: self.M, : self.M]

    @property
    def certified_bound(self) -> float:
        return float(np.sum(self.p_out[: self.K]))

    @property
    def input_sum(self) -> float:
        return top_k_sum(self.p, self.K)

    @property
    def slack(self) -> float:
        return self.input_sum - self.certified_bound

    def residuals(self) -> dict[str, float]:
        """Reconstruction errors of the defining identities."""
        a = self.U * np.sqrt(1.0 - self.p)[np.newaxis, :]
        n = self.U.shape[0]
        eye = np.eye(n)
        rp_formula = self.Uprime @ np.diag(np.sqrt(1.0 - self.p)) @ self.Qdoubleprime.conj().T
        return {
            "rq": float(np.max(np.abs(self.R @ self.Q - a))),
            "triangular": float(np.max(np.abs(np.tril(self.R, -1)), initial=0.0)),
            "svd": float(np.max(np.abs(self.X.conj().T @ self.Rprime @ self.Qprime - self.R))),
            "q_unitary": float(np.max(np.abs(self.Q.conj().T @ self.Q - eye))),
            "rprime_formula": float(np.max(np.abs(rp_formula - self.Rprime))),
        }


def top_k_sum(x: np.ndarray, k: int) -> float:
    """Sum of the ``k`` largest entries."""
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    return float(np.sum(x[:k]))


def output_transmissivities(u: np.ndarray, p: np.ndarray, m: int, k: int) -> ProofTrace:
    """Build the full trace for merged interferometer ``u``, losses ``p``, ``m`` kept and ``k`` counted modes.

    The kept modes are the first ``m`` output modes of ``u``.
    """
    u = as_mode_unitary(u)
    n = u.shape[0]
    p = as_loss_vector(p, n)
    if not (1 <= m <= n):
        raise ConfigurationError(f"kept-mode count {m} must lie in [1, {n}]")
    if not (1 <= k <= m):
        raise ConfigurationError(f"counted-mode count {k} must lie in [1, {m}]")
    a = u * np.sqrt(1.0 - p)[np.newaxis, :]
    r, q = rq_decompose(a)
    x, r_prime, q_prime = block_svd(r, m)
    p_out = np.clip(1.0 - np.abs(np.diag(r_prime)[:m]) ** 2, 0.0, 1.0)
    return ProofTrace(
        U=u,
        p=p,
        M=m,
        K=k,
        R=r,
        Q=q,
        X=x,
        Rprime=r_prime,
        Qprime=q_prime,
        Qdoubleprime=q_prime @ q,
        Uprime=x @ u,
        p_out=p_out,
    )


def is_doubly_stochastic(b: np.ndarray, tol: float = 1e-9) -> bool:
    b = np.asarray(b)
    if b.ndim != 2 or b.shape[0] != b.shape[1] or np.iscomplexobj(b) and np.any(np.abs(b.imag) > tol):
        return False
    b = np.real(b)
    return bool(
        np.all(b >= -tol)
        and np.all(np.abs(b.sum(axis=0) - 1) <= tol)
        and np.all(np.abs(b.sum(axis=1) - 1) <= tol)
    )


def majorization_slack(x: np.ndarray, y: np.ndarray) -> float:
    """``min_K [sum of K largest of y - sum of K largest of x]``; shorter vectors are zero-padded."""
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    y = np.sort(np.asarray(y, dtype=float))[::-1]
    n = max(x.size, y.size)
    x = np.pad(x, (0, n - x.size))
    y = np.pad(y, (0, n - y.size))
    if n == 0:
        return 0.0
    return float(np.min(np.cumsum(y) - np.cumsum(x)))


def weak_majorization_holds(x: np.ndarray, y: np.ndarray, tol: float = MAJORIZATION_TOL) -> bool:
    """True iff every partial sum of the largest entries of ``x`` is bounded by that of ``y``."""
    return majorization_slack(x, y) >= -tol


def averaged_transmissivities(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``sum_j p_j |q[l, j]|^2`` for every row ``l``."""
    return (np.abs(np.asarray(q)) ** 2) @ np.asarray(p, dtype=float)
