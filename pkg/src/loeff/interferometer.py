"""Mode unitaries and their action on truncated Fock space.

Convention: an interferometer ``U`` sends a photon entering mode ``j`` to
``sum_i U[i, j] |1_i>``, equivalently ``a'_i = sum_j U[i, j] a_j``. The
two-mode beam splitter is

    a'_1 =  cos(theta) a_1 + exp(i phi) sin(theta) a_2
    a'_2 = -exp(-i phi) sin(theta) a_1 + cos(theta) a_2

so ``beamsplitter(-pi/4)`` (or ``theta=pi/4, phi=pi``) maps ``|1,0>`` to
``(|1,0> + |0,1>)/sqrt(2)``.

Unitaries are lifted by factoring them into a triangular mesh of beam
splitters and a diagonal of phases, lifting each element with closed-form
number-basis matrix elements and composing. The lift is exact on every
sector whose total photon number does not exceed the per-mode cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from loeff.errors import ConfigurationError
from loeff.fock import MultiModeState, TruncationSpec

UNITARY_TOL = 1e-10


def as_mode_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> np.ndarray:
    """Validate an ``N x N`` unitary on mode operators."""
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] == 0:
        raise ConfigurationError(f"mode unitary must be a non-empty square matrix, got shape {u.shape}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if dev > tol:
        raise ConfigurationError(f"matrix is not unitary (max deviation {dev:.3g})")
    return u


def beamsplitter(theta: float, phi: float = 0.0, modes: tuple[int, int] = (0, 1), num_modes: int = 2) -> np.ndarray:
    """Beam splitter on ``modes`` embedded in ``num_modes`` modes."""
    i, j = modes
    if i == j or not (0 <= i < num_modes and 0 <= j < num_modes):
        raise ConfigurationError(f"invalid beam splitter modes {modes} for {num_modes} modes")
    u = np.eye(num_modes, dtype=np.complex128)
    c, s = math.cos(theta), math.sin(theta)
    u[i, i] = c
    u[i, j] = np.exp(1j * phi) * s
    u[j, i] = -np.exp(-1j * phi) * s
    u[j, j] = c
    return u


def phase(mode: int, phi: float, num_modes: int) -> np.ndarray:
    if not 0 <= mode < num_modes:
        raise ConfigurationError(f"invalid phase mode {mode} for {num_modes} modes")
    u = np.eye(num_modes, dtype=np.complex128)
    u[mode, mode] = np.exp(1j * phi)
    return u


def haar_random(num_modes: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a complex Ginibre matrix."""
    rng = np.random.default_rng(rng)
    z = (rng.standard_normal((num_modes, num_modes)) + 1j * rng.standard_normal((num_modes, num_modes))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    ph = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * ph


@dataclass(frozen=True)
class MeshElement:
    """One beam splitter ``beamsplitter(theta, phi, (i, j))`` of a mesh."""

    i: int
    j: int
    theta: float
    phi: float


def mesh_decompose(u: np.ndarray) -> tuple[list[MeshElement], np.ndarray]:
    """Factor ``u = B_1 B_2 ... B_m D`` with beam splitters ``B`` on adjacent modes.

    Returns the beam splitters in left-to-right order and the diagonal phases
    ``D`` (as a vector). Uses Givens nulling of the sub-diagonal column by
    column (a triangular mesh).
    """
    u = as_mode_unitary(u)
    n = u.shape[0]
    v = u.copy()
    nulling: list[MeshElement] = []
    for col in range(n - 1):
        for row in range(n - 1, col, -1):
            x, y = v[row - 1, col], v[row, col]
            if abs(y) < 1e-300:
                continue
            theta = math.atan2(abs(y), abs(x))
            phi = float(np.angle(x) - np.angle(y)) if abs(x) > 0 else -float(np.angle(y))
            g = beamsplitter(theta, phi, (row - 1, row), n)
            v = g @ v
            v[row, col] = 0.0
            nulling.append(MeshElement(row - 1, row, theta, phi))
    # G_m ... G_1 u = D, so u = G_1^dag ... G_m^dag D and B(theta, phi)^dag = B(-theta, phi)
    elements = [MeshElement(e.i, e.j, -e.theta, e.phi) for e in nulling]
    return elements, np.diag(v).copy()


def compose_mesh(elements: Sequence[MeshElement], phases: np.ndarray) -> np.ndarray:
    n = len(phases)
    u = np.eye(n, dtype=np.complex128)
    for e in elements:
        u = u @ beamsplitter(e.theta, e.phi, (e.i, e.j), n)
    return u @ np.diag(phases)


@lru_cache(maxsize=256)
def _two_mode_block(b_bytes: bytes, cutoff: int) -> np.ndarray:
    """Fock tensor ``T[m1, m2, n1, n2]`` of a 2x2 mode unitary, truncated per mode.

    ``B (a_1^dag)^n1 (a_2^dag)^n2 |0> / sqrt(n1! n2!)`` expanded with the
    binomial theorem, using ``a_j^dag -> B[0, j] a_1^dag + B[1, j] a_2^dag``.
    """
    b = np.frombuffer(b_bytes, dtype=np.complex128).reshape(2, 2)
    d = cutoff + 1
    t = np.zeros((d, d, d, d), dtype=np.complex128)
    fact = [math.factorial(k) for k in range(2 * d)]
    for n1 in range(d):
        for n2 in range(d):
            norm = 1.0 / math.sqrt(fact[n1] * fact[n2])
            for k in range(n1 + 1):
                ck = math.comb(n1, k) * b[0, 0] ** k * b[1, 0] ** (n1 - k)
                for l in range(n2 + 1):
                    m1 = k + l
                    m2 = n1 + n2 - m1
                    if m1 >= d or m2 >= d:
                        continue
                    coeff = ck * math.comb(n2, l) * b[0, 1] ** l * b[1, 1] ** (n2 - l)
                    t[m1, m2, n1, n2] += coeff * math.sqrt(fact[m1] * fact[m2]) * norm
    return t


def _apply_two_mode(vecs: np.ndarray, block: np.ndarray, i: int, j: int, num_modes: int) -> np.ndarray:
    """Apply a two-mode Fock tensor to the mode axes ``i, j`` of ``vecs`` (extra trailing axes allowed)."""
    out = np.tensordot(block, vecs, axes=([2, 3], [i, j]))
    return np.moveaxis(out, [0, 1], [i, j])


def _apply_phases(vecs: np.ndarray, phases: np.ndarray, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    out = vecs
    for mode, ph in enumerate(phases):
        shape = [1] * vecs.ndim
        shape[mode] = cutoff + 1
        out = out * (ph**n).reshape(shape)
    return out


def apply_mode_unitary_to_vectors(u: np.ndarray, vecs: np.ndarray, trunc: TruncationSpec) -> np.ndarray:
    """Act with ``lift(u)`` on the columns of ``vecs`` (shape ``(dim, k)``)."""
    elements, phases = mesh_decompose(u)
    k = vecs.shape[1]
    t = vecs.reshape(trunc.shape + (k,))
    t = _apply_phases(t, phases, trunc.cutoff)
    for e in reversed(elements):
        b = beamsplitter(e.theta, e.phi, (0, 1), 2)
        t = _apply_two_mode(t, _two_mode_block(b.tobytes(), trunc.cutoff), e.i, e.j, trunc.num_modes)
    return t.reshape(trunc.dim, k)


@lru_cache(maxsize=128)
def _lift_cached(u_bytes: bytes, n: int, cutoff: int) -> np.ndarray:
    u = np.frombuffer(u_bytes, dtype=np.complex128).reshape(n, n)
    trunc = TruncationSpec(n, cutoff)
    out = apply_mode_unitary_to_vectors(u, np.eye(trunc.dim, dtype=np.complex128), trunc)
    out.setflags(write=False)
    return out


def lift_interferometer(u: np.ndarray, trunc: TruncationSpec) -> np.ndarray:
    """Fock-space matrix of the interferometer ``u``.

    Matrix elements between different total photon numbers are exactly
    zero. Sectors with total photon number above the cutoff are only
    partially represented and are not unitary there.
    """
    u = as_mode_unitary(u)
    if u.shape[0] != trunc.num_modes:
        raise ConfigurationError(f"unitary acts on {u.shape[0]} modes, truncation has {trunc.num_modes}")
    return _lift_cached(np.ascontiguousarray(u).tobytes(), trunc.num_modes, trunc.cutoff)


def apply_interferometer(s: MultiModeState, u: np.ndarray) -> MultiModeState:
    """``lift(u) rho lift(u)^dag``."""
    lifted = lift_interferometer(u, s.trunc)
    m = lifted @ s.matrix @ lifted.conj().T
    return MultiModeState(
        s.trunc,
        m,
        subnormalized=s.subnormalized,
        truncated_weight=s.truncated_weight,
        validate=False,
    )


def embed(u: np.ndarray, num_modes: int, modes: Sequence[int] | None = None) -> np.ndarray:
    """Embed a ``k x k`` unitary on ``modes`` (default: the first ``k``) into ``num_modes`` modes."""
    k = u.shape[0]
    modes = list(range(k)) if modes is None else list(modes)
    out = np.eye(num_modes, dtype=np.complex128)
    out[np.ix_(modes, modes)] = u
    return out


def permutation_unitary(order: Sequence[int]) -> np.ndarray:
    """Unitary moving old mode ``order[i]`` to new mode ``i``."""
    n = len(order)
    p = np.zeros((n, n), dtype=np.complex128)
    for new, old in enumerate(order):
        p[new, old] = 1.0
    return p
