"""Independent reference implementations used only by the tests.

None of these share code with the package beyond building inputs: loss is
obtained from an explicit beam-splitter dilation, interferometer amplitudes
from permanents, partial traces from explicit loops.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import expm


def annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), 1)


def loss_by_dilation(rho: np.ndarray, p: float) -> np.ndarray:
    """Single-mode loss: mix with a vacuum environment on a beam splitter and trace it out."""
    d = rho.shape[0]
    a = np.kron(annihilation(d), np.eye(d))
    b = np.kron(np.eye(d), annihilation(d))
    theta = math.acos(math.sqrt(p))
    u = expm(theta * (a.conj().T @ b - a @ b.conj().T))
    env = np.zeros((d, d))
    env[0, 0] = 1.0
    joint = u @ np.kron(rho, env) @ u.conj().T
    return np.einsum("ajbj->ab", joint.reshape(d, d, d, d))


def loss_kraus(p: float, d: int) -> list[np.ndarray]:
    """Kraus operators ``A_k |n> = sqrt(C(n,k) p^(n-k) (1-p)^k) |n-k>``."""
    ops = []
    for k in range(d):
        a = np.zeros((d, d))
        for n in range(k, d):
            a[n - k, n] = math.sqrt(math.comb(n, k) * p ** (n - k) * (1 - p) ** k)
        ops.append(a)
    return ops


def embed_on_mode(op: np.ndarray, mode: int, num_modes: int) -> np.ndarray:
    d = op.shape[0]
    out = np.eye(1)
    for j in range(num_modes):
        out = np.kron(out, op if j == mode else np.eye(d))
    return out


def loss_on_mode_kraus(rho: np.ndarray, mode: int, num_modes: int, p: float) -> np.ndarray:
    d = round(rho.shape[0] ** (1 / num_modes))
    out = np.zeros_like(rho, dtype=np.complex128)
    for a in loss_kraus(p, d):
        big = embed_on_mode(a, mode, num_modes)
        out += big @ rho @ big.conj().T
    return out


def closed_form_inverse(rho: np.ndarray, p: float) -> np.ndarray:
    """Single-mode inverse loss: the forward number-basis formula with ``p -> 1/p``, element by element."""
    d = rho.shape[0]
    eta = 1.0 / p
    out = np.zeros_like(rho, dtype=np.complex128)
    for n in range(d):
        for m in range(d):
            for k in range(min(n, m) + 1):
                c = math.sqrt(math.comb(n, k) * math.comb(m, k))
                out[n - k, m - k] += c * eta ** ((n + m) / 2 - k) * (1 - eta) ** k * rho[n, m]
    return out


def backsub_inverse(rho: np.ndarray, p: float) -> np.ndarray:
    """Single-mode inverse loss by back-substitution from the highest photon numbers."""
    d = rho.shape[0]
    out = np.zeros_like(rho, dtype=np.complex128)
    for a in range(d - 1, -1, -1):
        for b in range(d - 1, -1, -1):
            acc = rho[a, b]
            for k in range(1, d - max(a, b)):
                c = math.sqrt(math.comb(a + k, k) * math.comb(b + k, k))
                acc -= c * p ** ((a + b) / 2) * (1 - p) ** k * out[a + k, b + k]
            out[a, b] = acc / p ** ((a + b) / 2)
    return out


def permanent(m: np.ndarray) -> complex:
    n = m.shape[0]
    if n == 0:
        return 1.0
    return sum(np.prod([m[i, s[i]] for i in range(n)]) for s in itertools.permutations(range(n)))


def fock_amplitude(u: np.ndarray, out_ns: tuple[int, ...], in_ns: tuple[int, ...]) -> complex:
    """``<out| lift(u) |in>`` with photons in mode ``j`` mapped to ``sum_i u[i, j] |1_i>``."""
    if sum(out_ns) != sum(in_ns):
        return 0.0
    rows = [i for i, c in enumerate(out_ns) for _ in range(c)]
    cols = [j for j, c in enumerate(in_ns) for _ in range(c)]
    norm = math.sqrt(np.prod([math.factorial(c) for c in out_ns]) * np.prod([math.factorial(c) for c in in_ns]))
    return permanent(u[np.ix_(rows, cols)]) / norm


def partial_trace_loops(rho: np.ndarray, num_modes: int, d: int, keep: list[int]) -> np.ndarray:
    basis = list(itertools.product(range(d), repeat=num_modes))
    kb = list(itertools.product(range(d), repeat=len(keep)))
    index = {b: i for i, b in enumerate(kb)}
    out = np.zeros((len(kb), len(kb)), dtype=np.complex128)
    for i, bi in enumerate(basis):
        for j, bj in enumerate(basis):
            traced_equal = all(bi[m] == bj[m] for m in range(num_modes) if m not in keep)
            if traced_equal:
                out[index[tuple(bi[m] for m in keep)], index[tuple(bj[m] for m in keep)]] += rho[i, j]
    return out


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
