"""Multimode density operators on a truncated Fock space.

Basis convention: the joint basis is the tensor product of single-mode
number states ``|0>, ..., |C>`` in row-major order, so the index of
``(n_1, ..., n_N)`` is ``sum_j n_j (C+1)**(N-1-j)`` and the first mode varies
slowest. Every module in the package relies on this ordering.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import InitVar, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from loeff.errors import ConfigurationError, DimensionGuardError

PSD_TOL = 1e-9
TRACE_TOL = 1e-10
HERMITIAN_REJECT_TOL = 1e-8
TRUNCATION_WARN = 1e-6
MAX_DIM = 10_000


class TruncationWarning(UserWarning):
    """Raised when a constructor discards more probability than allowed."""


@dataclass(frozen=True)
class TruncationSpec:
    """Number of modes and the per-mode photon-number cutoff."""

    num_modes: int
    cutoff: int
    max_dim: int = field(default=MAX_DIM, compare=False)

    def __post_init__(self):
        if int(self.num_modes) != self.num_modes or self.num_modes < 1:
            raise ConfigurationError(f"num_modes must be a positive integer, got {self.num_modes}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 0:
            raise ConfigurationError(f"cutoff must be a non-negative integer, got {self.cutoff}")
        object.__setattr__(self, "num_modes", int(self.num_modes))
        object.__setattr__(self, "cutoff", int(self.cutoff))
        if self.dim > self.max_dim:
            raise DimensionGuardError(
                f"Hilbert dimension {self.dim} = {self.local_dim}**{self.num_modes} "
                f"exceeds the guard {self.max_dim}"
            )

    @property
    def local_dim(self) -> int:
        return self.cutoff + 1

    @property
    def dim(self) -> int:
        return self.local_dim**self.num_modes

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.local_dim,) * self.num_modes

    def index(self, ns: Sequence[int]) -> int:
        """Flat basis index of the photon-number tuple ``ns``."""
        if len(ns) != self.num_modes:
            raise ConfigurationError(f"expected {self.num_modes} photon numbers, got {len(ns)}")
        if any(n < 0 or n > self.cutoff for n in ns):
            raise ConfigurationError(f"photon numbers {tuple(ns)} outside cutoff {self.cutoff}")
        return int(np.ravel_multi_index(tuple(ns), self.shape))

    def basis(self) -> list[tuple[int, ...]]:
        """All photon-number tuples in basis order."""
        return list(itertools.product(range(self.local_dim), repeat=self.num_modes))

    def total_photons(self) -> np.ndarray:
        """Total photon number of every basis vector, in basis order."""
        grids = np.indices(self.shape).reshape(self.num_modes, -1)
        return grids.sum(axis=0)


@dataclass(frozen=True, eq=False)
class MultiModeState:
    """A density operator on ``trunc.num_modes`` modes.

    ``subnormalized`` marks conditional (post-measurement) operators whose
    trace is a probability rather than one. ``truncated_weight`` is the
    probability mass a constructor had to discard beyond the cutoff.
    """

    trunc: TruncationSpec
    matrix: np.ndarray
    subnormalized: bool = False
    truncated_weight: float = 0.0
    validate: InitVar[bool] = True
    psd_tol: InitVar[float] = PSD_TOL

    def __post_init__(self, validate, psd_tol):
        m = np.array(self.matrix, dtype=np.complex128)
        d = self.trunc.dim
        if m.shape != (d, d):
            raise ConfigurationError(f"matrix shape {m.shape} does not match dimension {d}")
        if validate:
            if not np.all(np.isfinite(m)):
                raise ConfigurationError("density matrix has non-finite entries")
            dev = np.max(np.abs(m - m.conj().T)) if d else 0.0
            if dev > HERMITIAN_REJECT_TOL * max(1.0, np.max(np.abs(m))):
                raise ConfigurationError(f"matrix is not Hermitian (deviation {dev:.3g})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if validate:
            tr = self.trace()
            if self.subnormalized:
                if tr > 1 + TRACE_TOL or tr < -TRACE_TOL:
                    raise ConfigurationError(f"conditional state trace {tr} outside [0, 1]")
            elif abs(tr - 1) > TRACE_TOL:
                raise ConfigurationError(
                    f"state trace {tr!r} differs from 1; tag conditional states as subnormalized"
                )
            lam = min_eigenvalue(self)
            if lam < -psd_tol:
                raise ConfigurationError(f"matrix is not positive semidefinite (min eigenvalue {lam:.3g})")

    @property
    def num_modes(self) -> int:
        return self.trunc.num_modes

    @property
    def cutoff(self) -> int:
        return self.trunc.cutoff

    @property
    def dim(self) -> int:
        return self.trunc.dim

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def as_tensor(self) -> np.ndarray:
        """The matrix reshaped to ``(C+1,)*N + (C+1,)*N`` (row modes, then column modes)."""
        return self.matrix.reshape(self.trunc.shape * 2)

    def photon_distribution(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def max_total_photons(self, tol: float = 1e-14) -> int:
        """Largest total photon number carrying weight above ``tol``."""
        weights = self.photon_distribution()
        totals = self.trunc.total_photons()
        occupied = totals[np.abs(weights) > tol]
        return int(occupied.max()) if occupied.size else 0

    def normalized(self) -> MultiModeState:
        tr = self.trace()
        if tr <= 0:
            raise ConfigurationError("cannot normalize an operator with zero trace")
        return MultiModeState(self.trunc, self.matrix / tr, truncated_weight=self.truncated_weight, validate=False)

    def __repr__(self):
        kind = "conditional " if self.subnormalized else ""
        return f"<{kind}MultiModeState N={self.num_modes} C={self.cutoff} trace={self.trace():.6g}>"


def state_from_matrix(
    matrix: np.ndarray, num_modes: int, cutoff: int, *, subnormalized: bool = False, psd_tol: float = PSD_TOL
) -> MultiModeState:
    return MultiModeState(TruncationSpec(num_modes, cutoff), matrix, subnormalized=subnormalized, psd_tol=psd_tol)


def min_eigenvalue(s: MultiModeState | np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix (or of a state's matrix)."""
    m = s.matrix if isinstance(s, MultiModeState) else np.asarray(s)
    if m.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(m)[0])


def is_psd(s: MultiModeState | np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(s) >= -tol


# -- constructors -------------------------------------------------------------


def _check_truncation_weight(weight: float, threshold: float, what: str) -> None:
    if weight > threshold:
        warnings.warn(
            f"{what}: probability {weight:.3g} lies beyond the cutoff (threshold {threshold:.1g})",
            TruncationWarning,
            stacklevel=3,
        )


def _pure_from_vector(vec: np.ndarray, trunc: TruncationSpec, truncated_weight: float = 0.0) -> MultiModeState:
    return MultiModeState(trunc, np.outer(vec, vec.conj()), truncated_weight=truncated_weight)


def vacuum(num_modes: int, cutoff: int) -> MultiModeState:
    return fock((0,) * num_modes, cutoff)


def fock(ns: Sequence[int], cutoff: int | None = None) -> MultiModeState:
    """The number state ``|n_1, ..., n_N>``; cutoff defaults to ``max(ns)``."""
    ns = tuple(int(n) for n in ns)
    if cutoff is None:
        cutoff = max(ns) if ns else 0
    trunc = TruncationSpec(len(ns), cutoff)
    vec = np.zeros(trunc.dim, dtype=np.complex128)
    vec[trunc.index(ns)] = 1.0
    return _pure_from_vector(vec, trunc)


def pure(
    amplitudes: Mapping[Sequence[int], complex], cutoff: int, *, normalize: bool = True
) -> MultiModeState:
    """Pure state from a map of photon-number tuples to amplitudes."""
    if not amplitudes:
        raise ConfigurationError("pure state needs at least one amplitude")
    lengths = {len(k) for k in amplitudes}
    if len(lengths) != 1:
        raise ConfigurationError("all photon-number tuples must have the same length")
    trunc = TruncationSpec(lengths.pop(), cutoff)
    vec = np.zeros(trunc.dim, dtype=np.complex128)
    for ns, amp in amplitudes.items():
        vec[trunc.index(tuple(ns))] += complex(amp)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ConfigurationError("pure state has zero norm")
    if normalize:
        vec = vec / norm
    elif abs(norm - 1) > TRACE_TOL:
        raise ConfigurationError(f"amplitudes have norm {norm}, expected 1")
    return _pure_from_vector(vec, trunc)


def _coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        amps = np.zeros(cutoff + 1, dtype=np.complex128)
        amps[0] = 1.0
        return amps
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * log_fact)
    return mag * np.exp(1j * np.angle(alpha) * n)


def coherent(
    alphas: Sequence[complex] | complex, cutoff: int, *, warn_threshold: float = TRUNCATION_WARN
) -> MultiModeState:
    """Product of coherent states, truncated at ``cutoff`` and renormalized.

    The discarded probability is stored in ``truncated_weight`` and a
    :class:`TruncationWarning` is issued when it exceeds ``warn_threshold``.
    """
    alphas = [complex(a) for a in np.atleast_1d(alphas)]
    trunc = TruncationSpec(len(alphas), cutoff)
    vec = np.ones(1, dtype=np.complex128)
    for a in alphas:
        vec = np.kron(vec, _coherent_amplitudes(a, cutoff))
    kept = float(np.vdot(vec, vec).real)
    weight = max(0.0, 1.0 - kept)
    _check_truncation_weight(weight, warn_threshold, "coherent state")
    return _pure_from_vector(vec / math.sqrt(kept), trunc, truncated_weight=weight)


def thermal(
    nbars: Sequence[float] | float, cutoff: int, *, warn_threshold: float = TRUNCATION_WARN
) -> MultiModeState:
    """Product of thermal states with mean photon numbers ``nbars``, truncated and renormalized."""
    nbars = [float(x) for x in np.atleast_1d(nbars)]
    if any(x < 0 for x in nbars):
        raise ConfigurationError("mean photon numbers must be non-negative")
    trunc = TruncationSpec(len(nbars), cutoff)
    diag = np.ones(1)
    n = np.arange(cutoff + 1)
    for nbar in nbars:
        ratio = nbar / (1.0 + nbar)
        diag = np.kron(diag, (1.0 - ratio) * ratio**n)
    kept = float(diag.sum())
    weight = max(0.0, 1.0 - kept)
    _check_truncation_weight(weight, warn_threshold, "thermal state")
    return MultiModeState(trunc, np.diag(diag / kept).astype(np.complex128), truncated_weight=weight)


def mixture(components: Iterable[tuple[float, MultiModeState]]) -> MultiModeState:
    """Convex combination of states on the same truncation; weights must sum to one."""
    components = list(components)
    if not components:
        raise ConfigurationError("mixture needs at least one component")
    trunc = components[0][1].trunc
    total = 0.0
    mat = np.zeros((trunc.dim, trunc.dim), dtype=np.complex128)
    weight = 0.0
    for w, s in components:
        if s.trunc != trunc:
            raise ConfigurationError("mixture components must share modes and cutoff")
        if w < 0:
            raise ConfigurationError("mixture weights must be non-negative")
        total += w
        mat += w * s.matrix
        weight += w * s.truncated_weight
    if abs(total - 1) > TRACE_TOL:
        raise ConfigurationError(f"mixture weights sum to {total}, expected 1")
    return MultiModeState(trunc, mat, truncated_weight=weight)


def with_cutoff(s: MultiModeState, cutoff: int) -> MultiModeState:
    """Embed ``s`` into a larger cutoff (padding with zeros) or restrict it.

    Restriction is only allowed when no weight is discarded.
    """
    if cutoff == s.cutoff:
        return s
    new = TruncationSpec(s.num_modes, cutoff)
    d_old, d_new = s.cutoff + 1, cutoff + 1
    t = s.as_tensor()
    n = s.num_modes
    if cutoff > s.cutoff:
        out = np.zeros(new.shape * 2, dtype=np.complex128)
        out[(slice(0, d_old),) * (2 * n)] = t
    else:
        out = t[(slice(0, d_new),) * (2 * n)]
        lost = s.trace() - float(np.real(np.trace(out.reshape(new.dim, new.dim))))
        if abs(lost) > TRACE_TOL:
            raise ConfigurationError(f"reducing cutoff to {cutoff} would discard weight {lost:.3g}")
    return MultiModeState(
        new,
        out.reshape(new.dim, new.dim),
        subnormalized=s.subnormalized,
        truncated_weight=s.truncated_weight,
        validate=False,
    )


# -- structural operations ----------------------------------------------------


def tensor(a: MultiModeState, b: MultiModeState, *more: MultiModeState) -> MultiModeState:
    """Tensor product; modes of ``a`` come first."""
    if more:
        return tensor(tensor(a, b), *more)
    if a.cutoff != b.cutoff:
        raise ConfigurationError(f"cannot tensor states with cutoffs {a.cutoff} and {b.cutoff}")
    trunc = TruncationSpec(a.num_modes + b.num_modes, a.cutoff)
    weight = 1.0 - (1.0 - a.truncated_weight) * (1.0 - b.truncated_weight)
    return MultiModeState(
        trunc,
        np.kron(a.matrix, b.matrix),
        subnormalized=a.subnormalized or b.subnormalized,
        truncated_weight=weight,
        validate=False,
    )


def partial_trace(s: MultiModeState, keep: Iterable[int]) -> MultiModeState:
    """Reduced state on the modes in ``keep`` (kept in ascending order)."""
    keep = sorted(set(int(k) for k in keep))
    n = s.num_modes
    if not keep:
        raise ConfigurationError("partial trace needs a non-empty set of kept modes")
    if keep[0] < 0 or keep[-1] >= n:
        raise ConfigurationError(f"kept modes {keep} out of range for {n} modes")
    if len(keep) == n:
        return s
    rows = list(range(n))
    cols = list(range(n, 2 * n))
    for j in range(n):
        if j not in keep:
            cols[j] = rows[j]
    out_idx = [rows[j] for j in keep] + [cols[j] for j in keep]
    out = np.einsum(s.as_tensor(), rows + cols, out_idx)
    trunc = TruncationSpec(len(keep), s.cutoff)
    return MultiModeState(
        trunc,
        out.reshape(trunc.dim, trunc.dim),
        subnormalized=s.subnormalized,
        truncated_weight=s.truncated_weight,
        validate=False,
    )


def permute_modes(s: MultiModeState, order: Sequence[int]) -> MultiModeState:
    """Relabel modes so that new mode ``i`` is old mode ``order[i]``."""
    n = s.num_modes
    order = list(order)
    if sorted(order) != list(range(n)):
        raise ConfigurationError(f"{order} is not a permutation of {n} modes")
    t = np.transpose(s.as_tensor(), order + [n + j for j in order])
    return MultiModeState(
        s.trunc,
        t.reshape(s.dim, s.dim),
        subnormalized=s.subnormalized,
        truncated_weight=s.truncated_weight,
        validate=False,
    )
