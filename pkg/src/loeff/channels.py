"""Loss channels, their inverses and destructive postselected measurements.

A loss channel of transmissivity ``p`` mixes a mode with vacuum on a beam
splitter, ``a -> sqrt(p) a + sqrt(1-p) w``. In the number basis the output is

    out[n-k, m-k] += sqrt(C(n,k) C(m,k)) p**((n+m)/2 - k) (1-p)**k  rho[n, m]

summed over k. Photons are only ever removed, so the superoperator is
triangular in photon number and is inverted exactly inside a truncation by
back-substitution from the highest photon numbers downwards. (The result
coincides with the forward formula evaluated at ``1/p``.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from loeff.errors import ConfigurationError, ImpossibleOutcomeError, NumericallySingularError
from loeff.fock import MultiModeState, TruncationSpec, partial_trace

PROB_FLOOR = 1e-12
EFFECT_TOL = 1e-10
# largest magnitude the inverse is allowed to produce before it is declared singular
OVERFLOW_LIMIT = 1e250


@lru_cache(maxsize=64)
def _binomial_sqrt_table(d: int) -> np.ndarray:
    """``table[n, k] = sqrt(C(n, k))`` for ``n, k < d``."""
    t = np.zeros((d, d))
    for n in range(d):
        for k in range(n + 1):
            t[n, k] = math.sqrt(math.comb(n, k))
    return t


@lru_cache(maxsize=64)
def _loss_pattern(d: int) -> tuple[np.ndarray, ...]:
    """Indices ``(a, b, n, m)`` of the non-zero superoperator entries, with ``k`` and the binomial weights."""
    sq = _binomial_sqrt_table(d)
    rows = [(n - k, m - k, n, m, k, sq[n, k] * sq[m, k]) for n in range(d) for m in range(d) for k in range(min(n, m) + 1)]
    cols = list(zip(*rows))
    out = tuple(np.array(c, dtype=int) for c in cols[:5]) + (np.array(cols[5], dtype=float),)
    for arr in out:
        arr.setflags(write=False)
    return out


def loss_superoperator(p: float, d: int) -> np.ndarray:
    """Single-mode loss channel as a tensor ``L[a, b, n, m]`` on a ``d``-level truncation.

    ``rho_out[a, b] = sum_{n, m} L[a, b, n, m] rho_in[n, m]``. The formula is
    polynomial in ``sqrt(p)`` and obeys ``L(p) L(q) = L(p q)``; values
    ``p > 1`` are accepted as its formal continuation.
    """
    if p < 0:
        raise ConfigurationError(f"transmissivity {p} is negative")
    a, b, n, m, k, w = _loss_pattern(d)
    out = np.zeros((d, d, d, d))
    out[a, b, n, m] = w * (1.0 - p) ** k * math.sqrt(p) ** (a + b)
    return out


def _check_mode(trunc: TruncationSpec, mode: int) -> int:
    if int(mode) != mode or not 0 <= mode < trunc.num_modes:
        raise ConfigurationError(f"mode {mode} out of range for {trunc.num_modes} modes")
    return int(mode)


def _check_transmissivity(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ConfigurationError(f"transmissivity {p} outside [0, 1]")
    return p


def apply_loss_tensor(t: np.ndarray, num_modes: int, mode: int, p: float) -> np.ndarray:
    """Apply loss to ``mode`` of a ``(d,)*2N`` operator tensor."""
    if p == 1.0:
        return t
    d = t.shape[0]
    L = loss_superoperator(p, d)
    out = np.tensordot(L, t, axes=([2, 3], [mode, num_modes + mode]))
    return np.moveaxis(out, [0, 1], [mode, num_modes + mode])


def _check_invertible(p: float, d: int) -> None:
    if p <= 0.0:
        raise NumericallySingularError("loss channel with p = 0 is not invertible")
    if (d - 1) * math.log(1.0 / p) > math.log(OVERFLOW_LIMIT):
        raise NumericallySingularError(f"inverse loss overflows at p={p:.3g} with cutoff {d - 1}")


@lru_cache(maxsize=4096)
def inverse_loss_superoperator(p: float, d: int) -> np.ndarray:
    """Inverse of :func:`loss_superoperator` by back-substitution, as a tensor ``Linv[a, b, n, m]``.

    Entries are solved from the highest photon numbers downwards; each output
    ``[a, b]`` only involves already-solved entries ``[a+k, b+k]``.
    """
    _check_invertible(p, d)
    out = np.zeros((d, d, d, d))
    sq = _binomial_sqrt_table(d)
    sqrt_p = math.sqrt(p)
    q = 1.0 - p
    for a in range(d - 1, -1, -1):
        for b in range(d - 1, -1, -1):
            acc = np.zeros((d, d))
            acc[a, b] = 1.0
            for k in range(1, d - max(a, b)):
                acc -= sq[a + k, k] * sq[b + k, k] * sqrt_p ** (a + b) * q**k * out[a + k, b + k]
            out[a, b] = acc / sqrt_p ** (a + b)
    if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > OVERFLOW_LIMIT:
        raise NumericallySingularError(f"inverse loss overflows at p={p:.3g}")
    out.setflags(write=False)
    return out


def invert_loss_tensor(t: np.ndarray, num_modes: int, mode: int, p: float) -> np.ndarray:
    """Undo loss on ``mode`` of a ``(d,)*2N`` operator tensor."""
    if p == 1.0:
        return t
    linv = inverse_loss_superoperator(float(p), t.shape[0])
    out = np.tensordot(linv, t, axes=([2, 3], [mode, num_modes + mode]))
    if not np.all(np.isfinite(out)):
        raise NumericallySingularError(f"inverse loss overflows at p={p:.3g}")
    return np.moveaxis(out, [0, 1], [mode, num_modes + mode])


def loss_channel(s: MultiModeState, mode: int, p: float) -> MultiModeState:
    """Send ``mode`` of ``s`` through a loss channel of transmissivity ``p``."""
    mode = _check_mode(s.trunc, mode)
    p = _check_transmissivity(p)
    t = apply_loss_tensor(s.as_tensor(), s.num_modes, mode, p)
    return MultiModeState(
        s.trunc,
        t.reshape(s.dim, s.dim),
        subnormalized=s.subnormalized,
        truncated_weight=s.truncated_weight,
        validate=False,
    )


def _as_matrix(s: MultiModeState | np.ndarray, trunc: TruncationSpec | None) -> tuple[np.ndarray, TruncationSpec]:
    if isinstance(s, MultiModeState):
        return s.matrix, s.trunc
    if trunc is None:
        raise ConfigurationError("a TruncationSpec is required when passing a bare matrix")
    m = np.asarray(s, dtype=np.complex128)
    if m.shape != (trunc.dim, trunc.dim):
        raise ConfigurationError(f"matrix shape {m.shape} does not match dimension {trunc.dim}")
    return m, trunc


def inverse_loss_channel(
    s: MultiModeState | np.ndarray, mode: int, p: float, trunc: TruncationSpec | None = None
) -> np.ndarray:
    """Hermitian preimage of ``s`` under loss on ``mode``; not necessarily PSD.

    Raises :class:`NumericallySingularError` for ``p = 0`` or when the
    back-substitution would overflow.
    """
    m, trunc = _as_matrix(s, trunc)
    mode = _check_mode(trunc, mode)
    p = _check_transmissivity(p)
    t = invert_loss_tensor(m.reshape(trunc.shape * 2), trunc.num_modes, mode, p)
    out = t.reshape(trunc.dim, trunc.dim)
    return 0.5 * (out + out.conj().T)


def as_loss_vector(p: Sequence[float], num_modes: int | None = None) -> np.ndarray:
    """Validate a vector of per-mode transmissivities."""
    arr = np.asarray(p, dtype=float).reshape(-1)
    if num_modes is not None and arr.size != num_modes:
        raise ConfigurationError(f"loss vector has {arr.size} entries for {num_modes} modes")
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ConfigurationError(f"transmissivities {arr.tolist()} outside [0, 1]")
    return arr


def multimode_loss(s: MultiModeState, p: Sequence[float]) -> MultiModeState:
    """Independent loss channels on every mode."""
    p = as_loss_vector(p, s.num_modes)
    t = s.as_tensor()
    for j, pj in enumerate(p):
        t = apply_loss_tensor(t, s.num_modes, j, float(pj))
    return MultiModeState(
        s.trunc,
        t.reshape(s.dim, s.dim),
        subnormalized=s.subnormalized,
        truncated_weight=s.truncated_weight,
        validate=False,
    )


def inverse_multimode_loss(
    s: MultiModeState | np.ndarray, p: Sequence[float], trunc: TruncationSpec | None = None
) -> np.ndarray:
    """Hermitian preimage of ``s`` under independent loss ``p`` on every mode."""
    m, trunc = _as_matrix(s, trunc)
    p = as_loss_vector(p, trunc.num_modes)
    t = m.reshape(trunc.shape * 2)
    for j, pj in enumerate(p):
        t = invert_loss_tensor(t, trunc.num_modes, j, float(pj))
    out = t.reshape(trunc.dim, trunc.dim)
    return 0.5 * (out + out.conj().T)


# -- measurements -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasurementSpec:
    """A destructive measurement outcome on ``measured_modes``.

    Either a Fock ``outcome`` (one photon number per measured mode) or an
    explicit POVM ``effect`` on the measured subsystem, indexed in the
    package basis order over the measured modes in ascending order.
    """

    measured_modes: tuple[int, ...]
    outcome: tuple[int, ...] | None = None
    effect: np.ndarray | None = None

    def __post_init__(self):
        modes = tuple(int(m) for m in self.measured_modes)
        if len(set(modes)) != len(modes):
            raise ConfigurationError(f"repeated measured modes {modes}")
        order = np.argsort(modes, kind="stable")
        object.__setattr__(self, "measured_modes", tuple(modes[i] for i in order))
        if (self.outcome is None) == (self.effect is None):
            raise ConfigurationError("give exactly one of a Fock outcome or an effect matrix")
        if self.outcome is not None:
            outcome = tuple(int(n) for n in self.outcome)
            if len(outcome) != len(modes):
                raise ConfigurationError("outcome length must match the number of measured modes")
            object.__setattr__(self, "outcome", tuple(outcome[i] for i in order))
        else:
            e = np.array(self.effect, dtype=np.complex128)
            if e.ndim != 2 or e.shape[0] != e.shape[1]:
                raise ConfigurationError("effect must be a square matrix")
            if np.max(np.abs(e - e.conj().T)) > EFFECT_TOL:
                raise ConfigurationError("effect must be Hermitian")
            e = 0.5 * (e + e.conj().T)
            evals = np.linalg.eigvalsh(e)
            if evals[0] < -EFFECT_TOL or evals[-1] > 1 + EFFECT_TOL:
                raise ConfigurationError("effect must satisfy 0 <= E <= I")
            if any(i != j for i, j in zip(order, range(len(order)))):
                raise ConfigurationError("effect matrices require measured_modes in ascending order")
            e.setflags(write=False)
            object.__setattr__(self, "effect", e)

    def effect_matrix(self, cutoff: int) -> np.ndarray:
        d = (cutoff + 1) ** len(self.measured_modes)
        if self.effect is not None:
            if self.effect.shape != (d, d):
                raise ConfigurationError(f"effect shape {self.effect.shape} does not match cutoff {cutoff}")
            return self.effect
        trunc = TruncationSpec(len(self.measured_modes), cutoff)
        e = np.zeros((d, d), dtype=np.complex128)
        i = trunc.index(self.outcome)
        e[i, i] = 1.0
        return e


def project(s: MultiModeState, m: MeasurementSpec) -> MultiModeState:
    """Unnormalized conditional state ``tr_meas[(E (x) I) rho]`` on the kept modes."""
    n = s.num_modes
    meas = list(m.measured_modes)
    if not meas or len(meas) >= n:
        raise ConfigurationError("measured modes must be a non-empty proper subset of the modes")
    if meas[0] < 0 or meas[-1] >= n:
        raise ConfigurationError(f"measured modes {meas} out of range for {n} modes")
    keep = [j for j in range(n) if j not in meas]
    t = s.as_tensor()
    if m.outcome is not None:
        if any(k > s.cutoff or k < 0 for k in m.outcome):
            raise ConfigurationError(f"outcome {m.outcome} outside cutoff {s.cutoff}")
        index: list = [slice(None)] * (2 * n)
        for j, k in zip(meas, m.outcome):
            index[j] = k
            index[n + j] = k
        out = t[tuple(index)]
    else:
        e = m.effect_matrix(s.cutoff).reshape((s.cutoff + 1,) * (2 * len(meas)))
        # sum_{m, m'} E[m, m'] rho[(m', k), (m, k')]
        e_idx = [n + j for j in meas] + list(meas)
        out_idx = keep + [n + j for j in keep]
        out = np.einsum(t, list(range(2 * n)), e, e_idx, out_idx)
    trunc = TruncationSpec(len(keep), s.cutoff)
    return MultiModeState(
        trunc,
        np.asarray(out).reshape(trunc.dim, trunc.dim),
        subnormalized=True,
        truncated_weight=s.truncated_weight,
        validate=False,
    )


def postselect(
    s: MultiModeState, m: MeasurementSpec, prob_floor: float = PROB_FLOOR
) -> tuple[MultiModeState, float]:
    """Condition the kept modes on outcome ``m``; returns the normalized state and its probability."""
    cond = project(s, m)
    prob = cond.trace()
    if prob < prob_floor:
        raise ImpossibleOutcomeError(f"outcome has probability {prob:.3g} below {prob_floor:.1g}")
    prob = min(prob, 1.0)
    state = MultiModeState(
        cond.trunc, cond.matrix / cond.trace(), truncated_weight=s.truncated_weight, validate=False
    )
    return state, prob


def outcome_probabilities(s: MultiModeState, measured_modes: Sequence[int]) -> dict[tuple[int, ...], float]:
    """Probabilities of every Fock outcome on ``measured_modes`` (ascending order)."""
    meas = sorted(set(int(j) for j in measured_modes))
    marginal = partial_trace(s, meas)
    probs = marginal.photon_distribution()
    return {ns: float(probs[i]) for i, ns in enumerate(marginal.trunc.basis())}
