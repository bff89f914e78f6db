"""Loss-based efficiency measures with feasibility certificates.

All four measures ask for the smallest transmissivities ``p`` (summed over
the ``K`` largest entries) for which the target can be written as
``W E_p(rho0)`` with ``rho0 >= 0``. Feasibility for fixed ``W`` is tested by
applying the exact inverse loss channel and checking positivity, and the
feasible set is an up-set in every coordinate of ``p``; bisection along
coordinates is therefore sound.

Reported values are boundary points found to within ``bisect_tol``. The
unitary-optimized measure is only ever reported as an upper bound.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from loeff.channels import OVERFLOW_LIMIT, _binomial_sqrt_table, invert_loss_tensor, multimode_loss
from loeff.decomposition import top_k_sum
from loeff.errors import ConfigurationError, InfeasibleStateError, NumericallySingularError
from loeff.fock import PSD_TOL, MultiModeState, partial_trace
from loeff.interferometer import apply_interferometer, as_mode_unitary, haar_random

log = logging.getLogger(__name__)

EXACT = "exact-to-tolerance"
UPPER = "upper-bound"
MEASURES = ("single", "d", "s", "u")

# relaxed positivity tolerances used to shape the landscape of the unitary search
ANNEAL_SCHEDULE = (1e-2, 1e-4, 1e-6)
# coordinate searches test this many points per round when the space is small
GRID_POINTS = 7
GRID_DIM_LIMIT = 64


@dataclass(frozen=True)
class Tolerances:
    bisect_tol: float = 1e-6
    psd_tol: float = PSD_TOL
    recon_tol: float = 1e-8
    restarts: int = 8
    maxfev: int = 300
    ray_starts: int = 4

    def __post_init__(self):
        if not 0 < self.bisect_tol < 1:
            raise ConfigurationError("bisect_tol must lie in (0, 1)")
        if self.psd_tol < 0 or self.recon_tol <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.restarts < 1 or self.maxfev < 1 or self.ray_starts < 0:
            raise ConfigurationError("optimizer budget must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True, eq=False)
class EfficiencyCertificate:
    """Witness ``W E_p(rho0) = target`` with ``rho0`` positive up to ``-margin``."""

    W: np.ndarray
    p: np.ndarray
    rho0: MultiModeState
    margin: float
    K: int

    @property
    def value(self) -> float:
        return top_k_sum(self.p, self.K)

    def reconstruct(self) -> MultiModeState:
        return apply_interferometer(multimode_loss(self.rho0, self.p), self.W)

    def residual(self, target: MultiModeState) -> float:
        if target.trunc != self.rho0.trunc:
            raise ConfigurationError("certificate and target live on different truncations")
        return float(np.max(np.abs(self.reconstruct().matrix - target.matrix)))

    def verify(self, target: MultiModeState, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
        return self.residual(target) <= tol.recon_tol and self.margin >= -tol.psd_tol


@dataclass(frozen=True, eq=False)
class EfficiencyResult:
    measure: str
    K: int
    value: float
    bound_type: str
    certificate: EfficiencyCertificate | None
    tolerances: Tolerances
    seed: int | None = None
    per_mode: np.ndarray | None = None
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)


class _Feasibility:
    """Positivity of the inverse multimode loss of a fixed matrix."""

    def __init__(self, matrix: np.ndarray, num_modes: int, local_dim: int, psd_tol: float):
        self.n = num_modes
        self.d = local_dim
        self.dim = local_dim**num_modes
        self.tensor = np.asarray(matrix).reshape((local_dim,) * (2 * num_modes))
        self.psd_tol = psd_tol
        self._powers = np.arange(local_dim)
        # smallest transmissivity whose inverse stays below OVERFLOW_LIMIT
        self.x_min = math.exp(-math.log(OVERFLOW_LIMIT) / (local_dim - 1)) if local_dim > 1 else 0.0

    def _margin_of(self, t: np.ndarray) -> float:
        m = t.reshape(self.dim, self.dim)
        return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])

    def invert(self, p: np.ndarray, skip: int | None = None) -> np.ndarray:
        t = self.tensor
        for j in range(self.n):
            if j != skip:
                t = invert_loss_tensor(t, self.n, j, float(p[j]))
        return t

    def margin(self, p: np.ndarray) -> float:
        try:
            return self._margin_of(self.invert(p))
        except NumericallySingularError:
            return -np.inf

    def feasible(self, p: np.ndarray) -> bool:
        return self.margin(p) >= -self.psd_tol

    def _coordinate_pencil(self, partial: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Split the inverse loss on mode ``j`` as ``D(r) [sum_k q**k P_k] D(r)``.

        With ``q = 1 - 1/x`` and ``r = 1/sqrt(x)``, ``D(r)`` scales every basis
        state by ``r`` to the photon number of mode ``j``. Returns the stack
        ``P`` and those photon numbers.
        """
        d, n = self.d, self.n
        sq = _binomial_sqrt_table(d)
        tt = np.moveaxis(partial, [j, n + j], [0, 1])
        pk = np.zeros((d,) + tt.shape, dtype=np.complex128)
        extra = (np.newaxis,) * (tt.ndim - 2)
        for k in range(d):
            w = np.outer(sq[k:, k], sq[k:, k])
            pk[k, : d - k, : d - k] = w[(...,) + extra] * tt[k:, k:]
        pk = np.moveaxis(pk, [1, 2], [1 + j, 1 + n + j]).reshape(d, self.dim, self.dim)
        pk = 0.5 * (pk + np.conj(np.swapaxes(pk, 1, 2)))
        photons = np.indices((d,) * n).reshape(n, -1)[j]
        return pk, photons

    def _coordinate_margins(self, pencil: tuple[np.ndarray, np.ndarray], xs: np.ndarray) -> np.ndarray:
        """Margins after additionally undoing loss ``x`` on the pencil's mode, for every ``x`` in ``xs``.

        Points too small to invert within :data:`OVERFLOW_LIMIT` count as infeasible.
        """
        pk, photons = pencil
        usable = xs >= self.x_min
        if not usable.all():
            margins = np.full(xs.size, -np.inf)
            if usable.any():
                margins[usable] = self._coordinate_margins(pencil, xs[usable])
            return margins
        q = (1.0 - 1.0 / xs)[:, np.newaxis] ** self._powers
        scale = xs[:, np.newaxis] ** (-0.5 * photons)
        m = np.einsum("gk,kab->gab", q, pk)
        m *= scale[:, :, np.newaxis]
        m *= scale[:, np.newaxis, :]
        return np.linalg.eigvalsh(m)[:, 0]

    def lower_coordinate(self, p: np.ndarray, j: int, tol: float) -> float:
        """Smallest feasible ``p[j]`` (to within ``tol``) with the other entries fixed; ``p`` must be feasible.

        Feasibility is monotone in ``p[j]``, so the bracket ``(lo, hi]`` is
        shrunk by testing evenly spaced interior points: a batch of them for
        small spaces, plain bisection otherwise.
        """
        try:
            partial = self.invert(p, skip=j)
        except NumericallySingularError:
            return float(p[j])
        pencil = self._coordinate_pencil(partial, j)
        points = GRID_POINTS if self.dim <= GRID_DIM_LIMIT else 1
        lo, hi = 0.0, float(p[j])
        while hi - lo > tol:
            xs = lo + (hi - lo) * np.arange(1, points + 1) / (points + 1)
            ok = self._coordinate_margins(pencil, xs) >= -self.psd_tol
            first = int(np.argmax(ok)) if np.any(ok) else points
            if first < points:
                hi = float(xs[first])
            if first > 0:
                lo = float(xs[first - 1])
        return hi

    def shoot(self, direction: np.ndarray, tol: float) -> np.ndarray:
        """Furthest feasible point on the segment from all-ones towards ``direction``."""
        ones = np.ones(self.n)
        lo, hi = 0.0, 1.0
        if self.feasible(direction):
            return direction.copy()
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.feasible(ones + mid * (direction - ones)):
                lo = mid
            else:
                hi = mid
        return ones + lo * (direction - ones)


def _check_normalized(s: MultiModeState, psd_tol: float) -> None:
    if abs(s.trace() - 1) > 1e-8:
        raise ConfigurationError(f"efficiency measures need a normalized state (trace {s.trace():.12g})")
    lam = float(np.linalg.eigvalsh(s.matrix)[0])
    if lam < -psd_tol:
        raise InfeasibleStateError(f"state is not positive semidefinite (min eigenvalue {lam:.3g})")


def _check_k(s: MultiModeState, k: int) -> int:
    if int(k) != k or not 1 <= k <= s.num_modes:
        raise ConfigurationError(f"K={k} must lie in [1, {s.num_modes}]")
    return int(k)


def _certificate(s: MultiModeState, w: np.ndarray, p: np.ndarray, k: int, psd_tol: float) -> EfficiencyCertificate:
    """Certificate for ``target = w E_p(rho0)`` where ``s`` is already ``w^dag target w``."""
    feas = _Feasibility(s.matrix, s.num_modes, s.cutoff + 1, psd_tol)
    t = feas.invert(p)
    mat = t.reshape(s.dim, s.dim)
    mat = 0.5 * (mat + mat.conj().T)
    margin = float(np.linalg.eigvalsh(mat)[0])
    rho0 = MultiModeState(s.trunc, mat, validate=False)
    return EfficiencyCertificate(W=w, p=p.copy(), rho0=rho0, margin=margin, K=k)


# -- single mode ---------------------------------------------------------------


def single_mode_efficiency(s: MultiModeState, tol: Tolerances = DEFAULT_TOLERANCES) -> EfficiencyResult:
    """Smallest transmissivity of a loss channel that could have produced ``s``."""
    start = time.perf_counter()
    if s.num_modes != 1:
        raise ConfigurationError(f"single-mode efficiency needs one mode, got {s.num_modes}")
    _check_normalized(s, tol.psd_tol)
    feas = _Feasibility(s.matrix, 1, s.cutoff + 1, tol.psd_tol)
    p = np.ones(1)
    if not feas.feasible(p):
        raise InfeasibleStateError("state is not positive semidefinite")
    p[0] = feas.lower_coordinate(p, 0, tol.bisect_tol)
    cert = _certificate(s, np.eye(1, dtype=np.complex128), p, 1, tol.psd_tol)
    return EfficiencyResult(
        "single", 1, float(p[0]), EXACT, cert, tol, wall_time=time.perf_counter() - start
    )


# -- d-efficiency ----------------------------------------------------------------


def _sweep(feas: _Feasibility, p: np.ndarray, order: Sequence[int], tol: float) -> np.ndarray:
    p = p.copy()
    for j in order:
        p[j] = feas.lower_coordinate(p, j, tol)
    return p


def _polish(feas: _Feasibility, p: np.ndarray, k: int, tol: float, rounds: int = 3) -> np.ndarray:
    """Trade uncounted coordinates for counted ones when ``K < N``.

    Raises the ``N - K`` smallest coordinates to the ``K``-th largest value
    (which leaves the objective unchanged) and re-lowers the counted ones.
    """
    n = p.size
    if k >= n:
        return p
    best = p
    for _ in range(rounds):
        order = np.argsort(-best, kind="stable")
        top, rest = order[:k], order[k:]
        level = best[top[-1]]
        trial = best.copy()
        trial[rest] = np.maximum(trial[rest], level)
        trial = _sweep(feas, trial, list(top) + list(rest), tol)
        if top_k_sum(trial, k) < top_k_sum(best, k) - tol:
            best = trial
        else:
            break
    return best


def _d_search(
    feas: _Feasibility,
    k: int,
    tol: float,
    rng: np.random.Generator,
    ray_starts: int,
    hints: Sequence[np.ndarray] = (),
) -> np.ndarray:
    n = feas.n
    ones = np.ones(n)
    candidates: list[tuple[np.ndarray, list[int]]] = [
        (ones, list(range(n))),
        (ones, list(range(n))[::-1]),
    ]
    for h in hints:
        h = np.clip(np.asarray(h, dtype=float), 0.0, 1.0)
        if feas.feasible(h):
            candidates.append((h, list(np.argsort(-h, kind="stable"))))
    for _ in range(ray_starts if n > 1 else 0):
        target = rng.uniform(0.0, 1.0, n)
        candidates.append((feas.shoot(target, tol), list(rng.permutation(n))))
    best, best_val = None, np.inf
    for start, order in candidates:
        p = _polish(feas, _sweep(feas, start, order, tol), k, tol)
        val = top_k_sum(p, k)
        if val < best_val:
            best, best_val = p, val
    return best


def d_efficiency(
    s: MultiModeState,
    K: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
    seed: int | None = 0,
    hints: Sequence[np.ndarray] = (),
) -> EfficiencyResult:
    """Smallest sum of the ``K`` largest per-mode transmissivities explaining ``s`` by independent loss.

    ``hints`` are optional transmissivity vectors; feasible ones are used as
    extra starting points.
    """
    start = time.perf_counter()
    k = _check_k(s, K)
    _check_normalized(s, tol.psd_tol)
    feas = _Feasibility(s.matrix, s.num_modes, s.cutoff + 1, tol.psd_tol)
    if not feas.feasible(np.ones(s.num_modes)):
        raise InfeasibleStateError("state is not positive semidefinite")
    rng = np.random.default_rng(seed)
    p = _d_search(feas, k, tol.bisect_tol, rng, tol.ray_starts, hints)
    cert = _certificate(s, np.eye(s.num_modes, dtype=np.complex128), p, k, tol.psd_tol)
    return EfficiencyResult(
        "d", k, cert.value, EXACT, cert, tol, seed=seed, wall_time=time.perf_counter() - start
    )


# -- s-efficiency ----------------------------------------------------------------


def s_efficiency(s: MultiModeState, K: int, tol: Tolerances = DEFAULT_TOLERANCES) -> EfficiencyResult:
    """Sum of the ``K`` largest single-mode efficiencies of the reduced states."""
    start = time.perf_counter()
    k = _check_k(s, K)
    per_mode = np.array(
        [single_mode_efficiency(partial_trace(s, [j]), tol).value for j in range(s.num_modes)]
    )
    return EfficiencyResult(
        "s",
        k,
        top_k_sum(per_mode, k),
        EXACT,
        None,
        tol,
        per_mode=per_mode,
        wall_time=time.perf_counter() - start,
    )


# -- u-efficiency ----------------------------------------------------------------


def _hermitian(x: np.ndarray, n: int) -> np.ndarray:
    h = np.zeros((n, n), dtype=np.complex128)
    h[np.diag_indices(n)] = x[:n]
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    h[iu] = x[n : n + m] + 1j * x[n + m : n + 2 * m]
    return h + np.triu(h, 1).conj().T


def _chart(w0: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = w0.shape[0]
    return w0 @ expm(1j * _hermitian(x, n))


def _relaxed_objective(s: MultiModeState, w: np.ndarray, k: int, psd_tol: float, bisect_tol: float) -> float:
    """Cheap d-efficiency surrogate of ``w^dag s w`` (one sweep in each direction)."""
    rotated = apply_interferometer(s, w.conj().T)
    feas = _Feasibility(rotated.matrix, s.num_modes, s.cutoff + 1, psd_tol)
    n = s.num_modes
    ones = np.ones(n)
    if not feas.feasible(ones):
        return float(k) + 1.0
    forward = top_k_sum(_sweep(feas, ones, range(n), bisect_tol), k)
    backward = top_k_sum(_sweep(feas, ones, range(n - 1, -1, -1), bisect_tol), k)
    return min(forward, backward)


def _search_unitary(
    s: MultiModeState, k: int, w0: np.ndarray, tol: Tolerances
) -> np.ndarray:
    n = s.num_modes
    w = w0
    step = 0.5
    for stage_tol in ANNEAL_SCHEDULE:
        bisect = max(tol.bisect_tol, stage_tol * 1e-2)

        def f(x, w=w, stage_tol=stage_tol, bisect=bisect):
            return _relaxed_objective(s, _chart(w, x), k, stage_tol, bisect)

        x0 = np.zeros(n * n)
        simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(n * n)])
        res = minimize(
            f,
            x0,
            method="Nelder-Mead",
            options={"maxfev": tol.maxfev, "initial_simplex": simplex, "xatol": 1e-12, "fatol": 1e-12},
        )
        w = _chart(w, res.x)
        step *= 0.1
    return w


def u_efficiency_upper(
    s: MultiModeState,
    K: int,
    tol: Tolerances = DEFAULT_TOLERANCES,
    seed: int | None = 0,
    starts: Sequence[np.ndarray] = (),
    hints: Sequence[np.ndarray] = (),
) -> EfficiencyResult:
    """Upper bound on the interferometer-optimized efficiency.

    Searches ``W = W_start expm(iH)`` with Nelder-Mead from the identity,
    any caller-supplied ``starts`` and ``restarts - 1`` Haar-random
    unitaries. Each candidate is re-evaluated with the strict d-efficiency
    of ``W^dag s W``; the identity start makes the result never exceed
    :func:`d_efficiency` with the same tolerances and seed. Requires the
    cutoff to cover the largest total photon number, since interferometers
    are only exact there.
    """
    begin = time.perf_counter()
    k = _check_k(s, K)
    _check_normalized(s, tol.psd_tol)
    n = s.num_modes
    if s.max_total_photons() > s.cutoff:
        raise ConfigurationError(
            f"state has up to {s.max_total_photons()} photons but cutoff {s.cutoff}; "
            "raise the cutoff so interferometers act exactly"
        )
    identity = np.eye(n, dtype=np.complex128)
    base = d_efficiency(s, k, tol, seed, hints)
    if n == 1:
        return replace(base, measure="u", bound_type=UPPER, wall_time=time.perf_counter() - begin)

    rng = np.random.default_rng(seed)
    start_list = [identity] + [as_mode_unitary(w) for w in starts]
    start_list += [haar_random(n, rng) for _ in range(tol.restarts - 1)]

    best_val, best_cert, best_index = base.value, base.certificate, 0
    for index, w0 in enumerate(start_list):
        w = _search_unitary(s, k, w0, tol)
        rotated = apply_interferometer(s, w.conj().T)
        try:
            res = d_efficiency(rotated, k, tol, seed)
        except InfeasibleStateError:
            continue
        log.debug("u-efficiency start %d: %.9f", index, res.value)
        if res.value < best_val:
            best_val = res.value
            best_cert = replace(res.certificate, W=w)
            best_index = index
    return EfficiencyResult(
        "u",
        k,
        best_val,
        UPPER,
        best_cert,
        tol,
        seed=seed,
        wall_time=time.perf_counter() - begin,
        details={"best_start": best_index, "starts": len(start_list)},
    )


def transform_certificate(c: EfficiencyCertificate, u: np.ndarray) -> EfficiencyCertificate:
    """Certificate for ``u rho u^dag`` obtained by composing ``u`` onto ``W``."""
    u = as_mode_unitary(u)
    return replace(c, W=u @ c.W)


def efficiency(
    s: MultiModeState,
    measure: str,
    K: int = 1,
    tol: Tolerances = DEFAULT_TOLERANCES,
    seed: int | None = 0,
) -> EfficiencyResult:
    """Dispatch on ``measure`` in ``{"single", "d", "s", "u"}``."""
    if measure == "single":
        return single_mode_efficiency(s, tol)
    if measure == "d":
        return d_efficiency(s, K, tol, seed)
    if measure == "s":
        return s_efficiency(s, K, tol)
    if measure == "u":
        return u_efficiency_upper(s, K, tol, seed)
    raise ConfigurationError(f"unknown measure {measure!r}; expected one of {MEASURES}")

