"""Randomized checks that linear-optical processing cannot raise efficiency.

A scenario generates a state by loss and an interferometer, processes it
with a second interferometer and a postselected measurement, and then
certifies a bound on the output efficiency constructively: after the
interferometer ``X`` from :func:`loeff.decomposition.output_transmissivities`,
inverting loss with the output transmissivities ``p''`` must leave a
positive operator.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from loeff.channels import (
    MeasurementSpec,
    as_loss_vector,
    inverse_multimode_loss,
    multimode_loss,
    postselect,
)
from loeff.decomposition import (
    ProofTrace,
    averaged_transmissivities,
    majorization_slack,
    output_transmissivities,
    top_k_sum,
)
from loeff.efficiency import Tolerances, single_mode_efficiency
from loeff.errors import ConfigurationError
from loeff.fock import MultiModeState, TruncationSpec, fock, min_eigenvalue, mixture, partial_trace, tensor
from loeff.interferometer import apply_interferometer, as_mode_unitary, haar_random, permutation_unitary

log = logging.getLogger(__name__)

PSD_TOL = 1e-9
BOUND_TOL = 1e-9
VIOLATION_SLACK = 1e-6
MIN_OUTCOME_PROB = 1e-6
# output transmissivities below this are treated as complete loss (mode must be vacuum)
ZERO_TRANSMISSIVITY = 1e-12


@dataclass(frozen=True, eq=False)
class Scenario:
    """Generation ``W E_p(rho0)`` followed by processing ``Y`` and a measurement.

    ``measurement=None`` keeps every mode.
    """

    rho0: MultiModeState
    p: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    measurement: MeasurementSpec | None
    K: int
    seed: int | None = None

    def __post_init__(self):
        n = self.rho0.num_modes
        object.__setattr__(self, "p", as_loss_vector(self.p, n))
        for name in ("W", "Y"):
            u = as_mode_unitary(getattr(self, name))
            if u.shape[0] != n:
                raise ConfigurationError(f"{name} acts on {u.shape[0]} modes, state has {n}")
            object.__setattr__(self, name, u)
        if not 1 <= self.K <= self.kept_count:
            raise ConfigurationError(f"K={self.K} must lie in [1, M={self.kept_count}]")

    @property
    def num_modes(self) -> int:
        return self.rho0.num_modes

    @property
    def measured_modes(self) -> tuple[int, ...]:
        return () if self.measurement is None else self.measurement.measured_modes

    @property
    def kept_modes(self) -> list[int]:
        return [j for j in range(self.num_modes) if j not in self.measured_modes]

    @property
    def kept_count(self) -> int:
        return len(self.kept_modes)

    def with_outcome(self, outcome: Sequence[int]) -> Scenario:
        m = MeasurementSpec(self.measured_modes, outcome=tuple(outcome))
        return Scenario(self.rho0, self.p, self.W, self.Y, m, self.K, self.seed)


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    scenario: Scenario
    input_state: MultiModeState
    output_state: MultiModeState
    probability: float
    trace: ProofTrace
    input_sum: float
    certified_bound: float
    margin: float
    bounds_by_k: dict[int, tuple[float, float]] = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.input_sum - self.certified_bound

    @property
    def bound_holds(self) -> bool:
        return all(inp - out >= -BOUND_TOL for out, inp in self.bounds_by_k.values())

    @property
    def certificate_holds(self) -> bool:
        return self.margin >= -PSD_TOL

    @property
    def ok(self) -> bool:
        return self.bound_holds and self.certificate_holds

    @property
    def outcome(self) -> tuple[int, ...] | None:
        m = self.scenario.measurement
        return None if m is None else m.outcome

    def conclusions(self) -> dict[str, bool]:
        return {
            "bound_holds": self.bound_holds,
            "certificate_holds": self.certificate_holds,
            "no_increase": self.ok,
        }


def generate_input(sc: Scenario) -> MultiModeState:
    return apply_interferometer(multimode_loss(sc.rho0, sc.p), sc.W)


def _constructive_margin(out: MultiModeState, x_block: np.ndarray, p_out: np.ndarray) -> float:
    """Min eigenvalue after undoing loss ``p_out`` on ``X rho_out X^dag``."""
    rotated = apply_interferometer(out, x_block)
    dead = [k for k, pk in enumerate(p_out) if pk < ZERO_TRANSMISSIVITY]
    p_eff = np.array([1.0 if pk < ZERO_TRANSMISSIVITY else pk for pk in p_out])
    inv = inverse_multimode_loss(rotated, p_eff)
    margin = min_eigenvalue(inv)
    if dead:
        # complete loss is only consistent with vacuum in those modes
        excited = 1.0 - float(partial_trace(rotated, dead).photon_distribution()[0])
        if excited > PSD_TOL:
            margin = min(margin, -excited)
    return margin


def run_scenario(sc: Scenario, prob_floor: float = 1e-12) -> ScenarioReport:
    """Process the generated state and certify the output bound constructively."""
    if sc.rho0.max_total_photons() > sc.rho0.cutoff:
        raise ConfigurationError(
            f"rho0 carries up to {sc.rho0.max_total_photons()} photons; cutoff {sc.rho0.cutoff} is too small"
        )
    rho = generate_input(sc)
    processed = apply_interferometer(rho, sc.Y)
    if sc.measurement is None:
        out, prob = processed, 1.0
    else:
        out, prob = postselect(processed, sc.measurement, prob_floor)
    order = sc.kept_modes + list(sc.measured_modes)
    u = permutation_unitary(order) @ sc.Y @ sc.W
    m = sc.kept_count
    trace = output_transmissivities(u, sc.p, m, sc.K)
    margin = _constructive_margin(out, trace.X_block, trace.p_out)
    bounds = {k: (float(np.sum(trace.p_out[:k])), top_k_sum(sc.p, k)) for k in range(1, m + 1)}
    return ScenarioReport(
        scenario=sc,
        input_state=rho,
        output_state=out,
        probability=prob,
        trace=trace,
        input_sum=top_k_sum(sc.p, sc.K),
        certified_bound=trace.certified_bound,
        margin=margin,
        bounds_by_k=bounds,
    )


def run_all_outcomes(sc: Scenario, min_prob: float = MIN_OUTCOME_PROB) -> list[ScenarioReport]:
    """Run ``sc`` for every Fock outcome on its measured modes with probability at least ``min_prob``."""
    if sc.measurement is None:
        return [run_scenario(sc)]
    processed = apply_interferometer(generate_input(sc), sc.Y)
    meas = sc.measured_modes
    marginal = partial_trace(processed, meas).photon_distribution()
    reports = []
    for idx, outcome in enumerate(itertools.product(range(sc.rho0.cutoff + 1), repeat=len(meas))):
        if marginal[idx] >= min_prob:
            reports.append(run_scenario(sc.with_outcome(outcome)))
    return reports


# -- random scenarios ----------------------------------------------------------


def random_fock_bounded_state(
    rng: np.random.Generator, num_modes: int, cutoff: int, max_photons: int | None = None, rank: int | None = None
) -> MultiModeState:
    """Random mixture of random pure states supported on total photon number ``<= max_photons``."""
    max_photons = cutoff if max_photons is None else max_photons
    trunc = TruncationSpec(num_modes, cutoff)
    support = [i for i, ns in enumerate(trunc.basis()) if sum(ns) <= max_photons]
    rank = int(rng.integers(1, 4)) if rank is None else rank
    weights = rng.dirichlet(np.ones(rank))
    mat = np.zeros((trunc.dim, trunc.dim), dtype=np.complex128)
    for w in weights:
        vec = np.zeros(trunc.dim, dtype=np.complex128)
        vec[support] = rng.standard_normal(len(support)) + 1j * rng.standard_normal(len(support))
        vec /= np.linalg.norm(vec)
        mat += w * np.outer(vec, vec.conj())
    return MultiModeState(trunc, mat)


def random_scenario(seed: int, num_modes: int = 3, cutoff: int = 3) -> Scenario:
    """Haar interferometers, uniform losses, a random non-empty proper measured subset and a Fock outcome.

    The outcome is drawn from the outcome distribution so it is never
    impossible.
    """
    rng = np.random.default_rng(seed)
    rho0 = random_fock_bounded_state(rng, num_modes, cutoff)
    p = rng.uniform(0.0, 1.0, num_modes)
    w = haar_random(num_modes, rng)
    y = haar_random(num_modes, rng)
    n_meas = int(rng.integers(1, num_modes)) if num_modes > 1 else 0
    measured = tuple(sorted(rng.choice(num_modes, size=n_meas, replace=False).tolist()))
    m = num_modes - n_meas
    k = int(rng.integers(1, m + 1))
    if not measured:
        return Scenario(rho0, p, w, y, None, k, seed)
    sc = Scenario(rho0, p, w, y, MeasurementSpec(measured, outcome=(0,) * n_meas), k, seed)
    processed = apply_interferometer(generate_input(sc), y)
    probs = partial_trace(processed, measured).photon_distribution()
    probs = np.clip(probs, 0, None)
    idx = int(rng.choice(len(probs), p=probs / probs.sum()))
    outcome = np.unravel_index(idx, (cutoff + 1,) * n_meas)
    return sc.with_outcome(tuple(int(o) for o in outcome))


# -- catalysis -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CatalysisReport:
    input_efficiencies: np.ndarray
    output_efficiencies: np.ndarray
    probability: float
    slack: float
    outcome: tuple[int, ...] | None = None
    seed: int | None = None

    @property
    def holds(self) -> bool:
        return self.slack >= -VIOLATION_SLACK


def catalysis_experiment(
    inputs: Sequence[MultiModeState],
    Y: np.ndarray,
    measurement: MeasurementSpec | None,
    input_efficiencies: Sequence[float] | None = None,
    tol: Tolerances = Tolerances(bisect_tol=1e-9),
    seed: int | None = None,
) -> CatalysisReport:
    """Per-mode output efficiencies of processed product inputs, checked for weak majorization.

    ``input_efficiencies`` default to the computed single-mode efficiencies
    of ``inputs``.
    """
    if any(s.num_modes != 1 for s in inputs):
        raise ConfigurationError("catalysis inputs must be single-mode states")
    state = tensor(*inputs) if len(inputs) > 1 else inputs[0]
    if state.max_total_photons() > state.cutoff:
        raise ConfigurationError("cutoff must cover the total photon number of the inputs")
    if input_efficiencies is None:
        p_in = np.array([single_mode_efficiency(s, tol).value for s in inputs])
    else:
        p_in = np.asarray(input_efficiencies, dtype=float)
    processed = apply_interferometer(state, as_mode_unitary(Y))
    if measurement is None:
        out, prob = processed, 1.0
    else:
        out, prob = postselect(processed, measurement)
    p_out = np.array([single_mode_efficiency(partial_trace(out, [j]), tol).value for j in range(out.num_modes)])
    return CatalysisReport(
        input_efficiencies=p_in,
        output_efficiencies=p_out,
        probability=prob,
        slack=majorization_slack(p_out, p_in),
        outcome=None if measurement is None else measurement.outcome,
        seed=seed,
    )


def random_single_photon_source(rng: np.random.Generator, cutoff: int) -> tuple[MultiModeState, float]:
    """Random state on ``{|0>, |1>}`` and its exact efficiency.

    With populations ``(1-b, b)`` and coherence ``c`` the inverse loss at
    ``q`` is PSD iff ``q (b - |c|^2) >= b^2``, so the efficiency is
    ``b^2 / (b - |c|^2)``.
    """
    b = float(rng.uniform(0.05, 1.0))
    c_max = np.sqrt(b * (1 - b))
    c = float(rng.uniform(0, 0.9)) * c_max * np.exp(1j * rng.uniform(0, 2 * np.pi))
    mat = np.zeros((cutoff + 1, cutoff + 1), dtype=np.complex128)
    mat[0, 0], mat[1, 1] = 1 - b, b
    mat[0, 1], mat[1, 0] = np.conj(c), c
    return MultiModeState(TruncationSpec(1, cutoff), mat), b * b / (b - abs(c) ** 2)


def random_catalysis(seed: int, num_modes: int = 3, cutoff: int = 3) -> CatalysisReport:
    rng = np.random.default_rng(seed)
    pairs = [random_single_photon_source(rng, cutoff) for _ in range(num_modes)]
    inputs = [s for s, _ in pairs]
    y = haar_random(num_modes, rng)
    n_meas = int(rng.integers(1, num_modes))
    measured = tuple(sorted(rng.choice(num_modes, size=n_meas, replace=False).tolist()))
    processed = apply_interferometer(tensor(*inputs), y)
    probs = np.clip(partial_trace(processed, measured).photon_distribution(), 0, None)
    idx = int(rng.choice(len(probs), p=probs / probs.sum()))
    outcome = tuple(int(o) for o in np.unravel_index(idx, (cutoff + 1,) * n_meas))
    return catalysis_experiment(
        inputs,
        y,
        MeasurementSpec(measured, outcome=outcome),
        input_efficiencies=[e for _, e in pairs],
        seed=seed,
    )


def lossy_single_photon(p: float, cutoff: int = 1) -> MultiModeState:
    """``p |1><1| + (1-p) |0><0|``."""
    return mixture([(p, fock([1], cutoff)), (1 - p, fock([0], cutoff))])


# -- sweeps ------------------------------------------------------------------------

CSV_COLUMNS = ("seed", "N", "M", "K", "outcome", "probability", "bound", "input_sum", "slack", "margin")


@dataclass
class SweepReport:
    kind: str
    rows: list[dict] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r["violation"])

    @property
    def worst_slack(self) -> float | None:
        slacks = [r["slack"] for r in self.rows if r["slack"] is not None]
        return min(slacks) if slacks else None

    @property
    def worst_margin(self) -> float | None:
        margins = [r["margin"] for r in self.rows if r.get("margin") is not None]
        return min(margins) if margins else None

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "runs": len(self.rows),
            "violations": self.violations,
            "worst_slack": self.worst_slack,
            "worst_margin": self.worst_margin,
        }


def scenario_row(rep: ScenarioReport, seed: int | None = None) -> dict:
    """One CSV-style row for a scenario report."""
    sc = rep.scenario
    worst_k = min(inp - out for out, inp in rep.bounds_by_k.values())
    return {
        "seed": sc.seed if seed is None else seed,
        "N": sc.num_modes,
        "M": sc.kept_count,
        "K": sc.K,
        "outcome": rep.outcome,
        "probability": rep.probability,
        "bound": rep.certified_bound,
        "input_sum": rep.input_sum,
        "slack": rep.slack,
        "margin": rep.margin,
        "violation": bool(worst_k < -VIOLATION_SLACK or rep.margin < -PSD_TOL),
    }


def _scenario_rows(seed: int, num_modes: int, cutoff: int, all_outcomes: bool) -> list[dict]:
    sc = random_scenario(seed, num_modes, cutoff)
    reports = run_all_outcomes(sc) if all_outcomes else [run_scenario(sc)]
    return [scenario_row(rep, seed) for rep in reports]


def _catalysis_rows(seed: int, num_modes: int, cutoff: int) -> list[dict]:
    rep = random_catalysis(seed, num_modes, cutoff)
    return [
        {
            "seed": seed,
            "N": num_modes,
            "M": rep.output_efficiencies.size,
            "K": rep.output_efficiencies.size,
            "outcome": rep.outcome,
            "probability": rep.probability,
            "bound": float(np.sum(rep.output_efficiencies)),
            "input_sum": float(np.sum(np.sort(rep.input_efficiencies)[::-1][: rep.output_efficiencies.size])),
            "slack": rep.slack,
            "margin": None,
            "violation": not rep.holds,
        }
    ]


def _decomposition_rows(seed: int, max_modes: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_modes + 1))
    u = haar_random(n, rng)
    if rng.uniform() < 0.1:
        p = np.full(n, rng.uniform())
    else:
        p = rng.uniform(0.0, 1.0, n)
    m = int(rng.integers(1, n + 1))
    k = int(rng.integers(1, m + 1))
    tr = output_transmissivities(u, p, m, k)
    q = averaged_transmissivities(tr.Qdoubleprime, p)
    slack = min(tr.slack, majorization_slack(q, p))
    return [
        {
            "seed": seed,
            "N": n,
            "M": m,
            "K": k,
            "outcome": None,
            "probability": 1.0,
            "bound": tr.certified_bound,
            "input_sum": tr.input_sum,
            "slack": slack,
            "margin": None,
            "violation": bool(slack < -BOUND_TOL),
        }
    ]


def _single_mode_rows(seed: int, p: float) -> list[dict]:
    val = single_mode_efficiency(lossy_single_photon(p)).value
    return [
        {
            "seed": seed,
            "N": 1,
            "M": 1,
            "K": 1,
            "outcome": None,
            "probability": 1.0,
            "bound": val,
            "input_sum": p,
            "slack": p - val,
            "margin": None,
            "violation": bool(abs(val - p) > 1e-6),
        }
    ]


def _job(args: tuple) -> list[dict]:
    kind, seed, params = args
    if kind == "theorem":
        return _scenario_rows(seed, params.get("num_modes", 3), params.get("cutoff", 3), params.get("all_outcomes", True))
    if kind == "catalysis":
        return _catalysis_rows(seed, params.get("num_modes", 3), params.get("cutoff", 3))
    if kind == "decomposition":
        return _decomposition_rows(seed, params.get("max_modes", 50))
    if kind == "single-mode":
        grid = params.get("p_values", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
        return _single_mode_rows(seed, grid[seed % len(grid)])
    raise ConfigurationError(f"unknown sweep kind {kind!r}")


SWEEP_KINDS = ("theorem", "catalysis", "decomposition", "single-mode")


def sweep(kind: str, seeds: Iterable[int], jobs: int = 1, **params) -> SweepReport:
    """Run one job per seed and aggregate; rows come back in seed order regardless of ``jobs``."""
    if kind not in SWEEP_KINDS:
        raise ConfigurationError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")
    tasks = [(kind, int(s), params) for s in seeds]
    report = SweepReport(kind)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_job(t) for t in tasks]
    for rows in results:
        report.rows.extend(rows)
    return report


BUILTIN_SUITES: dict[str, Callable[..., SweepReport]] = {}


def _suite(name: str, kind: str, count: int, **params):
    def run(jobs: int = 1, seed: int = 0) -> SweepReport:
        return sweep(kind, range(seed, seed + count), jobs=jobs, **params)

    BUILTIN_SUITES[name] = run


_suite("decomposition-1000", "decomposition", 1000, max_modes=50)
_suite("catalysis-200", "catalysis", 200, num_modes=3, cutoff=3)
_suite("theorem-200", "theorem", 200, num_modes=3, cutoff=3)
_suite("single-mode-table", "single-mode", 9)
