"""JSON scenario files: schema, validation and resolution into library objects.

A file names states, interferometers, loss vectors and measurements, and
lists requests (efficiency computations, scenario runs, sweeps). Complex
numbers are ``[re, im]`` pairs and modes are numbered from 0. Unknown
fields and unknown versions are rejected.

Example::

    {
      "version": "1",
      "truncation": {"num_modes": 2, "cutoff": 1},
      "states": {
        "psi": {"fock": [1, 0]},
        "psi_prime": {"apply": {"state": {"ref": "psi"}, "interferometer": {"ref": "bs"}}}
      },
      "interferometers": {"bs": {"beamsplitter": {"theta": -0.7853981633974483}}},
      "requests": [{"kind": "efficiency", "name": "es", "state": "psi_prime", "measure": "s", "K": 1}]
    }
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from loeff.fock import MultiModeState, coherent, fock, mixture, pure, tensor, thermal
from loeff.channels import MeasurementSpec, as_loss_vector, multimode_loss
from loeff.efficiency import Tolerances
from loeff.errors import ConfigurationError
from loeff.harness import SWEEP_KINDS, Scenario, random_scenario
from loeff.interferometer import apply_interferometer, as_mode_unitary, beamsplitter, haar_random, phase

SCHEMA_VERSION = "1"

Complex = tuple[float, float]
Matrix = list[list[Complex]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# -- states --------------------------------------------------------------------


class FockNode(_Strict):
    fock: list[Annotated[int, Field(ge=0)]]


class CoherentNode(_Strict):
    coherent: list[Complex]


class ThermalNode(_Strict):
    thermal: list[Annotated[float, Field(ge=0)]]


class PureTerm(_Strict):
    n: list[Annotated[int, Field(ge=0)]]
    amp: Complex


class PureNode(_Strict):
    pure: list[PureTerm]


class MixtureTerm(_Strict):
    weight: Annotated[float, Field(ge=0)]
    state: "StateNode"


class MixtureNode(_Strict):
    mixture: list[MixtureTerm]


class TensorNode(_Strict):
    tensor: list["StateNode"]


class RefNode(_Strict):
    ref: str


class LossArgs(_Strict):
    state: "StateNode"
    p: list[float]


class LossNode(_Strict):
    loss: LossArgs


class ApplyArgs(_Strict):
    state: "StateNode"
    interferometer: "InterferometerNode"


class ApplyNode(_Strict):
    apply: ApplyArgs


StateNode = Union[FockNode, CoherentNode, ThermalNode, PureNode, MixtureNode, TensorNode, RefNode, LossNode, ApplyNode]


# -- interferometers ----------------------------------------------------------------


class MatrixNode(_Strict):
    matrix: Matrix


class BeamsplitterArgs(_Strict):
    theta: float
    phi: float = 0.0
    modes: tuple[int, int] = (0, 1)
    num_modes: Optional[int] = None


class BeamsplitterNode(_Strict):
    beamsplitter: BeamsplitterArgs


class PhaseArgs(_Strict):
    mode: int
    phi: float
    num_modes: Optional[int] = None


class PhaseNode(_Strict):
    phase: PhaseArgs


class HaarArgs(_Strict):
    seed: int
    num_modes: Optional[int] = None


class HaarNode(_Strict):
    haar_random: HaarArgs


class IdentityArgs(_Strict):
    num_modes: Optional[int] = None


class IdentityNode(_Strict):
    identity: IdentityArgs


class ComposeNode(_Strict):
    compose: list["InterferometerNode"]


InterferometerNode = Union[MatrixNode, BeamsplitterNode, PhaseNode, HaarNode, IdentityNode, ComposeNode, RefNode]


# -- measurements, tolerances, requests --------------------------------------------


class MeasurementModel(_Strict):
    modes: list[int]
    outcome: Optional[list[int]] = None
    effect: Optional[Matrix] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.outcome is None) == (self.effect is None):
            raise ValueError("give exactly one of 'outcome' or 'effect'")
        return self


class ToleranceModel(_Strict):
    bisect_tol: float = 1e-6
    psd_tol: float = 1e-9
    recon_tol: float = 1e-8
    restarts: int = 8
    maxfev: int = 300
    ray_starts: int = 4


class TruncationModel(_Strict):
    num_modes: Annotated[int, Field(ge=1)] = 1
    cutoff: Annotated[int, Field(ge=0)]


class EfficiencyRequest(_Strict):
    kind: Literal["efficiency"]
    name: str
    state: str
    measure: Literal["single", "d", "s", "u"]
    K: Annotated[int, Field(ge=1)] = 1


class ScenarioRequest(_Strict):
    """A scenario spelled out in full, or a seeded random one (``random_seed``)."""

    kind: Literal["scenario"]
    name: str
    rho0: Optional[str] = None
    loss: Optional[Union[str, list[float]]] = None
    random_seed: Optional[int] = None
    W: Optional[InterferometerNode] = None
    Y: Optional[InterferometerNode] = None
    measurement: Optional[Union[str, MeasurementModel]] = None
    K: Annotated[int, Field(ge=1)] = 1
    all_outcomes: bool = False

    @model_validator(mode="after")
    def _explicit_or_random(self):
        explicit = self.rho0 is not None and self.loss is not None
        if (self.random_seed is None) != explicit:
            raise ValueError("give either 'random_seed' or both 'rho0' and 'loss'")
        return self


class SweepRequest(_Strict):
    kind: Literal["sweep"]
    name: str
    sweep: Literal["theorem", "catalysis", "decomposition", "single-mode"]
    seeds: Union[list[int], Annotated[int, Field(ge=0)]] = 10
    num_modes: Optional[int] = None
    cutoff: Optional[int] = None
    max_modes: Optional[int] = None


Request = Annotated[Union[EfficiencyRequest, ScenarioRequest, SweepRequest], Field(discriminator="kind")]


class ScenarioFile(_Strict):
    version: Literal["1"]
    truncation: TruncationModel
    tolerances: ToleranceModel = ToleranceModel()
    seed: int = 0
    states: dict[str, StateNode] = {}
    interferometers: dict[str, InterferometerNode] = {}
    losses: dict[str, list[float]] = {}
    measurements: dict[str, MeasurementModel] = {}
    requests: list[Request] = []

    def request(self, name: str):
        for r in self.requests:
            if r.name == name:
                return r
        raise ConfigurationError(f"no request named {name!r}")

    def dump(self) -> dict:
        return self.model_dump(mode="json", exclude_unset=True)


for _model in (MixtureTerm, TensorNode, LossArgs, ApplyArgs, ComposeNode, ScenarioFile):
    _model.model_rebuild()


def parse(data: dict | str) -> ScenarioFile:
    """Validate a decoded JSON document (or JSON text)."""
    try:
        if isinstance(data, str):
            data = json.loads(data)
        if not isinstance(data, dict) or not data:
            raise ConfigurationError("scenario file must be a non-empty JSON object")
        if "version" in data and data["version"] != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported scenario file version {data['version']!r}; expected {SCHEMA_VERSION!r}")
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first["loc"])
        raise ConfigurationError(f"schema error at {loc or '<root>'}: {first['msg']} ({exc.error_count()} errors)") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}") from exc


def load(path: str | Path) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ConfigurationError(f"{path} is empty")
    return parse(text)


def _complex_matrix(m: Matrix) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in m], dtype=np.complex128)


class Resolver:
    """Turns named entries of a :class:`ScenarioFile` into library objects."""

    def __init__(self, spec: ScenarioFile, cutoff: int | None = None, tolerance_overrides: dict | None = None):
        self.spec = spec
        self.cutoff = spec.truncation.cutoff if cutoff is None else cutoff
        self.num_modes = spec.truncation.num_modes
        tol = spec.tolerances.model_dump()
        tol.update({k: v for k, v in (tolerance_overrides or {}).items() if v is not None})
        self.tolerances = Tolerances(**tol)
        self._states: dict[str, MultiModeState] = {}
        self._resolving: set[str] = set()

    # states
    def state(self, name: str) -> MultiModeState:
        if name in self._states:
            return self._states[name]
        if name not in self.spec.states:
            raise ConfigurationError(f"unknown state {name!r}")
        if name in self._resolving:
            raise ConfigurationError(f"state {name!r} refers to itself")
        self._resolving.add(name)
        try:
            s = self.build_state(self.spec.states[name])
        finally:
            self._resolving.discard(name)
        self._states[name] = s
        return s

    def build_state(self, node) -> MultiModeState:
        c = self.cutoff
        if isinstance(node, RefNode):
            return self.state(node.ref)
        if isinstance(node, FockNode):
            return fock(node.fock, c)
        if isinstance(node, CoherentNode):
            return coherent([complex(re, im) for re, im in node.coherent], c)
        if isinstance(node, ThermalNode):
            return thermal(node.thermal, c)
        if isinstance(node, PureNode):
            amps: dict[tuple[int, ...], complex] = {}
            for term in node.pure:
                key = tuple(term.n)
                amps[key] = amps.get(key, 0) + complex(*term.amp)
            return pure(amps, c)
        if isinstance(node, MixtureNode):
            return mixture([(t.weight, self.build_state(t.state)) for t in node.mixture])
        if isinstance(node, TensorNode):
            parts = [self.build_state(n) for n in node.tensor]
            if not parts:
                raise ConfigurationError("tensor needs at least one factor")
            return tensor(*parts) if len(parts) > 1 else parts[0]
        if isinstance(node, LossNode):
            s = self.build_state(node.loss.state)
            return multimode_loss(s, node.loss.p)
        if isinstance(node, ApplyNode):
            s = self.build_state(node.apply.state)
            return apply_interferometer(s, self.interferometer(node.apply.interferometer, s.num_modes))
        raise ConfigurationError(f"unsupported state node {node!r}")

    # interferometers
    def interferometer(self, node, num_modes: int | None = None) -> np.ndarray:
        n = num_modes or self.num_modes
        if node is None:
            return np.eye(n, dtype=np.complex128)
        if isinstance(node, str):
            node = RefNode(ref=node)
        if isinstance(node, RefNode):
            if node.ref not in self.spec.interferometers:
                raise ConfigurationError(f"unknown interferometer {node.ref!r}")
            return self.interferometer(self.spec.interferometers[node.ref], num_modes)
        if isinstance(node, MatrixNode):
            return as_mode_unitary(_complex_matrix(node.matrix))
        if isinstance(node, BeamsplitterNode):
            a = node.beamsplitter
            return beamsplitter(a.theta, a.phi, a.modes, a.num_modes or n)
        if isinstance(node, PhaseNode):
            a = node.phase
            return phase(a.mode, a.phi, a.num_modes or n)
        if isinstance(node, HaarNode):
            return haar_random(node.haar_random.num_modes or n, node.haar_random.seed)
        if isinstance(node, IdentityNode):
            return np.eye(node.identity.num_modes or n, dtype=np.complex128)
        if isinstance(node, ComposeNode):
            mats = [self.interferometer(x, num_modes) for x in node.compose]
            if not mats:
                raise ConfigurationError("compose needs at least one element")
            out = mats[0]
            for m in mats[1:]:
                if m.shape != out.shape:
                    raise ConfigurationError("composed interferometers act on different numbers of modes")
                out = out @ m
            return out
        raise ConfigurationError(f"unsupported interferometer node {node!r}")

    def loss(self, ref: str | list[float], num_modes: int) -> np.ndarray:
        if isinstance(ref, str):
            if ref not in self.spec.losses:
                raise ConfigurationError(f"unknown loss vector {ref!r}")
            ref = self.spec.losses[ref]
        return as_loss_vector(ref, num_modes)

    def measurement(self, ref: str | MeasurementModel | None) -> MeasurementSpec | None:
        if ref is None:
            return None
        if isinstance(ref, str):
            if ref not in self.spec.measurements:
                raise ConfigurationError(f"unknown measurement {ref!r}")
            ref = self.spec.measurements[ref]
        if ref.outcome is not None:
            return MeasurementSpec(tuple(ref.modes), outcome=tuple(ref.outcome))
        return MeasurementSpec(tuple(ref.modes), effect=_complex_matrix(ref.effect))

    def scenario(self, req: ScenarioRequest) -> Scenario:
        if req.random_seed is not None:
            return random_scenario(req.random_seed, self.num_modes, self.cutoff)
        rho0 = self.state(req.rho0)
        n = rho0.num_modes
        return Scenario(
            rho0=rho0,
            p=self.loss(req.loss, n),
            W=self.interferometer(req.W, n),
            Y=self.interferometer(req.Y, n),
            measurement=self.measurement(req.measurement),
            K=req.K,
            seed=self.spec.seed,
        )

    def sweep_params(self, req: SweepRequest) -> tuple[str, list[int], dict]:
        if req.sweep not in SWEEP_KINDS:
            raise ConfigurationError(f"unknown sweep {req.sweep!r}")
        seeds = list(range(self.spec.seed, self.spec.seed + req.seeds)) if isinstance(req.seeds, int) else req.seeds
        params = {k: v for k, v in (("num_modes", req.num_modes), ("cutoff", req.cutoff), ("max_modes", req.max_modes)) if v is not None}
        return req.sweep, seeds, params
