"""Loss-based efficiency measures for multimode bosonic states in truncated Fock space."""

from loeff.channels import (
    MeasurementSpec,
    as_loss_vector,
    inverse_loss_channel,
    inverse_multimode_loss,
    loss_channel,
    multimode_loss,
    outcome_probabilities,
    postselect,
    project,
)
from loeff.decomposition import (
    ProofTrace,
    averaged_transmissivities,
    block_svd,
    is_doubly_stochastic,
    majorization_slack,
    output_transmissivities,
    rq_decompose,
    weak_majorization_holds,
)
from loeff.efficiency import (
    EfficiencyCertificate,
    EfficiencyResult,
    Tolerances,
    d_efficiency,
    efficiency,
    s_efficiency,
    single_mode_efficiency,
    transform_certificate,
    u_efficiency_upper,
)
from loeff.errors import (
    ConfigurationError,
    DimensionGuardError,
    ImpossibleOutcomeError,
    InfeasibleStateError,
    LoeffError,
    NumericalError,
    NumericallySingularError,
)
from loeff.fock import (
    MultiModeState,
    TruncationSpec,
    coherent,
    min_eigenvalue,
    mixture,
    partial_trace,
    permute_modes,
    pure,
    tensor,
    thermal,
    vacuum,
)
from loeff.harness import (
    BUILTIN_SUITES,
    Scenario,
    ScenarioReport,
    catalysis_experiment,
    run_all_outcomes,
    run_scenario,
    sweep,
)
from loeff.interferometer import (
    apply_interferometer,
    beamsplitter,
    haar_random,
    lift_interferometer,
    mesh_decompose,
    phase,
)

__version__ = "0.1.0"
