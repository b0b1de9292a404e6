"""Action-based Lagrangian descriptors for Hamiltonian and stochastic systems."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    Duffing,
    Equilibrium,
    Harmonic,
    PhaseState,
    ProtonTransfer,
    Saddle,
    harmonic_forward_ld_closed_form,
    kinetic_energy,
    proton_transfer_equilibria,
    saddle_G,
    saddle_analytic_flow,
    saddle_backward_ld_closed_form,
    saddle_convergence_time,
    saddle_forward_ld_closed_form,
    saddle_total_ld_closed_form,
    total_energy,
    vector_field,
)
from .integrate import (  # noqa: F401
    IntegrationResult,
    IntegratorConfig,
    WienerPath,
    integrate_deterministic,
    integrate_stochastic_em,
    sample_wiener_path,
)
from .ld import (  # noqa: F401
    EnsembleSpec,
    FieldSet,
    LDParams,
    LDValue,
    ScalarField,
    ld_backward,
    ld_field,
    ld_forward,
    ld_time_average,
    ld_total,
    stochastic_ld_field,
    time_average_field,
)
from .sections import (  # noqa: F401
    Axis,
    CrossingSet,
    SectionGrid,
    SectionSpec,
    build_grid,
    lift_to_energy_surface,
    poincare_map,
    poincare_map_batch,
)
from .analysis import (  # noqa: F401
    FeatureSet,
    FrequencyEstimate,
    TorusReport,
    average_fields,
    extract_singular_features,
    find_local_minima,
    frequency_from_series,
    g_series,
    normalize_field,
    sample_bilinear,
    torus_consistency,
)
