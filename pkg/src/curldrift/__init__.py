"""curldrift: Monte Carlo and analytic toolkit for a Brownian tracer in the
curl of the mollified 2D Gaussian free field."""

__version__ = "0.1.0"

from .analytic import (
    AnalyticTable,
    EffectiveDiffusivity,
    chaos_weight_table,
    effective_diffusivity,
    enhancement_limit,
    enhancement_table,
    identity_suite,
    laplace_limit,
    log_rescale,
    truncated_limit,
    variance_sum,
    variance_sum_limit,
)
from .field import (
    GridSpec,
    SpectralField,
    derive_grid,
    empirical_covariance,
    eval_field,
    load_field,
    sample_field,
    save_field,
    theoretical_covariance,
)
from .mollifier import MollifierSpec, make_mollifier
from .params import ModelParams
from .resolvent import (
    QuadratureSpec,
    ResolventValue,
    base_diffusivity,
    laplace_comparator,
    replacement_residual,
    truncated_diffusivity,
)
from .sde import (
    MomentEstimate,
    SimSchedule,
    Trajectory,
    annealed_moments,
    derive_dt,
    make_schedule,
    simulate_path,
    superdiffusivity_scan,
    weak_coupling_sweep,
)
