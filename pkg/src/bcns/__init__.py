"""Spectral laboratory for dyadic frequency analysis and compressible-flow
model problems on a large periodic torus."""

from bcns.cns_iteration import (
    CNSParams,
    FlowStepper,
    FluidState,
    PressureLaw,
    affine_law,
    attach_weights,
    effective_velocity,
    gamma_law,
    picard_iterate,
    picard_iterate_weighted,
    rescale_state,
    source_f,
    source_g,
    source_weighted,
    step_nonlinear,
    weighted_effective_velocity,
)
from bcns.diagnostics import NormHistory, NormRecorder, compute_diagnostics
from bcns.linear_pde import (
    CoupledLinearProblem,
    DecayFit,
    EstimateCheck,
    TransportProblem,
    check_coupled_estimate,
    check_lame_estimate,
    check_transport_estimate,
    measure_decay,
    solve_coupled_linear,
    solve_lame_forced,
    solve_transport,
)
from bcns.littlewood_paley import (
    BesovParams,
    BesovReport,
    DyadicPartition,
    besov_norm,
    block,
    build_partition,
    low_sum,
    time_composite_norms,
    weighted_besov_norm,
)
from bcns.operators import (
    MultiplierSpec,
    apply_multiplier,
    bony_R,
    bony_T,
    compose_F,
    curlfree_Q,
    deformation_tensor,
    divergence,
    gradient,
    heat_semigroup,
    inv_neg_laplacian,
    lame_semigroup,
    laplacian,
    leray_P,
    scalarize_v,
)
from bcns.spectral_core import (
    FieldSeries,
    GridSpec,
    RealField,
    SpectralCoeffs,
    coordinate_weight,
    dealias,
    forward_transform,
    inverse_transform,
    lp_norm,
    read_field,
    resample_field,
    set_fft_workers,
    write_field,
)

__version__ = "0.1.0"
