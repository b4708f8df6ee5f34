"""Measurement analysis for superconducting microwave resonators and
transmon qubits: hanger-mode transmission fits, TLS/quasiparticle loss
decomposition, kinetic-inductance and penetration-depth extraction,
surface-loss regression, and qubit coherence statistics, with forward
simulators for every inverse fit.
"""

from .core import (
    CONSTANTS,
    ComplexTrace,
    Measurement,
    PhysicalConstants,
    QubitRecord,
    ResonatorRecord,
    SuperconductorParams,
    delta0_from_tc,
    validate_trace,
)
from .errors import (
    DataFormatError,
    DomainError,
    FitError,
    ResqfitError,
    ValidationError,
)
from .kinetic import (
    alpha_from_freqs,
    alpha_model,
    fit_g_factor,
    fit_kappa_envelope,
    fit_lambda,
    lambda_dirty,
    sheet_lk_from_resonator,
    sigma2,
)
from .loss import (
    AttenuationChain,
    LossFit,
    LossGridPoint,
    fit_loss_grid,
    photons_from_power,
    q_qp,
    q_tls,
    q_total,
)
from .qubit import (
    CoherenceStats,
    DecayFit,
    DecayTrace,
    build_stats,
    ej_from_transmon,
    fit_exp_decay,
    fit_ramsey,
    q_bar,
    qp_fraction,
    t_phi,
)
from .s21 import (
    HpdPlan,
    ResonanceFit,
    fit_s21,
    nonlinearity_screen,
    plan_hpd,
    q_int,
    s21_model,
    seed_chain,
)
from .surface import (
    TanDeltaFit,
    XpsInput,
    fit_tan_delta,
    implied_tan_delta,
    ma_excess_fraction,
    oxide_thickness,
    surface_limited_q,
)

__version__ = "0.1.0"
