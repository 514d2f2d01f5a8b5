"""Persistence of integrated random walks: harmonic functions and Monte Carlo checks."""
__version__ = "0.1.0"

from .specfun import (PrecisionLossWarning, SpecialFunctionError, gamma, kummer_m, tricomi_u,
                      u_oracle)
from .harmonic import (DerivativeOrder, HarmonicDomainError, PlanePoint, alpha, c_sequence, h_bound_check,
                       h_eval, h_partial)
from .rng import RNG_ALGORITHM, Stream
from .stats import McEstimate, Tally
from .diffusion import (DiffusionStep, bm_survival_asymptotic, exact_step, kappa, mc_bm_survival,
                        transition_density)
from .walk import (ExitSample, IncrementDistribution, SurvivalCurve, concentration_check, estimate_survival,
                   sample_increment, simulate_exit)
from .potential import (CorrectorSpec, InsufficientSurvivorsError, MartingaleProbe, QuadratureError,
                        amplitude_C, check_harmonicity, conditional_limit_sample, corrector_f,
                        estimate_V0_limit, estimate_V_series, martingale_exact, martingale_probe)

__all__ = [
    "__version__",
    "PrecisionLossWarning", "SpecialFunctionError", "gamma", "kummer_m", "tricomi_u", "u_oracle",
    "DerivativeOrder", "HarmonicDomainError", "PlanePoint", "alpha", "c_sequence", "h_bound_check",
    "h_eval", "h_partial",
    "RNG_ALGORITHM", "Stream", "McEstimate", "Tally",
    "DiffusionStep", "bm_survival_asymptotic", "exact_step", "kappa", "mc_bm_survival", "transition_density",
    "ExitSample", "IncrementDistribution", "SurvivalCurve", "concentration_check", "estimate_survival",
    "sample_increment", "simulate_exit",
    "CorrectorSpec", "InsufficientSurvivorsError", "MartingaleProbe", "QuadratureError", "amplitude_C",
    "check_harmonicity", "conditional_limit_sample", "corrector_f", "estimate_V0_limit", "estimate_V_series",
    "martingale_exact", "martingale_probe",
]
